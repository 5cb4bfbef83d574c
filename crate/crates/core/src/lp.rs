//! Dense tableau simplex for `max c'x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The origin is always feasible under `b >= 0`, so no phase one is needed.
//! Pivoting uses the largest reduced cost and switches to Bland's rule after
//! a degenerate pivot, which rules out cycling.

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum LpResult {
    Optimal { x: Vec<f64>, value: f64 },
    Unbounded,
}

pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> LpResult {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m);
    assert!(b.iter().all(|&v| v >= 0.0), "right-hand side must be non-negative");

    // rows 0..m are constraints, row m is the objective (reduced costs).
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        assert_eq!(a[i].len(), n);
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for j in 0..n {
        t[m][j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut bland = false;
    let max_pivots = 50 * (n + m).max(10);

    for _ in 0..max_pivots {
        let entering = if bland {
            (0..n + m).find(|&j| t[m][j] < -EPS)
        } else {
            (0..n + m)
                .filter(|&j| t[m][j] < -EPS)
                .min_by(|&x, &y| t[m][x].total_cmp(&t[m][y]))
        };
        let Some(col) = entering else {
            let mut x = vec![0.0; n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = t[i][width - 1];
                }
            }
            let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
            return LpResult::Optimal { x, value };
        };

        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[i][col];
            if aij > EPS {
                let ratio = t[i][width - 1] / aij;
                let better = match leave {
                    None => true,
                    Some((r, best)) => ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[r]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((row, ratio)) = leave else {
            return LpResult::Unbounded;
        };
        bland = ratio <= EPS;

        let p = t[row][col];
        for v in t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = t[row].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != row {
                let f = r[col];
                if f != 0.0 {
                    for (v, pv) in r.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        basis[row] = col;
    }
    panic!("simplex exceeded its pivot budget");
}
