//! Interior-point backend on Clarabel.
//!
//! Clarabel solves `min q'x  s.t.  A x + s = b, s in K`. A row expression
//! `e(x) = a'x + c` constrained to a cone maps to `A = -a`, `b = c`, so the
//! slack is the row value itself. Rotated cones are embedded in the standard
//! cone as `|(2 x, u - v)| <= u + v`.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use serde::{Deserialize, Serialize};

use super::{check_solution, Affine, ConeKind, ConicProgram, ConicSolution, ConstraintId, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: u32,
    /// Tolerance handed to the interior-point method.
    pub solver_tol: f64,
    /// Residual and gap bound a solution must meet to be reported optimal.
    pub contract_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            solver_tol: 1e-9,
            contract_tol: 1e-7,
        }
    }
}

fn embed(kind: ConeKind, rows: &[Affine]) -> Vec<Affine> {
    match kind {
        ConeKind::RotatedSoc => {
            let (u, v) = (rows[0].clone(), rows[1].clone());
            let mut out = vec![u.clone() + v.clone(), u - v];
            out.extend(rows[2..].iter().map(|r| r.clone() * 2.0));
            out
        }
        _ => rows.to_vec(),
    }
}

pub fn solve(prog: &ConicProgram, opts: &SolveOptions) -> ConicSolution {
    let n = prog.n_vars();
    let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    let mut spans = Vec::with_capacity(prog.constraints().len());
    for c in prog.constraints() {
        let rows = embed(c.kind, &c.rows);
        let len = rows.len();
        spans.push(b.len()..b.len() + len);
        for r in rows {
            let row = b.len();
            for (j, a) in &r.terms {
                ii.push(row);
                jj.push(*j);
                vv.push(-a);
            }
            b.push(r.constant);
        }
        let merged = match (c.kind, cones.last_mut()) {
            (ConeKind::Zero, Some(SupportedConeT::ZeroConeT(k))) => {
                *k += len;
                true
            }
            (ConeKind::NonNeg, Some(SupportedConeT::NonnegativeConeT(k))) => {
                *k += len;
                true
            }
            _ => false,
        };
        if !merged {
            cones.push(match c.kind {
                ConeKind::Zero => SupportedConeT::ZeroConeT(len),
                ConeKind::NonNeg => SupportedConeT::NonnegativeConeT(len),
                ConeKind::Soc | ConeKind::RotatedSoc => SupportedConeT::SecondOrderConeT(len),
            });
        }
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, ii, jj, vv);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    for (j, c) in &prog.objective().terms {
        q[*j] += c;
    }

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.solver_tol)
        .tol_gap_rel(opts.solver_tol)
        .tol_feas(opts.solver_tol)
        .max_threads(1)
        .build()
        .expect("static solver settings");
    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(_) => {
            return ConicSolution {
                x: vec![f64::NAN; n],
                objective: f64::NAN,
                status: SolveStatus::Inaccurate,
                primal_residual: f64::INFINITY,
                gap: f64::INFINITY,
                iterations: 0,
                certificate: Vec::new(),
            }
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let x = sol.x.clone();
    let (pv, dv) = (sol.obj_val, sol.obj_val_dual);
    let gap = (pv - dv).abs() / pv.abs().min(dv.abs()).max(1.0);
    let report = check_solution(prog, &x);
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if report.normalized <= opts.contract_tol && gap <= opts.contract_tol {
                SolveStatus::Optimal
            } else {
                SolveStatus::Inaccurate
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIters,
        _ => SolveStatus::Inaccurate,
    };
    let certificate = if status == SolveStatus::Infeasible {
        let zmax = sol.z.iter().fold(0.0f64, |m, z| m.max(z.abs()));
        spans
            .iter()
            .enumerate()
            .filter(|(_, r)| sol.z[(*r).clone()].iter().any(|z| z.abs() > 1e-6 * zmax))
            .map(|(i, _)| ConstraintId(i))
            .collect()
    } else {
        Vec::new()
    };
    ConicSolution {
        certificate,
        objective: prog.objective_at(&x),
        x,
        status,
        primal_residual: report.normalized,
        gap,
        iterations: sol.iterations,
    }
}
