use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var(pub usize);

/// `sum c_i x_i + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn term(v: Var, c: f64) -> Self {
        Self {
            terms: vec![(v.0, c)],
            constant: 0.0,
        }
    }

    /// Adds `c * v` in place.
    pub fn plus(mut self, v: Var, c: f64) -> Self {
        self.terms.push((v.0, c));
        self
    }

    pub fn coeff(&self, v: Var) -> f64 {
        self.terms.iter().filter(|(i, _)| *i == v.0).map(|(_, c)| c).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(i, c)| c * x[*i]).sum::<f64>() + self.constant
    }

    /// Merge repeated variables and drop zero coefficients, sorted by index.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (i, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => out.push((i, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
        self
    }
}

impl From<Var> for Affine {
    fn from(v: Var) -> Self {
        Affine::term(v, 1.0)
    }
}

impl From<f64> for Affine {
    fn from(c: f64) -> Self {
        Affine::constant(c)
    }
}

impl Add for Affine {
    type Output = Affine;
    fn add(mut self, rhs: Affine) -> Affine {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
        self
    }
}

impl Add<f64> for Affine {
    type Output = Affine;
    fn add(mut self, rhs: f64) -> Affine {
        self.constant += rhs;
        self
    }
}

impl Add<Var> for Affine {
    type Output = Affine;
    fn add(self, rhs: Var) -> Affine {
        self.plus(rhs, 1.0)
    }
}

impl Sub for Affine {
    type Output = Affine;
    fn sub(self, rhs: Affine) -> Affine {
        self + (-rhs)
    }
}

impl Sub<f64> for Affine {
    type Output = Affine;
    fn sub(self, rhs: f64) -> Affine {
        self + (-rhs)
    }
}

impl Sub<Var> for Affine {
    type Output = Affine;
    fn sub(self, rhs: Var) -> Affine {
        self.plus(rhs, -1.0)
    }
}

impl Mul<f64> for Affine {
    type Output = Affine;
    fn mul(mut self, k: f64) -> Affine {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl Neg for Affine {
    type Output = Affine;
    fn neg(self) -> Affine {
        self * -1.0
    }
}

impl Mul<f64> for Var {
    type Output = Affine;
    fn mul(self, k: f64) -> Affine {
        Affine::term(self, k)
    }
}

impl Add for Var {
    type Output = Affine;
    fn add(self, rhs: Var) -> Affine {
        Affine::from(self) + rhs
    }
}

impl Sub for Var {
    type Output = Affine;
    fn sub(self, rhs: Var) -> Affine {
        Affine::from(self) - rhs
    }
}

impl Add<f64> for Var {
    type Output = Affine;
    fn add(self, rhs: f64) -> Affine {
        Affine::from(self) + rhs
    }
}

impl Sub<f64> for Var {
    type Output = Affine;
    fn sub(self, rhs: f64) -> Affine {
        Affine::from(self) - rhs
    }
}
