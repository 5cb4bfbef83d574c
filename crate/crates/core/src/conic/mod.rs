//! Second-order cone programs with tagged constraints.
//!
//! A [`ConicProgram`] minimises an affine objective over scalar variables
//! subject to blocks of affine rows, each block constrained to one cone:
//!
//! * `Zero`: every row equals zero,
//! * `NonNeg`: every row is non-negative,
//! * `Soc`: `rows[0] >= |rows[1..]|`,
//! * `RotatedSoc`: `rows[0] * rows[1] >= |rows[2..]|^2` with `rows[0], rows[1] >= 0`.
//!
//! Nonlinear objective terms enter through epigraph variables:
//!
//! * [`ConicProgram::cubic_epigraph`] gives `t >= |v|^3` from the chain
//!   `|v| <= s`, `s^2 <= u * 1`, `u^2 <= t * s`, so that `t >= u^2 / s >= s^3`
//!   with equality along the chain at the optimum,
//! * [`ConicProgram::inverse_epigraph`] gives `e >= 1 / d` from `e * d >= 1`,
//! * [`ConicProgram::quad_over_lin`] gives `f >= |x|^2 / d` from `f * d >= |x|^2`.
//!
//! Every constraint carries a [`Tag`] naming the modelling rule it encodes
//! and an optional slot or waypoint index.

mod affine;
mod backend;

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

pub use affine::{Affine, Var};
pub use backend::{solve, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tag {
    /// Per-slot time-sharing budget.
    Tdma,
    /// Non-negative time allocation.
    CommTime,
    /// Trapezoidal position update.
    Kinematics,
    InitialState,
    FinalState,
    /// Periodic lap closure.
    Closure,
    /// Relaxed expected endpoint velocity.
    EndpointRelax,
    AccelLimit,
    SpeedLimit,
    /// Slack speed floor `delta >= V_min`.
    MinSpeed,
    /// Linearised lower bound on squared airspeed.
    MinSpeedTaylor,
    /// Concave lower bound on spectral efficiency.
    RateTaylor,
    /// `A^2 <= tau * rate`.
    RateEpigraph,
    /// Linearised lower bound on delivered volume.
    ThroughputTaylor,
    /// Per-slot delivery requirement of the online step.
    Throughput,
    PositionDeviation,
    VelocityDeviation,
    CubicEpigraph,
    InverseEpigraph,
    QuadOverLin,
    /// Generic variable bound.
    Bound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConeKind {
    Zero,
    NonNeg,
    Soc,
    RotatedSoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub kind: ConeKind,
    pub rows: Vec<Affine>,
    pub tag: Tag,
    pub index: Option<usize>,
}

impl Constraint {
    /// Violation of cone membership at `x`, zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let e: Vec<f64> = self.rows.iter().map(|r| r.eval(x)).collect();
        match self.kind {
            ConeKind::Zero => e.iter().fold(0.0, |m, v| m.max(v.abs())),
            ConeKind::NonNeg => e.iter().fold(0.0, |m, v| m.max(-v)),
            ConeKind::Soc => (norm(&e[1..]) - e[0]).max(0.0),
            ConeKind::RotatedSoc => {
                let (u, v) = (e[0], e[1]);
                let mut z: Vec<f64> = e[2..].iter().map(|w| 2.0 * w).collect();
                z.push(u - v);
                (norm(&z) - (u + v)).max(0.0)
            }
        }
    }

    pub fn references(&self, var: Var) -> bool {
        self.rows.iter().any(|r| r.coeff(var) != 0.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    names: Vec<String>,
    objective: Affine,
    constraints: Vec<Constraint>,
    index: Option<usize>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: impl Into<String>) -> Var {
        self.names.push(name.into());
        Var(self.names.len() - 1)
    }

    pub fn vars(&mut self, prefix: &str, n: usize) -> Vec<Var> {
        (0..n).map(|i| self.var(format!("{prefix}[{i}]"))).collect()
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: Var) -> &str {
        &self.names[v.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: ConstraintId) -> &Constraint {
        &self.constraints[id.0]
    }

    pub fn objective(&self) -> &Affine {
        &self.objective
    }

    /// Index attached to constraints added from now on.
    pub fn at(&mut self, index: usize) -> &mut Self {
        self.index = Some(index);
        self
    }

    pub fn clear_index(&mut self) -> &mut Self {
        self.index = None;
        self
    }

    pub fn minimize(&mut self, objective: Affine) {
        self.objective = objective.compact();
    }

    pub fn add_objective(&mut self, term: Affine) {
        self.objective = (std::mem::take(&mut self.objective) + term).compact();
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    fn push(&mut self, kind: ConeKind, rows: Vec<Affine>, tag: Tag) -> ConstraintId {
        for r in &rows {
            if let Some(&(v, _)) = r.terms.iter().find(|(v, _)| *v >= self.names.len()) {
                panic!("constraint {tag:?} references undeclared variable {v}");
            }
        }
        self.constraints.push(Constraint {
            kind,
            rows: rows.into_iter().map(Affine::compact).collect(),
            tag,
            index: self.index,
        });
        ConstraintId(self.constraints.len() - 1)
    }

    /// `expr == 0`.
    pub fn eq_zero(&mut self, expr: Affine, tag: Tag) -> ConstraintId {
        self.push(ConeKind::Zero, vec![expr], tag)
    }

    /// `expr >= 0`.
    pub fn nonneg(&mut self, expr: Affine, tag: Tag) -> ConstraintId {
        self.push(ConeKind::NonNeg, vec![expr], tag)
    }

    /// `lhs <= rhs`.
    pub fn le(&mut self, lhs: Affine, rhs: Affine, tag: Tag) -> ConstraintId {
        self.nonneg(rhs - lhs, tag)
    }

    /// `|xs| <= t`.
    pub fn soc(&mut self, t: Affine, xs: Vec<Affine>, tag: Tag) -> ConstraintId {
        let mut rows = vec![t];
        rows.extend(xs);
        self.push(ConeKind::Soc, rows, tag)
    }

    /// `u * v >= |xs|^2`, `u, v >= 0`.
    pub fn rsoc(&mut self, u: Affine, v: Affine, xs: Vec<Affine>, tag: Tag) -> ConstraintId {
        let mut rows = vec![u, v];
        rows.extend(xs);
        self.push(ConeKind::RotatedSoc, rows, tag)
    }

    /// New variable `t` with `t >= |v|^3`.
    pub fn cubic_epigraph(&mut self, v: Vec<Affine>, name: &str) -> Var {
        let s = self.var(format!("{name}.s"));
        let u = self.var(format!("{name}.u"));
        let t = self.var(format!("{name}.t"));
        self.soc(s.into(), v, Tag::CubicEpigraph);
        self.rsoc(u.into(), Affine::constant(1.0), vec![s.into()], Tag::CubicEpigraph);
        self.rsoc(t.into(), s.into(), vec![u.into()], Tag::CubicEpigraph);
        t
    }

    /// New variable `e` with `e >= 1 / d` (and `d >= 0`).
    pub fn inverse_epigraph(&mut self, d: Affine, name: &str) -> Var {
        let e = self.var(name.to_string());
        self.rsoc(e.into(), d, vec![Affine::constant(1.0)], Tag::InverseEpigraph);
        e
    }

    /// New variable `f` with `f >= |xs|^2 / d` (and `d >= 0`).
    pub fn quad_over_lin(&mut self, xs: Vec<Affine>, d: Affine, name: &str) -> Var {
        let f = self.var(name.to_string());
        self.rsoc(f.into(), d, xs, Tag::QuadOverLin);
        f
    }

    pub fn count_by_tag(&self) -> BTreeMap<Tag, usize> {
        let mut m = BTreeMap::new();
        for c in &self.constraints {
            *m.entry(c.tag).or_insert(0) += 1;
        }
        m
    }

    /// Plain-text listing, stable across runs.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let fmt = |a: &Affine| -> String {
            let mut s = String::new();
            for (v, c) in &a.terms {
                let _ = write!(s, "{c:+.12e}*{} ", self.names[*v]);
            }
            let _ = write!(s, "{:+.12e}", a.constant);
            s
        };
        let _ = writeln!(out, "vars {}", self.names.len());
        let _ = writeln!(out, "minimize {}", fmt(&self.objective));
        for (i, c) in self.constraints.iter().enumerate() {
            let idx = c.index.map_or_else(|| "-".to_string(), |n| n.to_string());
            let _ = writeln!(out, "c{i} {:?} {:?} @{idx}", c.kind, c.tag);
            for r in &c.rows {
                let _ = writeln!(out, "  {}", fmt(r));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// Meets the residual and gap contract.
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
    /// Solver stopped with a point that misses the accuracy contract.
    Inaccurate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub primal_residual: f64,
    pub gap: f64,
    pub iterations: u32,
    /// Constraints carrying the infeasibility certificate (empty unless
    /// the status is `Infeasible`).
    pub certificate: Vec<ConstraintId>,
}

impl ConicSolution {
    pub fn value(&self, v: Var) -> f64 {
        self.x[v.0]
    }

    pub fn eval(&self, a: &Affine) -> f64 {
        a.eval(&self.x)
    }

    /// Distinct tags of the certificate constraints, in first-seen order.
    pub fn certificate_tags(&self, prog: &ConicProgram) -> Vec<Tag> {
        let mut tags = Vec::new();
        for id in &self.certificate {
            let t = prog.constraint(*id).tag;
            if !tags.contains(&t) {
                tags.push(t);
            }
        }
        tags
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// Absolute violation per constraint.
    pub violations: Vec<f64>,
    pub max: f64,
    pub worst: Option<ConstraintId>,
    /// `max / (1 + max(|x|_inf, |constants|_inf))`.
    pub normalized: f64,
}

impl ResidualReport {
    pub fn violated(&self, tol: f64) -> Vec<ConstraintId> {
        self.violations
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > tol)
            .map(|(i, _)| ConstraintId(i))
            .collect()
    }
}

/// Recompute every constraint violation at `x` without the solver.
pub fn check_solution(prog: &ConicProgram, x: &[f64]) -> ResidualReport {
    assert_eq!(x.len(), prog.n_vars(), "solution length");
    let violations: Vec<f64> = prog.constraints.iter().map(|c| c.violation(x)).collect();
    let (worst, max) = violations
        .iter()
        .enumerate()
        .fold((None, 0.0), |(w, m), (i, &v)| if v > m { (Some(ConstraintId(i)), v) } else { (w, m) });
    let xs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bs = prog
        .constraints
        .iter()
        .flat_map(|c| c.rows.iter())
        .fold(0.0f64, |m, r| m.max(r.constant.abs()));
    ResidualReport {
        normalized: max / (1.0 + xs.max(bs)),
        violations,
        max,
        worst,
    }
}

#[cfg(test)]
mod tests;
