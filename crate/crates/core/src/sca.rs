//! Fixed-wind trajectory and schedule planning by successive convex
//! approximation.
//!
//! Two nonconvex pieces are replaced by convex surrogates at a local point:
//!
//! * the airspeed floor `|v| >= delta` becomes
//!   `|v_l|^2 + 2 v_l.(v - v_l) >= delta^2`, a global under-estimate of `|v|^2`;
//! * the spectral efficiency `log2(1 + g0 / (H^2 + d^2))`, convex in `d^2`, is
//!   bounded below by its tangent in `d^2`,
//!   `c_l - beta (d^2 - d_l^2)` with
//!   `beta = log2(e) g0 / ((H^2 + d_l^2)(H^2 + d_l^2 + g0))`.
//!
//! Delivered volume uses amplitudes `A = sqrt(tau * rate)`: `A^2 <= tau * rate`
//! is a rotated cone and `sum A^2 >= Q / B` is linearised at `A_l`. Each
//! subproblem's optimum is feasible for the original problem and its value
//! bounds the true energy from above, so the true energy never increases.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::{self, spectral_efficiency, CommSchedule, Feasibility, RateTable};
use crate::conic::{self, check_solution, Affine, ConicProgram, SolveOptions, SolveStatus, Tag, Var};
use crate::energy::{counted_waypoints, trajectory_energy, EnergyBreakdown, Trajectory};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::scenario::{Buoy, ChannelParams, EnergyParams, Endpoints, Scenario, Slotting};
use crate::vector::Vec2;

/// Boundary conditions of one planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// Fixed initial and final position and airspeed.
    Open(Endpoints),
    /// Fixed initial and final position; the endpoint airspeeds are free but
    /// equal, so the kinetic term vanishes.
    Transit { q0: Vec2, qf: Vec2 },
    /// Closed lap: `q[0] = q[N+1]`, `v[0] = v[N+1]`.
    Periodic,
}

impl Boundary {
    pub fn is_periodic(&self) -> bool {
        matches!(self, Boundary::Periodic)
    }
}

/// Everything a fixed-wind solve needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedWindProblem {
    pub scenario: Scenario,
    pub slotting: Slotting,
    pub wind: Vec2,
    /// Bits per buoy.
    pub targets: Vec<f64>,
    pub boundary: Boundary,
}

impl FixedWindProblem {
    /// Open mission between the scenario endpoints.
    pub fn open(scenario: &Scenario, wind: Vec2, slotting: Slotting) -> Result<Self> {
        let endpoints = scenario.endpoints.ok_or_else(|| {
            Error::Validation(vec![crate::scenario::Violation {
                field: "endpoints".into(),
                message: "open missions need endpoints".into(),
            }])
        })?;
        Ok(Self {
            scenario: scenario.clone(),
            slotting,
            wind,
            targets: scenario.targets(),
            boundary: Boundary::Open(endpoints),
        })
    }

    /// Open mission between the scenario endpoint positions with equal, free
    /// endpoint airspeeds.
    pub fn transit(scenario: &Scenario, wind: Vec2, slotting: Slotting) -> Result<Self> {
        let mut p = Self::open(scenario, wind, slotting)?;
        if let Boundary::Open(e) = p.boundary {
            p.boundary = Boundary::Transit { q0: e.q0, qf: e.qf };
        }
        Ok(p)
    }

    pub fn periodic(scenario: &Scenario, wind: Vec2, slotting: Slotting, targets: Vec<f64>) -> Self {
        Self {
            scenario: scenario.clone(),
            slotting,
            wind,
            targets,
            boundary: Boundary::Periodic,
        }
    }

    pub fn v_min(&self) -> f64 {
        self.scenario.limits.v_min(self.wind)
    }

    fn wind_path(&self) -> Vec<Vec2> {
        vec![self.wind; self.slotting.waypoints()]
    }

    /// Kinetic term, constant under the boundary conditions.
    pub fn kinetic_delta(&self) -> f64 {
        match self.boundary {
            Boundary::Open(e) => 0.5 * self.scenario.energy.mass_kg * (e.vf.norm_sq() - e.v0.norm_sq()),
            Boundary::Transit { .. } | Boundary::Periodic => 0.0,
        }
    }
}

/// Linearisation point of one SCA iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPoint {
    pub q: Vec<Vec2>,
    /// Airspeed per waypoint.
    pub v: Vec<Vec2>,
    /// `A_l[s][k] = sqrt(tau * spectral efficiency)`.
    pub amp: Vec<Vec<f64>>,
    pub iteration: usize,
}

impl LocalPoint {
    pub fn from_plan(traj: &Trajectory, sched: &CommSchedule, buoys: &[Buoy], ch: &ChannelParams, iteration: usize) -> Self {
        let amp = sched
            .tau
            .iter()
            .zip(&traj.q)
            .map(|(row, q)| {
                row.iter()
                    .zip(buoys)
                    .map(|(t, b)| (t.max(0.0) * spectral_efficiency((*q - b.position).norm_sq(), ch)).sqrt())
                    .collect()
            })
            .collect();
        Self {
            q: traj.q.clone(),
            v: traj.v_air.clone(),
            amp,
            iteration,
        }
    }
}

/// `|v_l|^2 + 2 v_l.(v - v_l)`.
pub fn taylor_speed_lb(v: Vec2, v_local: Vec2) -> f64 {
    v_local.norm_sq() + 2.0 * v_local.dot(v - v_local)
}

/// Tangent of the spectral efficiency in the squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTangent {
    /// Spectral efficiency at the local point (bits/s/Hz).
    pub value: f64,
    pub beta: f64,
    pub d2_local: f64,
}

impl RateTangent {
    pub fn at(q_local: Vec2, buoy: &Buoy, ch: &ChannelParams) -> Self {
        let d2 = (q_local - buoy.position).norm_sq();
        let x = ch.altitude_m * ch.altitude_m + d2;
        Self {
            value: spectral_efficiency(d2, ch),
            beta: std::f64::consts::LOG2_E * ch.ref_snr / (x * (x + ch.ref_snr)),
            d2_local: d2,
        }
    }

    pub fn eval(&self, d2: f64) -> f64 {
        self.value - self.beta * (d2 - self.d2_local)
    }
}

/// Lower bound on the spectral efficiency at `q` from the tangent at `q_local`.
pub fn taylor_rate_lb(q: Vec2, q_local: Vec2, buoy: &Buoy, ch: &ChannelParams) -> f64 {
    RateTangent::at(q_local, buoy, ch).eval((q - buoy.position).norm_sq())
}

/// Decision variables of the fixed-wind subproblem, excluding auxiliaries:
/// positions and airspeeds at `N + 2` waypoints, time shares and amplitudes
/// for `N + 1` slots and `K` buoys, and speed slacks for waypoints `1..=N+1`.
pub fn decision_variable_count(n_slots: usize, buoys: usize) -> usize {
    2 * (n_slots + 2) * 2 + (n_slots + 1) * buoys * 2 + (n_slots + 1)
}

pub(crate) fn vec_vars(p: &mut ConicProgram, name: &str, n: usize) -> Vec<[Var; 2]> {
    (0..n)
        .map(|i| [p.var(format!("{name}[{i}].x")), p.var(format!("{name}[{i}].y"))])
        .collect()
}

pub(crate) fn aff2(v: [Var; 2]) -> [Affine; 2] {
    [v[0].into(), v[1].into()]
}

/// Slot variables shared by every planning subproblem.
pub(crate) struct CommVars {
    pub tau: Vec<Vec<Var>>,
    pub amp: Vec<Vec<Var>>,
}

/// TDMA, rate tangents, amplitude cones and linearised throughput.
pub(crate) fn add_comm_block(
    p: &mut ConicProgram,
    q: &[[Var; 2]],
    local: &LocalPoint,
    buoys: &[Buoy],
    ch: &ChannelParams,
    targets: &[f64],
    slot_s: f64,
) -> CommVars {
    let slots = q.len() - 1;
    let k = buoys.len();
    let tau: Vec<Vec<Var>> = (0..slots).map(|s| p.vars(&format!("tau[{s}]"), k)).collect();
    let amp: Vec<Vec<Var>> = (0..slots).map(|s| p.vars(&format!("A[{s}]"), k)).collect();
    for s in 0..slots {
        p.at(s);
        let mut budget = Affine::constant(slot_s);
        for j in 0..k {
            budget = budget - tau[s][j];
            p.nonneg(tau[s][j].into(), Tag::CommTime);
            let rate = p.var(format!("rho[{s}][{j}]"));
            let tan = RateTangent::at(local.q[s], &buoys[j], ch);
            let sb = tan.beta.sqrt();
            let b = buoys[j].position;
            p.rsoc(
                Affine::constant(tan.value + tan.beta * tan.d2_local) - rate,
                Affine::constant(1.0),
                vec![Affine::from(q[s][0]) * sb - b.x * sb, Affine::from(q[s][1]) * sb - b.y * sb],
                Tag::RateTaylor,
            );
            p.rsoc(tau[s][j].into(), rate.into(), vec![amp[s][j].into()], Tag::RateEpigraph);
        }
        p.nonneg(budget, Tag::Tdma);
    }
    p.clear_index();
    for j in 0..k {
        if targets[j] <= 0.0 {
            continue;
        }
        let mut lin = Affine::constant(-targets[j] / ch.bandwidth_hz);
        for s in 0..slots {
            let al = local.amp[s][j];
            lin = lin.plus(amp[s][j], 2.0 * al) - al * al;
        }
        p.nonneg(lin, Tag::ThroughputTaylor);
    }
    CommVars { tau, amp }
}

/// Per-waypoint flight energy `T_s (w1 |v|^3 + w2/delta + w2 |a|^2/(g^2 delta))`
/// for the counted waypoints; `air[i]` is the airspeed at waypoint `i` and
/// `delta_of(i)` its speed slack.
pub(crate) fn add_energy_objective(
    p: &mut ConicProgram,
    air: &[[Affine; 2]],
    delta_of: impl Fn(usize) -> Var,
    counted: std::ops::RangeInclusive<usize>,
    slot_s: f64,
    e: &EnergyParams,
) {
    for i in counted {
        p.at(i);
        let cube = p.cubic_epigraph(air[i].to_vec(), &format!("cube[{i}]"));
        let d: Affine = delta_of(i).into();
        let inv = p.inverse_epigraph(d.clone(), &format!("inv[{i}]"));
        let acc: Vec<Affine> = (0..2)
            .map(|c| (air[i + 1][c].clone() - air[i][c].clone()) * (1.0 / slot_s))
            .collect();
        let qol = p.quad_over_lin(acc, d, &format!("acc[{i}]"));
        let g2 = e.gravity * e.gravity;
        p.add_objective((cube * e.w1 + inv * e.w2 + qol * (e.w2 / g2)) * slot_s);
    }
    p.clear_index();
}

/// Speed slack with `delta >= v_min` and the linearised floor at `v_local`.
pub(crate) fn add_speed_floor(p: &mut ConicProgram, delta: Var, air: &[Affine; 2], v_local: Vec2, v_min: f64) {
    p.nonneg(delta - v_min, Tag::MinSpeed);
    let lin = Affine::constant(-v_local.norm_sq())
        + air[0].clone() * (2.0 * v_local.x)
        + air[1].clone() * (2.0 * v_local.y);
    p.rsoc(lin, Affine::constant(1.0), vec![delta.into()], Tag::MinSpeedTaylor);
}

/// The fixed-wind subproblem with handles to its decision variables.
pub struct P22 {
    pub program: ConicProgram,
    pub q: Vec<[Var; 2]>,
    pub v: Vec<[Var; 2]>,
    pub tau: Vec<Vec<Var>>,
    pub amp: Vec<Vec<Var>>,
    /// Slack for waypoint `i + 1`.
    pub delta: Vec<Var>,
}

impl P22 {
    pub fn decision_variables(&self) -> usize {
        2 * (self.q.len() + self.v.len())
            + self.tau.iter().map(Vec::len).sum::<usize>()
            + self.amp.iter().map(Vec::len).sum::<usize>()
            + self.delta.len()
    }

    fn extract(&self, sol: &conic::ConicSolution, problem: &FixedWindProblem) -> (Trajectory, CommSchedule) {
        let g = |v: &[Var; 2]| Vec2::new(sol.value(v[0]), sol.value(v[1]));
        let q = self.q.iter().map(g).collect();
        let v = self.v.iter().map(g).collect();
        let traj = Trajectory::from_airspeeds(
            q,
            v,
            problem.wind_path(),
            problem.slotting.slot_s,
            problem.boundary.is_periodic(),
        );
        let sched = CommSchedule {
            tau: self
                .tau
                .iter()
                .map(|row| row.iter().map(|t| sol.value(*t).max(0.0)).collect())
                .collect(),
        };
        (traj, sched)
    }
}

pub fn build_p22(problem: &FixedWindProblem, local: &LocalPoint) -> Result<P22> {
    let sc = &problem.scenario;
    let n = problem.slotting.n_slots;
    let w = n + 2;
    let k = sc.buoys.len();
    let ts = problem.slotting.slot_s;
    if local.q.len() != w || local.v.len() != w || local.amp.len() != n + 1 || local.amp.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "local point has {} waypoints / {} slots, expected {w} / {}",
            local.q.len(),
            local.amp.len(),
            n + 1
        )));
    }
    let mut p = ConicProgram::new();
    let q = vec_vars(&mut p, "q", w);
    let v = vec_vars(&mut p, "v", w);
    let delta = p.vars("delta", n + 1);
    let air: Vec<[Affine; 2]> = v.iter().map(|x| aff2(*x)).collect();

    for i in 0..=n {
        p.at(i);
        for c in 0..2 {
            let drift = if c == 0 { problem.wind.x } else { problem.wind.y };
            let e = Affine::from(q[i + 1][c]) - q[i][c] - (v[i][c] + v[i + 1][c]) * (0.5 * ts) - drift * ts;
            p.eq_zero(e, Tag::Kinematics);
        }
        let dv = vec![Affine::from(v[i + 1][0]) - v[i][0], Affine::from(v[i + 1][1]) - v[i][1]];
        p.soc(Affine::constant(sc.limits.a_max * ts), dv, Tag::AccelLimit);
    }
    p.clear_index();

    match problem.boundary {
        Boundary::Open(e) => {
            let pin = |p: &mut ConicProgram, x: [Var; 2], val: Vec2, tag| {
                p.eq_zero(x[0] - val.x, tag);
                p.eq_zero(x[1] - val.y, tag);
            };
            pin(&mut p, q[0], e.q0, Tag::InitialState);
            pin(&mut p, v[0], e.v0, Tag::InitialState);
            pin(&mut p, q[w - 1], e.qf, Tag::FinalState);
            pin(&mut p, v[w - 1], e.vf, Tag::FinalState);
        }
        Boundary::Transit { q0, qf } => {
            for c in 0..2 {
                let (a, b) = if c == 0 { (q0.x, qf.x) } else { (q0.y, qf.y) };
                p.eq_zero(q[0][c] - a, Tag::InitialState);
                p.eq_zero(q[w - 1][c] - b, Tag::FinalState);
                p.eq_zero(v[0][c] - v[w - 1][c], Tag::Closure);
            }
        }
        Boundary::Periodic => {
            for c in 0..2 {
                p.eq_zero(q[0][c] - q[w - 1][c], Tag::Closure);
                p.eq_zero(v[0][c] - v[w - 1][c], Tag::Closure);
            }
        }
    }

    let speed_from = if problem.boundary.is_periodic() { 0 } else { 1 };
    for i in speed_from..=n {
        p.at(i);
        p.soc(Affine::constant(sc.limits.v_max), air[i].to_vec(), Tag::SpeedLimit);
    }
    let v_min = problem.v_min();
    for j in 1..=n + 1 {
        p.at(j);
        add_speed_floor(&mut p, delta[j - 1], &air[j], local.v[j], v_min);
    }
    p.clear_index();

    let comm = add_comm_block(&mut p, &q, local, &sc.buoys, &sc.channel, &problem.targets, ts);

    let periodic = problem.boundary.is_periodic();
    let delta_of = |i: usize| if i == 0 { delta[n] } else { delta[i - 1] };
    add_energy_objective(&mut p, &air, delta_of, counted_waypoints(n, periodic), ts, &sc.energy);
    p.add_objective(Affine::constant(problem.kinetic_delta()));

    Ok(P22 {
        program: p,
        q,
        v,
        tau: comm.tau,
        amp: comm.amp,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop when the relative energy decrease falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub solver: SolveOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iters: 50,
            solver: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective_j: f64,
    /// Largest constraint violation of the accepted subproblem solution.
    pub max_violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// A subproblem returned a higher true energy; the previous iterate is kept.
    RejectedStep,
    /// A later subproblem failed; the last accepted iterate is kept.
    SolverStopped(SolveStatus),
}

/// Relative slack of each true constraint; negative means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanCheck {
    pub speed_floor: f64,
    pub speed_ceiling: f64,
    pub accel: f64,
    pub throughput: f64,
    pub tdma: f64,
    /// Kinematic and boundary residual in metres (or m/s).
    pub kinematics: f64,
}

impl PlanCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.speed_floor >= -tol
            && self.speed_ceiling >= -tol
            && self.accel >= -tol
            && self.throughput >= -tol
            && self.tdma >= -tol
            && self.kinematics <= tol * 1e3
    }
}

/// Evaluate a plan against the true (unconvexified) constraints.
pub fn validate_plan(problem: &FixedWindProblem, traj: &Trajectory, sched: &CommSchedule) -> Result<PlanCheck> {
    let lim = &problem.scenario.limits;
    let v_min = problem.v_min();
    let speeds: Vec<f64> = traj.v_air.iter().map(|v| v.norm()).collect();
    let speed_floor = speeds.iter().map(|s| (s - v_min) / v_min).fold(f64::INFINITY, f64::min);
    let from = if problem.boundary.is_periodic() { 0 } else { 1 };
    let speed_ceiling = speeds[from..=problem.slotting.n_slots]
        .iter()
        .map(|s| (lim.v_max - s) / lim.v_max)
        .fold(f64::INFINITY, f64::min);
    let accel = traj
        .accel
        .iter()
        .map(|a| (lim.a_max - a.norm()) / lim.a_max)
        .fold(f64::INFINITY, f64::min);
    let rates = RateTable::for_trajectory(traj, &problem.scenario.buoys, &problem.scenario.channel);
    let got = comms::collected(&rates, sched)?;
    let throughput = got
        .iter()
        .zip(&problem.targets)
        .filter(|(_, t)| **t > 0.0)
        .map(|(g, t)| (g - t) / t)
        .fold(f64::INFINITY, f64::min);
    let ts = problem.slotting.slot_s;
    let last = traj.waypoints() - 1;
    let boundary = match problem.boundary {
        Boundary::Open(e) => [
            (traj.q[0] - e.q0).norm(),
            (traj.q[last] - e.qf).norm(),
            (traj.v_air[0] - e.v0).norm(),
            (traj.v_air[last] - e.vf).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max),
        Boundary::Transit { q0, qf } => [
            (traj.q[0] - q0).norm(),
            (traj.q[last] - qf).norm(),
            (traj.v_air[0] - traj.v_air[last]).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max),
        Boundary::Periodic => (traj.q[0] - traj.q[last]).norm().max((traj.v_air[0] - traj.v_air[last]).norm()),
    };
    Ok(PlanCheck {
        speed_floor,
        speed_ceiling,
        accel,
        throughput,
        tdma: -sched.tdma_violation(ts) / ts,
        kinematics: traj.kinematic_residual().max(boundary),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedWindPlan {
    pub trajectory: Trajectory,
    pub schedule: CommSchedule,
    pub energy: EnergyBreakdown,
    pub collected: Vec<f64>,
    pub log: Vec<IterRecord>,
    pub termination: Termination,
    pub check: PlanCheck,
    pub slotting: Slotting,
}

impl FixedWindPlan {
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut body = String::from("iteration,objective_J,max_violation\n");
        for r in &self.log {
            body.push_str(&format!("{},{},{}\n", r.iteration, r.objective_j, r.max_violation));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(body.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

fn init_infeasible(constraint: &str, detail: String) -> Error {
    Error::InitInfeasible {
        constraint: constraint.into(),
        detail,
    }
}

/// Reject an initial point at which the convexified set is empty.
fn check_init(problem: &FixedWindProblem, traj: &Trajectory, sched: &CommSchedule) -> Result<()> {
    let n = problem.slotting.n_slots;
    if traj.waypoints() != n + 2 || sched.slots() != n + 1 || sched.buoys() != problem.scenario.buoys.len() {
        return Err(Error::DimensionMismatch(format!(
            "initial plan {} waypoints / {} slots for N = {n}",
            traj.waypoints(),
            sched.slots()
        )));
    }
    let c = validate_plan(problem, traj, sched)?;
    let tol = 1e-6;
    let checks = [
        ("min speed", c.speed_floor),
        ("max speed", c.speed_ceiling),
        ("acceleration", c.accel),
        ("throughput", c.throughput),
        ("tdma", c.tdma),
    ];
    for (name, slack) in checks {
        if slack < -tol {
            return Err(init_infeasible(name, format!("relative slack {slack:.3e}")));
        }
    }
    if c.kinematics > 1e-6 {
        return Err(init_infeasible("kinematics", format!("residual {:.3e}", c.kinematics)));
    }
    Ok(())
}

/// Run the SCA loop from a feasible initial plan.
pub fn sca_solve(
    problem: &FixedWindProblem,
    init_traj: &Trajectory,
    init_sched: &CommSchedule,
    opts: &ScaOptions,
) -> Result<FixedWindPlan> {
    check_init(problem, init_traj, init_sched)?;
    let sc = &problem.scenario;
    let mut traj = init_traj.clone();
    let mut sched = init_sched.clone();
    let mut energy = trajectory_energy(&traj, &sc.energy)?;
    let mut log = vec![IterRecord {
        iteration: 0,
        objective_j: energy.total,
        max_violation: 0.0,
    }];
    let mut termination = Termination::MaxIterations;

    for l in 1..=opts.max_iters {
        let local = LocalPoint::from_plan(&traj, &sched, &sc.buoys, &sc.channel, l - 1);
        let sub = build_p22(problem, &local)?;
        let sol = conic::solve(&sub.program, &opts.solver);
        let usable = sol.status == SolveStatus::Optimal
            || (sol.status == SolveStatus::Inaccurate && sol.primal_residual <= 1e-6);
        if !usable {
            if l == 1 {
                return Err(Error::Solver {
                    iteration: l,
                    status: sol.status,
                });
            }
            termination = Termination::SolverStopped(sol.status);
            break;
        }
        let (t_new, s_new) = sub.extract(&sol, problem);
        let e_new = trajectory_energy(&t_new, &sc.energy)?;
        if e_new.total > energy.total {
            termination = if e_new.total <= energy.total * (1.0 + 1e-9) {
                Termination::Converged
            } else {
                Termination::RejectedStep
            };
            break;
        }
        let decrease = (energy.total - e_new.total) / energy.total.abs().max(1.0);
        traj = t_new;
        sched = s_new;
        energy = e_new;
        log.push(IterRecord {
            iteration: l,
            objective_j: energy.total,
            max_violation: check_solution(&sub.program, &sol.x).max,
        });
        if decrease < opts.tol {
            termination = Termination::Converged;
            break;
        }
    }

    let rates = RateTable::for_trajectory(&traj, &sc.buoys, &sc.channel);
    Ok(FixedWindPlan {
        collected: comms::collected(&rates, &sched)?,
        check: validate_plan(problem, &traj, &sched)?,
        trajectory: traj,
        schedule: sched,
        energy,
        log,
        termination,
        slotting: problem.slotting,
    })
}

/// Ramp-limited constant-cruise ground-speed profile along the segment
/// `q0 -> qF`, with a schedule from the feasibility program. Transit problems
/// fly the segment at constant ground speed.
pub fn straight_line_init(problem: &FixedWindProblem) -> Result<(Trajectory, CommSchedule)> {
    let sc = &problem.scenario;
    let n = problem.slotting.n_slots;
    let ts = problem.slotting.slot_s;
    let w = problem.wind;
    let (q0, qf) = match problem.boundary {
        Boundary::Open(e) => (e.q0, e.qf),
        Boundary::Transit { q0, qf } => (q0, qf),
        Boundary::Periodic => return Err(init_infeasible("boundary", "straight-line start needs endpoints".into())),
    };
    let span = qf - q0;
    let length = span.norm();
    let dir = span.normalized().unwrap_or(Vec2::new(1.0, 0.0));
    let (g0, gf) = match problem.boundary {
        Boundary::Open(e) => (e.v0 + w, e.vf + w),
        _ => {
            let g = dir * (length / problem.slotting.horizon());
            (g, g)
        }
    };
    let (u0, uf) = (g0.dot(dir), gf.dot(dir));
    let ramp = 0.9 * sc.limits.a_max * ts;
    let last = n + 1;
    let bounds = |i: usize| {
        let (a, b) = (i as f64, (last - i) as f64);
        let lo = (u0 - ramp * a).max(uf - ramp * b);
        let hi = (u0 + ramp * a).min(uf + ramp * b);
        (lo, hi)
    };
    let profile = |uc: f64| -> Vec<f64> {
        (0..=last)
            .map(|i| match i {
                0 => u0,
                i if i == last => uf,
                i => {
                    let (lo, hi) = bounds(i);
                    uc.clamp(lo, hi.max(lo))
                }
            })
            .collect()
    };
    let distance = |u: &[f64]| u.windows(2).map(|p| 0.5 * (p[0] + p[1]) * ts).sum::<f64>();
    let (mut lo, mut hi) = (-(sc.limits.v_max + w.norm()), sc.limits.v_max + w.norm());
    if distance(&profile(hi)) < length || distance(&profile(lo)) > length {
        return Err(init_infeasible(
            "horizon",
            format!("no ramp-limited profile covers {length:.1} m in {:.1} s", problem.slotting.horizon()),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if distance(&profile(mid)) < length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = profile(0.5 * (lo + hi));
    let mut ve: Vec<Vec2> = u.iter().map(|s| dir * *s).collect();
    ve[0] = g0;
    ve[last] = gf;
    let mut q = vec![q0];
    for i in 0..last {
        let next = q[i] + (ve[i] + ve[i + 1]) * (0.5 * ts);
        q.push(next);
    }
    q[last] = qf;
    let traj = Trajectory::from_ground(q, ve, problem.wind_path(), ts, false);
    let sched = schedule_for(problem, &traj)?;
    Ok((traj, sched))
}

/// Straight flight from `q0` to `qF` at constant ground speed with `laps`
/// full turns of a circle inserted at the waypoint nearest `focus`. The circle
/// is tangent to the line and has `per_lap` slots per turn; its radius follows
/// from the speed so that the midpoint kinematics hold exactly.
pub fn loop_path(
    q0: Vec2,
    qf: Vec2,
    focus: Vec2,
    ground_speed: f64,
    nominal_slot: f64,
    laps: usize,
    per_lap: usize,
) -> Option<(Slotting, Vec<Vec2>, Vec<Vec2>)> {
    let span = qf - q0;
    let length = span.norm();
    let dir = span.normalized()?;
    if ground_speed <= 0.0 || (laps > 0 && per_lap < 3) {
        return None;
    }
    let n_line = ((length / (ground_speed * nominal_slot)).round() as usize).max(1);
    let ts = length / (ground_speed * n_line as f64);
    let step = ground_speed * ts;
    let along = (focus - q0).dot(dir).clamp(0.0, length);
    let j = ((along / step).round() as usize).min(n_line);
    let mut q: Vec<Vec2> = (0..=j).map(|i| q0 + dir * (step * i as f64)).collect();
    let mut v = vec![dir * ground_speed; j + 1];
    if laps > 0 {
        let phi = std::f64::consts::TAU / per_lap as f64;
        let r = ground_speed * ts / (2.0 * (phi / 2.0).tan());
        let nrm = dir.perp();
        let side = if (focus - q[j]).dot(nrm) < 0.0 { -1.0 } else { 1.0 };
        let centre = q[j] + nrm * (side * r);
        let a0 = (q[j] - centre).angle();
        for s in 1..=laps * per_lap {
            let a = a0 + side * phi * s as f64;
            q.push(centre + Vec2::from_angle(a) * r);
            v.push(Vec2::new(-a.sin(), a.cos()) * (side * ground_speed));
        }
    }
    for i in j + 1..=n_line {
        q.push(q0 + dir * (step * i as f64));
        v.push(dir * ground_speed);
    }
    let last = q.len() - 1;
    q[last] = qf;
    Some((
        Slotting {
            slot_s: ts,
            n_slots: last - 1,
        },
        q,
        v,
    ))
}

/// Flight from `q0` to `qF` over a fixed slotting at constant ground speed
/// with the heading swinging `lobes` times about the line,
/// `psi(t) = side * A sin(2 pi lobes t / T)`. The amplitude is chosen so the
/// path covers the span; a uniform velocity offset then closes the endpoint
/// exactly under midpoint kinematics.
pub fn weave_path(q0: Vec2, qf: Vec2, ground_speed: f64, slotting: Slotting, lobes: usize, side: f64) -> Option<(Vec<Vec2>, Vec<Vec2>)> {
    let span = qf - q0;
    let dir = span.normalized()?;
    let nrm = dir.perp();
    let last = slotting.n_slots + 1;
    let ts = slotting.slot_s;
    let velocities = |amp: f64| -> Vec<Vec2> {
        (0..=last)
            .map(|i| {
                let psi = side * amp * (std::f64::consts::TAU * lobes as f64 * i as f64 / last as f64).sin();
                (dir * psi.cos() + nrm * psi.sin()) * ground_speed
            })
            .collect()
    };
    let progress = |v: &[Vec2]| v.windows(2).map(|p| (p[0] + p[1]).dot(dir) * 0.5 * ts).sum::<f64>();
    let length = span.norm();
    let (mut lo, mut hi) = (0.0, 2.4);
    if progress(&velocities(lo)) < length || progress(&velocities(hi)) > length {
        return None;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if progress(&velocities(mid)) > length {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut v = velocities(0.5 * (lo + hi));
    let mut q = vec![q0];
    for i in 0..last {
        q.push(q[i] + (v[i] + v[i + 1]) * (0.5 * ts));
    }
    let drift = (qf - q[last]) * (1.0 / slotting.horizon());
    for (i, (qi, vi)) in q.iter_mut().zip(v.iter_mut()).enumerate() {
        *qi = *qi + drift * (ts * i as f64);
        *vi = *vi + drift;
    }
    q[last] = qf;
    Some((q, v))
}

/// Feasibility-program schedule for a fixed trajectory.
pub fn schedule_for(problem: &FixedWindProblem, traj: &Trajectory) -> Result<CommSchedule> {
    let rates = RateTable::for_trajectory(traj, &problem.scenario.buoys, &problem.scenario.channel);
    match comms::feasibility_lp(&rates, &problem.targets, problem.slotting.slot_s) {
        Feasibility::Feasible { schedule, .. } => Ok(schedule),
        Feasibility::Infeasible { ratio } => Err(init_infeasible(
            "throughput",
            format!("best collection ratio {ratio:.4} along the initial path"),
        )),
    }
}

/// Straight flight at constant airspeed between the endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub ground_speed: f64,
    pub airspeed: f64,
    pub duration: f64,
    pub energy_j: f64,
    pub trajectory: Trajectory,
    pub schedule: CommSchedule,
}

/// Best constant-velocity straight flight that still delivers the targets.
pub fn straight_benchmark(scenario: &Scenario, wind: Vec2, targets: &[f64], max_slots: usize, exec: Exec) -> Result<Benchmark> {
    let e = scenario.endpoints.ok_or_else(|| init_infeasible("boundary", "benchmark needs endpoints".into()))?;
    let span = e.qf - e.q0;
    let dir = span.normalized().unwrap_or(Vec2::new(1.0, 0.0));
    let length = span.norm();
    let v_min = scenario.limits.v_min(wind);
    let top = scenario.limits.v_max + wind.norm();
    let speeds: Vec<f64> = (1..).map(|i| 0.25 * i as f64).take_while(|g| *g <= top).collect();
    let candidates = exec.map(&speeds, |&g| -> Option<Benchmark> {
        let air = dir * g - wind;
        if air.norm() < v_min || air.norm() > scenario.limits.v_max {
            return None;
        }
        let duration = length / g;
        let slotting = Slotting::for_horizon(duration, scenario.slotting.slot_s, max_slots);
        let ts = slotting.slot_s;
        let wpts = slotting.waypoints();
        let q: Vec<Vec2> = (0..wpts).map(|i| e.q0 + dir * (g * ts * i as f64)).collect();
        let traj = Trajectory::from_airspeeds(q, vec![air; wpts], vec![wind; wpts], ts, false);
        let rates = RateTable::for_trajectory(&traj, &scenario.buoys, &scenario.channel);
        let Feasibility::Feasible { schedule, .. } = comms::feasibility_lp(&rates, targets, ts) else {
            return None;
        };
        let energy = trajectory_energy(&traj, &scenario.energy).ok()?;
        Some(Benchmark {
            ground_speed: g,
            airspeed: air.norm(),
            duration,
            energy_j: energy.total,
            trajectory: traj,
            schedule,
        })
    });
    candidates
        .into_iter()
        .flatten()
        .min_by(|a, b| a.energy_j.total_cmp(&b.energy_j))
        .ok_or_else(|| Error::NoFeasibleInit("no constant-speed straight flight delivers the targets".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonOptions {
    /// Straight-line starts, as multiples of the benchmark duration.
    pub factors: Vec<f64>,
    pub max_slots: usize,
    /// Free but equal endpoint airspeeds instead of the scenario's fixed
    /// ones; also enables the looped starts.
    pub transit: bool,
    /// Ground speeds of the looped starts (m/s).
    pub loop_speeds: Vec<f64>,
    pub max_laps: usize,
    /// Starts handed to SCA, cheapest first.
    pub starts: usize,
    pub sca: ScaOptions,
    pub exec: Exec,
}

impl Default for HorizonOptions {
    fn default() -> Self {
        Self {
            factors: vec![0.8, 0.9, 1.0, 1.15, 1.3],
            max_slots: 120,
            transit: true,
            loop_speeds: (2..=9).map(|i| 5.0 * i as f64).collect(),
            max_laps: 4,
            starts: 4,
            sca: ScaOptions::default(),
            exec: Exec::default(),
        }
    }
}

/// One initial plan considered by [`plan_open`].
#[derive(Debug, Clone, PartialEq)]
pub struct StartCandidate {
    pub label: String,
    pub horizon: f64,
    pub init_energy_j: Option<f64>,
    /// Energy after SCA, if this start was refined.
    pub energy_j: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenPlan {
    pub best: FixedWindPlan,
    pub benchmark: Benchmark,
    pub candidates: Vec<StartCandidate>,
}

struct Start {
    label: String,
    problem: FixedWindProblem,
    init: Result<(Trajectory, CommSchedule, f64)>,
}

fn evaluate_start(label: String, problem: FixedWindProblem, built: Result<Trajectory>) -> Start {
    let init = built.and_then(|t| {
        let sched = schedule_for(&problem, &t)?;
        check_init(&problem, &t, &sched)?;
        let e = trajectory_energy(&t, &problem.scenario.energy)?.total;
        Ok((t, sched, e))
    });
    Start { label, problem, init }
}

fn open_starts(scenario: &Scenario, wind: Vec2, benchmark: &Benchmark, opts: &HorizonOptions) -> Vec<Start> {
    // (label, horizon factor for straight starts, loop speed, laps, slots per lap)
    let mut items: Vec<(String, Option<f64>, f64, usize, usize)> =
        opts.factors.iter().map(|f| (format!("straight x{f}"), Some(*f), 0.0, 0, 0)).collect();
    if opts.transit {
        for &g in &opts.loop_speeds {
            for laps in 1..=opts.max_laps {
                for per_lap in (8..=60).step_by(4) {
                    items.push((format!("loop v={g} laps={laps} m={per_lap}"), None, g, laps, per_lap));
                }
            }
        }
    }
    let starts = opts.exec.map(&items, |(label, factor, g, laps, per_lap)| -> Option<Start> {
        if let Some(f) = factor {
            let slotting = Slotting::for_horizon(f * benchmark.duration, scenario.slotting.slot_s, opts.max_slots);
            let problem = if opts.transit {
                FixedWindProblem::transit(scenario, wind, slotting)
            } else {
                FixedWindProblem::open(scenario, wind, slotting)
            }
            .ok()?;
            let built = straight_line_init(&problem).map(|(t, _)| t);
            return Some(evaluate_start(label.clone(), problem, built));
        }
        let e = scenario.endpoints?;
        let (slotting, q, ve) = loop_path(e.q0, e.qf, scenario.buoy_center(), *g, scenario.slotting.slot_s, *laps, *per_lap)?;
        if slotting.n_slots + 1 > opts.max_slots {
            return None;
        }
        let problem = FixedWindProblem::transit(scenario, wind, slotting).ok()?;
        let traj = Trajectory::from_ground(q, ve, problem.wind_path(), slotting.slot_s, false);
        Some(evaluate_start(label.clone(), problem, Ok(traj)))
    });
    starts.into_iter().flatten().collect()
}

/// Point-to-point plan: the constant-speed benchmark, straight starts at a few
/// horizons around its duration and (for transit missions) straight flights
/// with circles inserted near the buoys are screened with the feasibility
/// program; the cheapest feasible starts are refined by SCA.
pub fn plan_open(scenario: &Scenario, wind: Vec2, opts: &HorizonOptions) -> Result<OpenPlan> {
    let targets = scenario.targets();
    let benchmark = straight_benchmark(scenario, wind, &targets, opts.max_slots, opts.exec)?;
    plan_open_with_benchmark(scenario, wind, benchmark, opts)
}

pub fn plan_open_with_benchmark(scenario: &Scenario, wind: Vec2, benchmark: Benchmark, opts: &HorizonOptions) -> Result<OpenPlan> {
    let mut starts = open_starts(scenario, wind, &benchmark, opts);
    if opts.transit {
        let slotting = Slotting {
            slot_s: benchmark.trajectory.slot_s,
            n_slots: benchmark.trajectory.n_slots(),
        };
        if let Ok(problem) = FixedWindProblem::transit(scenario, wind, slotting) {
            starts.push(evaluate_start("benchmark".into(), problem, Ok(benchmark.trajectory.clone())));
        }
    }
    let mut order: Vec<usize> = (0..starts.len()).filter(|i| starts[*i].init.is_ok()).collect();
    let init_e = |i: &usize| starts[*i].init.as_ref().map(|x| x.2).unwrap_or(f64::INFINITY);
    order.sort_by(|a, b| init_e(a).total_cmp(&init_e(b)).then(a.cmp(b)));
    order.truncate(opts.starts.max(1));
    let runs = opts.exec.map(&order, |&i| {
        let st = &starts[i];
        let (t, s, _) = st.init.as_ref().expect("filtered");
        sca_solve(&st.problem, t, s, &opts.sca)
    });
    let mut candidates: Vec<StartCandidate> = starts
        .iter()
        .map(|st| StartCandidate {
            label: st.label.clone(),
            horizon: st.problem.slotting.horizon(),
            init_energy_j: st.init.as_ref().ok().map(|x| x.2),
            energy_j: None,
            error: st.init.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let mut first_err = None;
    let mut best: Option<FixedWindPlan> = None;
    for (&i, r) in order.iter().zip(runs) {
        match r {
            Ok(p) => {
                candidates[i].energy_j = Some(p.energy.total);
                if best.as_ref().is_none_or(|b| p.energy.total < b.energy.total) {
                    best = Some(p);
                }
            }
            Err(e) => {
                candidates[i].error = Some(e.to_string());
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(best) => Ok(OpenPlan {
            best,
            benchmark,
            candidates,
        }),
        None => Err(first_err.unwrap_or_else(|| {
            starts
                .into_iter()
                .find_map(|s| s.init.err())
                .unwrap_or_else(|| Error::NoFeasibleInit("no start candidates".into()))
        })),
    }
}

/// Open mission with a given horizon. The straight-line start and, for
/// transit missions, weaving starts at the loop speeds with 1..=`max_laps`
/// swings to either side are screened with the feasibility program; the
/// cheapest feasible `starts` are refined by SCA.
pub fn plan_fixed_horizon(scenario: &Scenario, wind: Vec2, horizon: f64, opts: &HorizonOptions) -> Result<FixedWindPlan> {
    let slotting = Slotting::for_horizon(horizon, scenario.slotting.slot_s, opts.max_slots);
    let problem = if opts.transit {
        FixedWindProblem::transit(scenario, wind, slotting)?
    } else {
        FixedWindProblem::open(scenario, wind, slotting)?
    };
    let mut items: Vec<(f64, usize, f64)> = vec![(0.0, 0, 0.0)];
    if opts.transit {
        for &g in &opts.loop_speeds {
            for lobes in 1..=opts.max_laps {
                items.push((g, lobes, 1.0));
                items.push((g, lobes, -1.0));
            }
        }
    }
    let starts = opts.exec.map(&items, |&(g, lobes, side)| -> Option<Start> {
        if lobes == 0 {
            let built = straight_line_init(&problem).map(|(t, _)| t);
            return Some(evaluate_start("straight".into(), problem.clone(), built));
        }
        let (q0, qf) = match problem.boundary {
            Boundary::Transit { q0, qf } => (q0, qf),
            _ => return None,
        };
        let (q, ve) = weave_path(q0, qf, g, slotting, lobes, side)?;
        let traj = Trajectory::from_ground(q, ve, problem.wind_path(), slotting.slot_s, false);
        Some(evaluate_start(format!("weave v={g} lobes={lobes} side={side}"), problem.clone(), Ok(traj)))
    });
    let mut feasible: Vec<Start> = starts.into_iter().flatten().filter(|s| s.init.is_ok()).collect();
    if feasible.is_empty() {
        let (t, s) = straight_line_init(&problem)?;
        return sca_solve(&problem, &t, &s, &opts.sca);
    }
    feasible.sort_by(|a, b| {
        let e = |s: &Start| s.init.as_ref().map(|x| x.2).unwrap_or(f64::INFINITY);
        e(a).total_cmp(&e(b))
    });
    feasible.truncate(opts.starts.max(1));
    let runs = opts.exec.map(&feasible, |s| {
        let (t, sc, _) = s.init.as_ref().expect("screened");
        sca_solve(&s.problem, t, sc, &opts.sca)
    });
    let mut best: Option<FixedWindPlan> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(p) => {
                if best.as_ref().is_none_or(|b| p.energy.total < b.energy.total) {
                    best = Some(p);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}

#[cfg(test)]
mod tests;
