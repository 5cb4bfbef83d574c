//! Per-slot online adaptation against measured wind, and the closed-loop
//! mission runner.
//!
//! At slot `n` the aircraft sits at `q[n-1]` with ground velocity
//! `v_e[n-1]` and has measured `w[n]`. It picks `v_e[n]`, the time shares
//! `tau[n]` and a throughput relaxation `zeta` (Mbit, priced at `w3` J/Mbit)
//! so that
//!
//! * the slot delivers what the plan still expects of it,
//!   `R_k[n-1] tau_k + zeta >= max(0, Q_k - Q_acc - Q_off[n])`,
//! * the next waypoint stays within `xi_q` of the plan and `v_e[n]` within
//!   `xi_v` of the planned ground velocity,
//! * airspeed limits and the acceleration bound hold at the measured wind.
//!
//! Only the acceleration part of the slot cost depends on the decision; the
//! rest is a constant of `v[n-1]` and is carried in the objective so that
//! its value is the full slot energy.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::link_rate;
use crate::conic::{self, Affine, ConicProgram, SolveOptions, SolveStatus, Tag, Var};
use crate::energy::{trajectory_energy, Trajectory};
use crate::error::{Error, Result};
use crate::offline::OfflinePlan;
use crate::par::Exec;
use crate::sca::add_speed_floor;
use crate::scenario::Scenario;
use crate::vector::Vec2;
use crate::wind::{sample_path, WindModel, WindPath};

const MBIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineOptions {
    /// Waypoint deviation bound (m).
    pub xi_q: f64,
    /// Ground-velocity deviation bound (m/s).
    pub xi_v: f64,
    /// Price of relaxed throughput (J per Mbit).
    pub w3: f64,
    /// Price of waypoint deviation beyond `xi_q` once that bound is relaxed (J/m).
    pub position_penalty: f64,
    /// Price of ground-velocity deviation beyond `xi_v` once relaxed (J per m/s).
    pub velocity_penalty: f64,
    pub solver: SolveOptions,
}

impl OnlineOptions {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            xi_q: s.tolerances.xi_q,
            xi_v: s.tolerances.xi_v,
            w3: s.tolerances.w3,
            position_penalty: 1e4,
            velocity_penalty: 1e4,
            solver: SolveOptions::default(),
        }
    }
}

/// What is known at the start of slot `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineState {
    /// Slot index, `1..=N+1`.
    pub n: usize,
    pub q_prev: Vec2,
    pub ve_prev: Vec2,
    pub wind_prev: Vec2,
    /// Bits delivered per buoy before slot `n`.
    pub acc: Vec<f64>,
    pub energy_j: f64,
}

impl OnlineState {
    /// State at the first slot, on the plan's initial waypoint.
    pub fn start(plan: &OfflinePlan, wind0: Vec2) -> Self {
        Self {
            n: 1,
            q_prev: plan.q[0],
            ve_prev: plan.v_e[0],
            wind_prev: wind0,
            acc: vec![0.0; plan.buoys()],
            energy_j: 0.0,
        }
    }

    pub fn air_prev(&self) -> Vec2 {
        self.ve_prev - self.wind_prev
    }
}

/// `acc + tau * rates`, elementwise.
pub fn accumulate(acc: &[f64], tau: &[f64], rates: &[f64]) -> Vec<f64> {
    acc.iter().zip(tau).zip(rates).map(|((a, t), r)| a + t * r).collect()
}

/// Which deviation bounds are hard; a relaxed bound becomes an elastic
/// penalty on the excess deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub position: bool,
    pub velocity: bool,
}

impl Bounds {
    pub const ALL: Self = Self {
        position: true,
        velocity: true,
    };
}

pub struct P42 {
    pub program: ConicProgram,
    pub v_e: [Var; 2],
    pub tau: Vec<Var>,
    pub delta: Var,
    /// Mbit.
    pub zeta: Var,
    /// Rates at `q[n-1]` in bits/s.
    pub rates: Vec<f64>,
    /// Demand of the slot per buoy after clamping, bits.
    pub demand: Vec<f64>,
}

impl P42 {
    /// `v_e[n]`, `tau_1..K`, `delta_n` and `zeta`.
    pub fn decision_variables(&self) -> usize {
        2 + self.tau.len() + 2
    }
}

fn check_slot(state: &OnlineState, plan: &OfflinePlan, sc: &Scenario) -> Result<()> {
    if state.n == 0 || state.n > plan.n_slots() + 1 {
        return Err(Error::PlanMismatch(format!(
            "slot {} outside 1..={}",
            state.n,
            plan.n_slots() + 1
        )));
    }
    if plan.buoys() != sc.buoys.len() || state.acc.len() != sc.buoys.len() {
        return Err(Error::PlanMismatch(format!(
            "plan has {} buoys, scenario {}, state {}",
            plan.buoys(),
            sc.buoys.len(),
            state.acc.len()
        )));
    }
    Ok(())
}

/// Slot program at `state` under the measured wind `wind`.
pub fn build_p42(
    state: &OnlineState,
    plan: &OfflinePlan,
    sc: &Scenario,
    wind: Vec2,
    opts: &OnlineOptions,
    bounds: Bounds,
) -> Result<P42> {
    check_slot(state, plan, sc)?;
    let n = state.n;
    let ts = plan.slot_s;
    let lim = &sc.limits;
    let e = &sc.energy;
    let k = sc.buoys.len();

    let mut p = ConicProgram::new();
    p.at(n);
    let ve = [p.var("ve.x"), p.var("ve.y")];
    let tau = p.vars("tau", k);
    let delta = p.var("delta");
    let zeta = p.var("zeta");
    let gx = |c: usize| Affine::from(ve[c]);
    let air = [gx(0) - wind.x, gx(1) - wind.y];

    let rates: Vec<f64> = sc.buoys.iter().map(|b| link_rate(state.q_prev, b, &sc.channel)).collect();
    let demand: Vec<f64> = (0..k)
        .map(|j| (plan.targets[j] - state.acc[j] - plan.remaining[n][j]).max(0.0))
        .collect();
    let mut budget = Affine::constant(ts);
    p.nonneg(zeta.into(), Tag::Bound);
    for j in 0..k {
        p.nonneg(tau[j].into(), Tag::CommTime);
        budget = budget - tau[j];
        if demand[j] > 0.0 {
            let got = Affine::from(tau[j]) * (rates[j] / MBIT) + zeta - demand[j] / MBIT;
            p.nonneg(got, Tag::Throughput);
        }
    }
    p.nonneg(budget, Tag::Tdma);

    let mut penalty = Affine::zero();
    let mut deviation = |p: &mut ConicProgram, xs: Vec<Affine>, xi: f64, hard: bool, price: f64, tag: Tag| {
        if hard {
            p.soc(Affine::constant(xi), xs, tag);
        } else {
            let excess = p.var(format!("{tag:?}.excess"));
            p.nonneg(excess.into(), tag);
            p.soc(Affine::from(excess) + xi, xs, tag);
            penalty = penalty.clone().plus(excess, price);
        }
    };
    {
        let next = |c: usize| {
            let (qp, vp, qo) = if c == 0 {
                (state.q_prev.x, state.ve_prev.x, plan.q[n].x)
            } else {
                (state.q_prev.y, state.ve_prev.y, plan.q[n].y)
            };
            gx(c) * (0.5 * ts) + (qp + 0.5 * ts * vp - qo)
        };
        let xs = vec![next(0), next(1)];
        deviation(&mut p, xs, opts.xi_q, bounds.position, opts.position_penalty, Tag::PositionDeviation);
        let off = plan.v_e[n];
        let xs = vec![gx(0) - off.x, gx(1) - off.y];
        deviation(&mut p, xs, opts.xi_v, bounds.velocity, opts.velocity_penalty, Tag::VelocityDeviation);
    }

    let prev = state.air_prev();
    let dv = vec![air[0].clone() - prev.x, air[1].clone() - prev.y];
    p.soc(Affine::constant(lim.a_max * ts), dv.clone(), Tag::AccelLimit);
    p.soc(Affine::constant(lim.v_max), air.to_vec(), Tag::SpeedLimit);
    let v_local = plan.v_e[n] - plan.mean_wind;
    add_speed_floor(&mut p, delta, &air, v_local, lim.v_min(plan.mean_wind));

    let s = prev.norm();
    let g2 = e.gravity * e.gravity;
    let fixed = (e.w1 * s.powi(3) + e.w2 / s) * ts;
    let qol = p.quad_over_lin(dv, Affine::constant(1.0), "acc");
    p.minimize(Affine::constant(fixed) + Affine::from(qol) * (e.w2 / (g2 * s * ts)) + Affine::from(zeta) * opts.w3 + penalty);
    p.clear_index();

    Ok(P42 {
        program: p,
        v_e: ve,
        tau,
        delta,
        zeta,
        rates,
        demand,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Optimal,
    /// Solved with the waypoint deviation bound made elastic.
    DroppedPosition,
    /// Solved with both deviation bounds made elastic.
    DroppedDeviation,
    /// No program solved; airspeed held and time shares given by demand.
    Unrecovered,
}

impl StepStatus {
    pub fn label(self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::DroppedPosition => "dropped-position",
            StepStatus::DroppedDeviation => "dropped-deviation",
            StepStatus::Unrecovered => "unrecovered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub n: usize,
    pub v_e: Vec2,
    pub tau: Vec<f64>,
    pub delta: f64,
    /// Mbit.
    pub zeta: f64,
    /// Slot program objective, or NaN for an unrecovered step.
    pub objective_j: f64,
    pub status: StepStatus,
    /// Rates used for the slot (bits/s).
    pub rates: Vec<f64>,
}

fn solve_with(
    state: &OnlineState,
    plan: &OfflinePlan,
    sc: &Scenario,
    wind: Vec2,
    opts: &OnlineOptions,
    bounds: Bounds,
) -> Result<Option<StepDecision>> {
    let sub = build_p42(state, plan, sc, wind, opts, bounds)?;
    let sol = conic::solve(&sub.program, &opts.solver);
    let usable = sol.status == SolveStatus::Optimal
        || (sol.status == SolveStatus::Inaccurate && sol.primal_residual <= 1e-6);
    if !usable {
        return Ok(None);
    }
    let status = match (bounds.position, bounds.velocity) {
        (true, true) => StepStatus::Optimal,
        (false, true) => StepStatus::DroppedPosition,
        _ => StepStatus::DroppedDeviation,
    };
    Ok(Some(StepDecision {
        n: state.n,
        v_e: Vec2::new(sol.value(sub.v_e[0]), sol.value(sub.v_e[1])),
        tau: sub.tau.iter().map(|t| sol.value(*t).max(0.0)).collect(),
        delta: sol.value(sub.delta),
        zeta: sol.value(sub.zeta).max(0.0),
        objective_j: sol.objective,
        status,
        rates: sub.rates,
    }))
}

/// Solve the slot program, relaxing the waypoint bound and then the
/// ground-velocity bound if it is infeasible. When nothing solves, the
/// airspeed is held and the slot time goes to the buoys by demand.
pub fn online_step(
    state: &OnlineState,
    plan: &OfflinePlan,
    sc: &Scenario,
    wind: Vec2,
    opts: &OnlineOptions,
) -> Result<StepDecision> {
    for bounds in [
        Bounds::ALL,
        Bounds {
            position: false,
            velocity: true,
        },
        Bounds {
            position: false,
            velocity: false,
        },
    ] {
        if let Some(d) = solve_with(state, plan, sc, wind, opts, bounds)? {
            return Ok(d);
        }
    }
    let n = state.n;
    let rates: Vec<f64> = sc.buoys.iter().map(|b| link_rate(state.q_prev, b, &sc.channel)).collect();
    let mut left = plan.slot_s;
    let mut tau = vec![0.0; rates.len()];
    let mut zeta = 0.0f64;
    for j in 0..rates.len() {
        let need = (plan.targets[j] - state.acc[j] - plan.remaining[n][j]).max(0.0);
        let t = (need / rates[j]).min(left);
        tau[j] = t;
        left -= t;
        zeta = zeta.max((need - t * rates[j]) / MBIT);
    }
    Ok(StepDecision {
        n,
        v_e: state.air_prev() + wind,
        tau,
        delta: state.air_prev().norm(),
        zeta,
        objective_j: f64::NAN,
        status: StepStatus::Unrecovered,
        rates,
    })
}

/// Move the state through one slot.
pub fn advance(state: &OnlineState, d: &StepDecision, wind: Vec2, slot_s: f64) -> OnlineState {
    OnlineState {
        n: state.n + 1,
        q_prev: state.q_prev + (state.ve_prev + d.v_e) * (0.5 * slot_s),
        ve_prev: d.v_e,
        wind_prev: wind,
        acc: accumulate(&state.acc, &d.tau, &d.rates),
        energy_j: state.energy_j,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    /// Waypoint reached at the end of the slot.
    pub q: Vec2,
    pub v_e: Vec2,
    pub v_air: Vec2,
    pub wind: Vec2,
    pub tau: Vec<f64>,
    pub zeta: f64,
    /// Energy of waypoint `n - 1` (zero where the mission does not count it).
    pub energy_j: f64,
    pub status: StepStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitBreach {
    pub n: usize,
    pub limit: String,
    pub value: f64,
    pub bound: f64,
}

/// Hard-limit breaches at waypoint `n` of a flown trajectory, relative
/// tolerance `tol`.
fn breaches(traj: &Trajectory, n: usize, tau: Option<&[f64]>, sc: &Scenario, v_min: f64, tol: f64) -> Vec<LimitBreach> {
    let lim = &sc.limits;
    let mut out = Vec::new();
    let speed = traj.v_air[n].norm();
    let mut push = |limit: &str, value: f64, bound: f64| {
        out.push(LimitBreach {
            n,
            limit: limit.into(),
            value,
            bound,
        })
    };
    if speed > lim.v_max * (1.0 + tol) {
        push("max speed", speed, lim.v_max);
    }
    if speed < v_min * (1.0 - tol) {
        push("min speed", speed, v_min);
    }
    let a = traj.accel[n - 1].norm();
    if a > lim.a_max * (1.0 + tol) {
        push("acceleration", a, lim.a_max);
    }
    if let Some(t) = tau {
        let used: f64 = t.iter().sum();
        if used > traj.slot_s * (1.0 + tol) || t.iter().any(|x| *x < 0.0) {
            push("tdma", used, traj.slot_s);
        }
    }
    out
}

/// The plan replayed open-loop against the same wind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub energy_j: f64,
    pub breaches: Vec<LimitBreach>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub trajectory: Trajectory,
    pub total_energy_j: f64,
    pub kinetic_j: f64,
    pub collected: Vec<f64>,
    pub shortfall_bits: Vec<f64>,
    /// Breaches at steps whose program solved.
    pub breaches: Vec<LimitBreach>,
    /// Steps that needed a relaxed or fallback program.
    pub infeasible_steps: usize,
    pub unrecovered_steps: usize,
    pub baseline: BaselineReport,
}

/// Relative tolerance for the hard-limit audit.
pub const LIMIT_TOL: f64 = 1e-6;

/// Fly the plan against `path` with per-slot adaptation.
pub fn run_ho2_path(sc: &Scenario, plan: &OfflinePlan, path: &WindPath, opts: &OnlineOptions) -> Result<RunReport> {
    let w = plan.q.len();
    if path.len() != w {
        return Err(Error::PlanMismatch(format!("wind path has {} slots, plan {w}", path.len())));
    }
    if plan.buoys() != sc.buoys.len() {
        return Err(Error::PlanMismatch(format!(
            "plan has {} buoys, scenario {}",
            plan.buoys(),
            sc.buoys.len()
        )));
    }
    let ws = &path.samples;
    let mut state = OnlineState::start(plan, ws[0]);
    let mut q = vec![plan.q[0]];
    let mut ve = vec![plan.v_e[0]];
    let mut decisions = Vec::with_capacity(w - 1);
    for n in 1..w {
        let d = online_step(&state, plan, sc, ws[n], opts)?;
        state = advance(&state, &d, ws[n], plan.slot_s);
        q.push(state.q_prev);
        ve.push(d.v_e);
        decisions.push(d);
    }
    let traj = Trajectory::from_ground(q, ve, ws.clone(), plan.slot_s, plan.closed);
    let energy = trajectory_energy(&traj, &sc.energy)?;
    let v_min = sc.limits.v_min(plan.mean_wind);
    let mut breaches_all = Vec::new();
    let mut steps = Vec::with_capacity(w - 1);
    for (i, d) in decisions.iter().enumerate() {
        let n = i + 1;
        if d.status != StepStatus::Unrecovered {
            breaches_all.extend(breaches(&traj, n, Some(&d.tau), sc, v_min, LIMIT_TOL));
        }
        steps.push(StepRecord {
            n,
            q: traj.q[n],
            v_e: traj.v_e[n],
            v_air: traj.v_air[n],
            wind: ws[n],
            tau: d.tau.clone(),
            zeta: d.zeta,
            energy_j: energy.per_slot[n - 1],
            status: d.status,
        });
    }
    let shortfall = plan
        .targets
        .iter()
        .zip(&state.acc)
        .map(|(t, a)| (t - a).max(0.0))
        .collect();
    Ok(RunReport {
        seed: path.seed,
        total_energy_j: energy.total,
        kinetic_j: energy.delta,
        collected: state.acc.clone(),
        shortfall_bits: shortfall,
        breaches: breaches_all,
        infeasible_steps: decisions.iter().filter(|d| d.status != StepStatus::Optimal).count(),
        unrecovered_steps: decisions.iter().filter(|d| d.status == StepStatus::Unrecovered).count(),
        baseline: baseline(sc, plan, path)?,
        steps,
        trajectory: traj,
    })
}

/// Follow the plan's ground velocities and schedule without adaptation.
pub fn baseline(sc: &Scenario, plan: &OfflinePlan, path: &WindPath) -> Result<BaselineReport> {
    let traj = Trajectory::from_ground(plan.q.clone(), plan.v_e.clone(), path.samples.clone(), plan.slot_s, plan.closed);
    let energy = trajectory_energy(&traj, &sc.energy)?;
    let v_min = sc.limits.v_min(plan.mean_wind);
    let breaches = (1..traj.waypoints())
        .flat_map(|n| breaches(&traj, n, None, sc, v_min, LIMIT_TOL))
        .collect();
    Ok(BaselineReport {
        energy_j: energy.total,
        breaches,
    })
}

/// One closed-loop mission with the wind path drawn from `seed`.
pub fn run_ho2(sc: &Scenario, plan: &OfflinePlan, model: &WindModel, seed: u64, opts: &OnlineOptions) -> Result<RunReport> {
    let path = sample_path(model, plan.q.len(), seed);
    run_ho2_path(sc, plan, &path, opts)
}

/// Independent missions over `seeds`, in seed order.
pub fn run_ensemble(
    sc: &Scenario,
    plan: &OfflinePlan,
    model: &WindModel,
    seeds: &[u64],
    opts: &OnlineOptions,
    exec: Exec,
) -> Result<Vec<RunReport>> {
    exec.map(seeds, |s| run_ho2(sc, plan, model, *s, opts)).into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    pub mean_baseline_j: f64,
    pub max_shortfall_ratio: f64,
    pub infeasible_steps: usize,
    pub unrecovered_steps: usize,
    pub breaches: usize,
    pub baseline_breaches: usize,
}

pub fn summarize(plan: &OfflinePlan, runs: &[RunReport]) -> EnsembleSummary {
    let m = runs.len().max(1) as f64;
    let mean = runs.iter().map(|r| r.total_energy_j).sum::<f64>() / m;
    let var = runs.iter().map(|r| (r.total_energy_j - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let ratio = runs
        .iter()
        .flat_map(|r| r.shortfall_bits.iter().zip(&plan.targets).map(|(s, t)| if *t > 0.0 { s / t } else { 0.0 }))
        .fold(0.0, f64::max);
    EnsembleSummary {
        runs: runs.len(),
        mean_energy_j: mean,
        std_energy_j: var.sqrt(),
        mean_baseline_j: runs.iter().map(|r| r.baseline.energy_j).sum::<f64>() / m,
        max_shortfall_ratio: ratio,
        infeasible_steps: runs.iter().map(|r| r.infeasible_steps).sum(),
        unrecovered_steps: runs.iter().map(|r| r.unrecovered_steps).sum(),
        breaches: runs.iter().map(|r| r.breaches.len()).sum(),
        baseline_breaches: runs.iter().map(|r| r.baseline.breaches.len()).sum(),
    }
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

impl RunReport {
    /// Per-slot CSV: `n,x,y,vex,vey,vax,vay,windx,windy,tau_1..K,zeta_Mbit,energy_J,status`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let k = self.collected.len();
        let mut body = String::from("n,x,y,vex,vey,vax,vay,windx,windy");
        for j in 1..=k {
            body.push_str(&format!(",tau_{j}"));
        }
        body.push_str(",zeta_Mbit,energy_J,status\n");
        for s in &self.steps {
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                s.n, s.q.x, s.q.y, s.v_e.x, s.v_e.y, s.v_air.x, s.v_air.y, s.wind.x, s.wind.y
            ));
            for t in &s.tau {
                body.push_str(&format!(",{t}"));
            }
            body.push_str(&format!(",{},{},{}\n", s.zeta, s.energy_j, s.status.label()));
        }
        write_text(path, &body)
    }
}

/// Ensemble CSV, one row per run.
pub fn write_ensemble_csv(runs: &[RunReport], path: &Path) -> Result<()> {
    let mut body = String::from(
        "seed,total_J,shortfall_bits,infeasible_steps,unrecovered_steps,breaches,baseline_J,baseline_breaches\n",
    );
    for r in runs {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.seed,
            r.total_energy_j,
            r.shortfall_bits.iter().sum::<f64>(),
            r.infeasible_steps,
            r.unrecovered_steps,
            r.breaches.len(),
            r.baseline.energy_j,
            r.baseline.breaches.len()
        ));
    }
    write_text(path, &body)
}
