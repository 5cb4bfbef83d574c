//! Stochastic reference plans by sample average approximation.
//!
//! The fixed-wind subproblem is rewritten over ground velocity `v_e`, with
//! airspeed `v_e - w`. Wind-dependent constraints become expectations over
//! `S` sampled wind paths:
//!
//! ```text
//! (1/S) sum_i |v_e[n+1] - v_e[n] - (w_i[n+1] - w_i[n])| <= a_max T_s
//! (1/S) sum_i |v_e[n] - w_i[n]|                         <= V_max
//! (1/S) sum_i |v_e[0] - w_i[0] - v0|                    <= eps1   (and eps2 at N+1)
//! ```
//!
//! and the linearised airspeed floor is averaged, which leaves it linear in
//! `v_e`. The objective prices airspeed at the mean wind, a lower bound on
//! the expected energy. Samples are drawn once and reused every iteration.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::{CommSchedule, RateTable};
use crate::conic::{self, check_solution, Affine, ConicProgram, SolveStatus, Tag, Var};
use crate::energy::{counted_waypoints, trajectory_energy, Trajectory};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::sca::{
    add_comm_block, add_energy_objective, add_speed_floor, aff2, vec_vars, Boundary, FixedWindProblem, IterRecord,
    LocalPoint, ScaOptions, Termination,
};
use crate::scenario::{Scenario, Slotting};
use crate::vector::Vec2;
use crate::wind::{saa_samples, WindModel, WindPath};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaaConfig {
    pub samples: usize,
    /// Tolerance on the initial airspeed (m/s).
    pub eps1: f64,
    /// Tolerance on the final airspeed (m/s).
    pub eps2: f64,
    /// Sample `i` uses seed `seed + i`.
    pub seed: u64,
}

impl SaaConfig {
    pub fn from_scenario(s: &Scenario, seed: u64) -> Self {
        Self {
            samples: s.saa_samples,
            eps1: s.tolerances.eps1,
            eps2: s.tolerances.eps2,
            seed,
        }
    }
}

/// A fixed-wind problem at the mean wind together with its wind samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SpProblem {
    pub base: FixedWindProblem,
    pub model: WindModel,
    pub config: SaaConfig,
    pub samples: Vec<WindPath>,
}

impl SpProblem {
    /// Draws `config.samples` paths; `base.wind` is replaced by the model mean.
    pub fn new(mut base: FixedWindProblem, model: WindModel, config: SaaConfig, exec: Exec) -> Result<Self> {
        if config.samples == 0 {
            return Err(Error::DimensionMismatch("sample count S must be at least 1".into()));
        }
        base.wind = model.mean;
        let samples = saa_samples(&model, base.slotting.waypoints(), config.samples, config.seed, exec);
        Ok(Self {
            base,
            model,
            config,
            samples,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.samples.iter().map(|p| p.seed).collect()
    }

    fn check_dims(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::DimensionMismatch("no wind samples".into()));
        }
        let w = self.base.slotting.waypoints();
        if let Some(p) = self.samples.iter().find(|p| p.len() != w) {
            return Err(Error::DimensionMismatch(format!(
                "wind sample {} has {} slots, expected {w}",
                p.seed,
                p.len()
            )));
        }
        Ok(())
    }
}

/// Distinct vectors with multiplicities, in first-seen order.
fn group(values: impl IntoIterator<Item = Vec2>) -> Vec<(Vec2, usize)> {
    let mut out: Vec<(Vec2, usize)> = Vec::new();
    let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for v in values {
        let key = (v.x.to_bits(), v.y.to_bits());
        match seen.get(&key) {
            Some(&i) => out[i].1 += 1,
            None => {
                seen.insert(key, out.len());
                out.push((v, 1));
            }
        }
    }
    out
}

fn sample_mean(groups: &[(Vec2, usize)]) -> Vec2 {
    if let [(v, _)] = groups {
        return *v;
    }
    let total: usize = groups.iter().map(|g| g.1).sum();
    groups.iter().fold(Vec2::ZERO, |acc, (v, c)| acc + *v * *c as f64) / total as f64
}

/// `(1/S) sum_i |expr - offset_i| <= limit` over grouped offsets. A single
/// group emits the deterministic cone `|expr - offset| <= limit`.
pub(crate) fn add_mean_norm_bound(
    p: &mut ConicProgram,
    expr: &[Affine; 2],
    groups: &[(Vec2, usize)],
    limit: f64,
    tag: Tag,
    name: &str,
) {
    let shifted = |o: Vec2| vec![expr[0].clone() - o.x, expr[1].clone() - o.y];
    if let [(o, _)] = groups {
        p.soc(Affine::constant(limit), shifted(*o), tag);
        return;
    }
    let total: usize = groups.iter().map(|g| g.1).sum();
    let mut budget = Affine::constant(limit * total as f64);
    for (j, (o, c)) in groups.iter().enumerate() {
        let t = p.var(format!("{name}[{j}]"));
        p.soc(t.into(), shifted(*o), tag);
        budget = budget.plus(t, -(*c as f64));
    }
    p.nonneg(budget, tag);
}

/// Grouped per-waypoint wind offsets used by the expectation constraints.
struct SampleSets {
    /// Wind at each waypoint.
    at: Vec<Vec<(Vec2, usize)>>,
    /// Wind change over each slot.
    step: Vec<Vec<(Vec2, usize)>>,
}

impl SampleSets {
    fn new(samples: &[WindPath], exec: Exec) -> Self {
        let w = samples[0].len();
        let at = exec.map_range(w, |n| group(samples.iter().map(|p| p.samples[n])));
        let step = exec.map_range(w - 1, |n| group(samples.iter().map(|p| p.samples[n + 1] - p.samples[n])));
        Self { at, step }
    }
}

/// The sample-average subproblem with handles to its decision variables.
pub struct P32 {
    pub program: ConicProgram,
    pub q: Vec<[Var; 2]>,
    /// Ground velocity.
    pub v_e: Vec<[Var; 2]>,
    pub tau: Vec<Vec<Var>>,
    pub amp: Vec<Vec<Var>>,
    pub delta: Vec<Var>,
}

impl P32 {
    fn extract(&self, sol: &conic::ConicSolution, problem: &SpProblem) -> (Trajectory, CommSchedule) {
        let g = |v: &[Var; 2]| Vec2::new(sol.value(v[0]), sol.value(v[1]));
        let base = &problem.base;
        let traj = Trajectory::from_ground(
            self.q.iter().map(g).collect(),
            self.v_e.iter().map(g).collect(),
            vec![base.wind; base.slotting.waypoints()],
            base.slotting.slot_s,
            base.boundary.is_periodic(),
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

/// Build the sample-average subproblem at `local` (airspeeds relative to the
/// mean wind).
pub fn build_p32(problem: &SpProblem, local: &LocalPoint, exec: Exec) -> Result<P32> {
    problem.check_dims()?;
    let base = &problem.base;
    let sc = &base.scenario;
    let n = base.slotting.n_slots;
    let w = n + 2;
    let k = sc.buoys.len();
    let ts = base.slotting.slot_s;
    if local.q.len() != w || local.v.len() != w || local.amp.len() != n + 1 || local.amp.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "local point has {} waypoints / {} slots, expected {w} / {}",
            local.q.len(),
            local.amp.len(),
            n + 1
        )));
    }
    let sets = SampleSets::new(&problem.samples, exec);
    let mean = base.wind;
    let lim = &sc.limits;

    let mut p = ConicProgram::new();
    let q = vec_vars(&mut p, "q", w);
    let v_e = vec_vars(&mut p, "ve", w);
    let delta = p.vars("delta", n + 1);
    let ground: Vec<[Affine; 2]> = v_e.iter().map(|x| aff2(*x)).collect();
    let air_mean: Vec<[Affine; 2]> = ground
        .iter()
        .map(|g| [g[0].clone() - mean.x, g[1].clone() - mean.y])
        .collect();

    for i in 0..=n {
        p.at(i);
        for c in 0..2 {
            let e = Affine::from(q[i + 1][c]) - q[i][c] - (v_e[i][c] + v_e[i + 1][c]) * (0.5 * ts);
            p.eq_zero(e, Tag::Kinematics);
        }
        let dv = [
            Affine::from(v_e[i + 1][0]) - v_e[i][0],
            Affine::from(v_e[i + 1][1]) - v_e[i][1],
        ];
        add_mean_norm_bound(&mut p, &dv, &sets.step[i], lim.a_max * ts, Tag::AccelLimit, &format!("acc_s[{i}]"));
    }
    p.clear_index();

    match base.boundary {
        Boundary::Open(e) => {
            for c in 0..2 {
                let (a, b) = if c == 0 { (e.q0.x, e.qf.x) } else { (e.q0.y, e.qf.y) };
                p.eq_zero(q[0][c] - a, Tag::InitialState);
                p.eq_zero(q[w - 1][c] - b, Tag::FinalState);
            }
            let shift = |g: &[(Vec2, usize)], v: Vec2| g.iter().map(|(o, c)| (*o + v, *c)).collect::<Vec<_>>();
            let cfg = &problem.config;
            add_mean_norm_bound(&mut p, &ground[0], &shift(&sets.at[0], e.v0), cfg.eps1, Tag::EndpointRelax, "eps1");
            add_mean_norm_bound(&mut p, &ground[w - 1], &shift(&sets.at[w - 1], e.vf), cfg.eps2, Tag::EndpointRelax, "eps2");
        }
        Boundary::Transit { q0, qf } => {
            for c in 0..2 {
                let (a, b) = if c == 0 { (q0.x, qf.x) } else { (q0.y, qf.y) };
                p.eq_zero(q[0][c] - a, Tag::InitialState);
                p.eq_zero(q[w - 1][c] - b, Tag::FinalState);
                p.eq_zero(v_e[0][c] - v_e[w - 1][c], Tag::Closure);
            }
        }
        Boundary::Periodic => {
            for c in 0..2 {
                p.eq_zero(q[0][c] - q[w - 1][c], Tag::Closure);
                p.eq_zero(v_e[0][c] - v_e[w - 1][c], Tag::Closure);
            }
        }
    }

    let speed_from = if base.boundary.is_periodic() { 0 } else { 1 };
    for i in speed_from..=n {
        p.at(i);
        add_mean_norm_bound(&mut p, &ground[i], &sets.at[i], lim.v_max, Tag::SpeedLimit, &format!("spd_s[{i}]"));
    }
    let v_min = base.v_min();
    for j in 1..=n + 1 {
        p.at(j);
        let wbar = sample_mean(&sets.at[j]);
        let air = [ground[j][0].clone() - wbar.x, ground[j][1].clone() - wbar.y];
        add_speed_floor(&mut p, delta[j - 1], &air, local.v[j], v_min);
    }
    p.clear_index();

    let comm = add_comm_block(&mut p, &q, local, &sc.buoys, &sc.channel, &base.targets, ts);

    let periodic = base.boundary.is_periodic();
    let delta_of = |i: usize| if i == 0 { delta[n] } else { delta[i - 1] };
    add_energy_objective(&mut p, &air_mean, delta_of, counted_waypoints(n, periodic), ts, &sc.energy);
    p.add_objective(Affine::constant(base.kinetic_delta()));

    Ok(P32 {
        program: p,
        q,
        v_e,
        tau: comm.tau,
        amp: comm.amp,
        delta,
    })
}

/// Share of (sample, waypoint) pairs at which a plan breaks a hard limit
/// when flown open-loop against the sampled winds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SaaStats {
    pub speed_ceiling: f64,
    pub speed_floor: f64,
    pub accel: f64,
    /// Mean over samples of the largest acceleration in m/s^2.
    pub mean_peak_accel: f64,
}

/// Open-loop limit statistics of ground velocities `v_e` under `samples`.
pub fn saa_statistics(problem: &FixedWindProblem, v_e: &[Vec2], samples: &[WindPath], exec: Exec) -> SaaStats {
    let lim = &problem.scenario.limits;
    let v_min = problem.v_min();
    let ts = problem.slotting.slot_s;
    let from = if problem.boundary.is_periodic() { 0 } else { 1 };
    let n = problem.slotting.n_slots;
    let per: Vec<[f64; 4]> = exec.map(samples, |path| {
        let air: Vec<Vec2> = v_e.iter().zip(&path.samples).map(|(v, w)| *v - *w).collect();
        let hi = air[from..=n].iter().filter(|a| a.norm() > lim.v_max * (1.0 + 1e-9)).count() as f64;
        let lo = air[1..].iter().filter(|a| a.norm() < v_min * (1.0 - 1e-9)).count() as f64;
        let acc: Vec<f64> = air.windows(2).map(|p| (p[1] - p[0]).norm() / ts).collect();
        let bad = acc.iter().filter(|a| **a > lim.a_max * (1.0 + 1e-9)).count() as f64;
        let peak = acc.iter().cloned().fold(0.0, f64::max);
        [hi / (n + 1 - from) as f64, lo / (n + 1) as f64, bad / acc.len() as f64, peak]
    });
    let s = per.len().max(1) as f64;
    let avg = |c: usize| per.iter().map(|r| r[c]).sum::<f64>() / s;
    SaaStats {
        speed_ceiling: avg(0),
        speed_floor: avg(1),
        accel: avg(2),
        mean_peak_accel: avg(3),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanSource {
    StochasticProgram,
    FixedWind,
    Benchmark,
}

/// Reference plan for online operation.
///
/// Schedule row `s` is the slot from waypoint `s` to `s + 1` and is served
/// at the rate of waypoint `s`. `remaining[n][k]` is the volume planned for
/// rows `n..`, so `remaining[0]` is the planned total and `remaining[N+1]`
/// is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflinePlan {
    pub source: PlanSource,
    pub slot_s: f64,
    pub closed: bool,
    pub boundary: Boundary,
    pub mean_wind: Vec2,
    pub q: Vec<Vec2>,
    pub v_e: Vec<Vec2>,
    pub tau: Vec<Vec<f64>>,
    /// Planned rates in bits/s.
    pub rates: Vec<Vec<f64>>,
    pub remaining: Vec<Vec<f64>>,
    /// Bits per buoy.
    pub targets: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Planning objective: energy priced at the mean wind (J).
    pub objective_j: f64,
    pub log: Vec<IterRecord>,
    pub termination: Termination,
    pub saa: Option<SaaStats>,
}

/// Suffix sums of `tau * rate` per buoy, one row per waypoint index.
pub fn remaining_volume_table(plan: &OfflinePlan) -> Vec<Vec<f64>> {
    suffix_volumes(&plan.tau, &plan.rates)
}

fn suffix_volumes(tau: &[Vec<f64>], rates: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = tau.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; k]; tau.len() + 1];
    for s in (0..tau.len()).rev() {
        for j in 0..k {
            out[s][j] = out[s + 1][j] + tau[s][j] * rates[s][j];
        }
    }
    out
}

impl OfflinePlan {
    /// Wrap a trajectory flown against the constant mean wind.
    pub fn from_trajectory(
        source: PlanSource,
        problem: &FixedWindProblem,
        traj: &Trajectory,
        sched: &CommSchedule,
    ) -> Result<Self> {
        let sc = &problem.scenario;
        let rates = RateTable::for_trajectory(traj, &sc.buoys, &sc.channel).r;
        if rates.len() != sched.slots() {
            return Err(Error::DimensionMismatch(format!(
                "{} slots in schedule, {} in trajectory",
                sched.slots(),
                rates.len()
            )));
        }
        let energy = trajectory_energy(traj, &sc.energy)?;
        Ok(Self {
            source,
            slot_s: traj.slot_s,
            closed: traj.closed,
            boundary: problem.boundary,
            mean_wind: problem.wind,
            q: traj.q.clone(),
            v_e: traj.v_e.clone(),
            remaining: suffix_volumes(&sched.tau, &rates),
            tau: sched.tau.clone(),
            rates,
            targets: problem.targets.clone(),
            seeds: Vec::new(),
            objective_j: energy.per_slot.iter().sum::<f64>() + problem.kinetic_delta(),
            log: Vec::new(),
            termination: Termination::Converged,
            saa: None,
        })
    }

    pub fn n_slots(&self) -> usize {
        self.q.len() - 2
    }

    pub fn buoys(&self) -> usize {
        self.targets.len()
    }

    /// The plan as flown against its mean wind.
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::from_ground(
            self.q.clone(),
            self.v_e.clone(),
            vec![self.mean_wind; self.q.len()],
            self.slot_s,
            self.closed,
        )
    }

    pub fn schedule(&self) -> CommSchedule {
        CommSchedule { tau: self.tau.clone() }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let n = plan.q.len();
        let k = plan.targets.len();
        let ok = n >= 3
            && plan.v_e.len() == n
            && plan.tau.len() == n - 1
            && plan.rates.len() == n - 1
            && plan.remaining.len() == n
            && plan.tau.iter().chain(&plan.rates).chain(&plan.remaining).all(|r| r.len() == k);
        if !ok {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: "inconsistent plan dimensions".into(),
            });
        }
        Ok(plan)
    }

    /// The mean-wind planning problem this plan solves for `sc`.
    pub fn problem(&self, sc: &Scenario) -> Result<FixedWindProblem> {
        self.check_scenario(sc)?;
        Ok(FixedWindProblem {
            scenario: sc.clone(),
            slotting: Slotting {
                slot_s: self.slot_s,
                n_slots: self.n_slots(),
            },
            wind: self.mean_wind,
            targets: self.targets.clone(),
            boundary: self.boundary,
        })
    }

    /// Check that the plan fits the scenario it is replayed against.
    pub fn check_scenario(&self, sc: &Scenario) -> Result<()> {
        if self.buoys() != sc.buoys.len() {
            return Err(Error::PlanMismatch(format!(
                "plan has {} buoys, scenario {}",
                self.buoys(),
                sc.buoys.len()
            )));
        }
        let fresh = RateTable::new(&self.q[..self.q.len() - 1], &sc.buoys, &sc.channel).r;
        let worst = fresh
            .iter()
            .flatten()
            .zip(self.rates.iter().flatten())
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if worst > 1e-6 {
            return Err(Error::PlanMismatch(format!(
                "planned rates differ from the scenario's channel by {worst:.2e} (relative)"
            )));
        }
        Ok(())
    }
}

/// Planning objective of a mean-wind trajectory: counted flight energy plus
/// the boundary's kinetic term.
fn sp_objective(problem: &SpProblem, traj: &Trajectory) -> Result<f64> {
    let e = trajectory_energy(traj, &problem.base.scenario.energy)?;
    Ok(e.per_slot.iter().sum::<f64>() + problem.base.kinetic_delta())
}

/// SCA over sample-average subproblems from a fixed-wind initial plan at the
/// mean wind. The first step is always taken (the initial plan need not
/// satisfy the expectation constraints); later steps must not increase the
/// objective.
pub fn solve_offline_sp(
    problem: &SpProblem,
    init_traj: &Trajectory,
    init_sched: &CommSchedule,
    opts: &ScaOptions,
    exec: Exec,
) -> Result<OfflinePlan> {
    problem.check_dims()?;
    let base = &problem.base;
    let sc = &base.scenario;
    let n = base.slotting.n_slots;
    if init_traj.waypoints() != n + 2 || init_sched.slots() != n + 1 || init_sched.buoys() != sc.buoys.len() {
        return Err(Error::DimensionMismatch(format!(
            "initial plan {} waypoints / {} slots for N = {n}",
            init_traj.waypoints(),
            init_sched.slots()
        )));
    }
    let mut traj = Trajectory::from_ground(
        init_traj.q.clone(),
        init_traj.v_e.clone(),
        vec![base.wind; n + 2],
        base.slotting.slot_s,
        base.boundary.is_periodic(),
    );
    let mut sched = init_sched.clone();
    let mut objective = sp_objective(problem, &traj)?;
    let mut log = vec![IterRecord {
        iteration: 0,
        objective_j: objective,
        max_violation: 0.0,
    }];
    let mut termination = Termination::MaxIterations;

    for l in 1..=opts.max_iters {
        let local = LocalPoint::from_plan(&traj, &sched, &sc.buoys, &sc.channel, l - 1);
        let sub = build_p32(problem, &local, exec)?;
        let sol = conic::solve(&sub.program, &opts.solver);
        let usable = sol.status == SolveStatus::Optimal
            || (sol.status == SolveStatus::Inaccurate && sol.primal_residual <= 1e-6);
        if !usable {
            if l == 1 {
                return Err(match sol.status {
                    SolveStatus::Infeasible => Error::Infeasible {
                        stage: "sample-average".into(),
                        tags: sol
                            .certificate_tags(&sub.program)
                            .iter()
                            .map(|t| format!("{t:?}"))
                            .collect(),
                    },
                    status => Error::Solver { iteration: l, status },
                });
            }
            termination = Termination::SolverStopped(sol.status);
            break;
        }
        let (t_new, s_new) = sub.extract(&sol, problem);
        let o_new = sp_objective(problem, &t_new)?;
        if l > 1 && o_new > objective {
            termination = if o_new <= objective * (1.0 + 1e-9) {
                Termination::Converged
            } else {
                Termination::RejectedStep
            };
            break;
        }
        let decrease = (objective - o_new) / objective.abs().max(1.0);
        traj = t_new;
        sched = s_new;
        objective = o_new;
        log.push(IterRecord {
            iteration: l,
            objective_j: objective,
            max_violation: check_solution(&sub.program, &sol.x).max,
        });
        if l > 1 && decrease < opts.tol {
            termination = Termination::Converged;
            break;
        }
    }

    let mut plan = OfflinePlan::from_trajectory(PlanSource::StochasticProgram, base, &traj, &sched)?;
    plan.seeds = problem.seeds();
    plan.objective_j = objective;
    plan.log = log;
    plan.termination = termination;
    plan.saa = Some(saa_statistics(base, &traj.v_e, &problem.samples, exec));
    Ok(plan)
}
