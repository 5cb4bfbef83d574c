//! Cyclical planning: split a large volume into `M` identical laps, seed each
//! lap from a constant-ground-speed circle or figure eight found by a cheap
//! grid search, then refine with SCA under closure constraints.
//!
//! Pattern waypoints sit on circles at equal angular steps `phi`. With the
//! trapezoidal kinematics a circle of radius `r` is traversed exactly when the
//! ground speed is `V = 2 r tan(phi / 2) / T_s`, which approaches
//! `2 pi r / T0` (circle) or `4 pi r / T0` (eight) as the step shrinks.
//!
//! The orientation `theta` of a figure eight is the angle from the wind
//! direction (north when there is no wind) to the axis through both lobe
//! centres, counter-clockwise. At `theta = 90` the UAV meets headwind at the
//! far end of both lobes.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::{self, Feasibility, RateTable};
use crate::energy::{trajectory_energy, Trajectory};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::sca::{sca_solve, FixedWindPlan, FixedWindProblem, ScaOptions};
use crate::scenario::{Scenario, Slotting};
use crate::vector::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Circular,
    Eight,
}

impl std::str::FromStr for Pattern {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "circular" | "circle" => Ok(Pattern::Circular),
            "eight" | "8" | "8-shape" => Ok(Pattern::Eight),
            other => Err(format!("unknown pattern {other:?} (circular | eight)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternParams {
    pub pattern: Pattern,
    pub radius: f64,
    /// Lap period `T0` in seconds.
    pub period: f64,
    /// Orientation in degrees (figure eight only).
    pub theta_deg: f64,
    /// Constant ground speed.
    pub ground_speed: f64,
    pub center: Vec2,
}

/// `ceil(Q / Q0)`, at least one lap.
pub fn partition_volume(q: f64, q0_ref: f64) -> usize {
    assert!(q0_ref > 0.0, "per-lap volume must be positive");
    ((q / q0_ref) - 1e-9).ceil().max(1.0) as usize
}

/// Slots per lap for a period: `T0 / nominal` rounded, capped, and even for
/// the figure eight so that both lobes get the same count.
pub fn lap_slotting(pattern: Pattern, period: f64, nominal_slot: f64, max_slots: usize) -> Slotting {
    let mut slots = ((period / nominal_slot).round() as usize).clamp(6, max_slots.max(6));
    if pattern == Pattern::Eight && slots % 2 == 1 {
        slots -= 1;
    }
    Slotting {
        slot_s: period / slots as f64,
        n_slots: slots - 1,
    }
}

/// Reference direction that orientations are measured from.
pub fn wind_axis(wind: Vec2) -> Vec2 {
    wind.normalized().unwrap_or(Vec2::new(0.0, 1.0))
}

/// Closed pattern waypoints and ground velocities (`N + 2` each, the last
/// equal to the first) for a lap of `slotting`.
pub fn pattern_states(
    pattern: Pattern,
    center: Vec2,
    radius: f64,
    theta_deg: f64,
    wind: Vec2,
    slotting: Slotting,
) -> (Vec<Vec2>, Vec<Vec2>, f64) {
    let slots = slotting.n_slots + 1;
    let ts = slotting.slot_s;
    let mut q = Vec::with_capacity(slots + 1);
    let mut v = Vec::with_capacity(slots + 1);
    match pattern {
        Pattern::Circular => {
            let phi = std::f64::consts::TAU / slots as f64;
            let speed = 2.0 * radius * (phi / 2.0).tan() / ts;
            let a0 = wind_axis(wind).angle() + theta_deg.to_radians();
            for s in 0..=slots {
                let a = a0 + phi * s as f64;
                q.push(center + Vec2::from_angle(a) * radius);
                v.push(Vec2::new(-a.sin(), a.cos()) * speed);
            }
            (q, v, speed)
        }
        Pattern::Eight => {
            let per = slots / 2;
            let phi = std::f64::consts::TAU / per as f64;
            let speed = 2.0 * radius * (phi / 2.0).tan() / ts;
            let axis = wind_axis(wind).rotate(theta_deg.to_radians());
            // First lobe counter-clockwise about `center + r axis`, second
            // clockwise about `center - r axis`; both pass through `center`
            // heading along `-perp(axis)`.
            for (sign, lobe_centre) in [(1.0, center + axis * radius), (-1.0, center - axis * radius)] {
                let a0 = (center - lobe_centre).angle();
                let start = if q.is_empty() { 0 } else { 1 };
                for s in start..=per {
                    let a = a0 + sign * phi * s as f64;
                    q.push(lobe_centre + Vec2::from_angle(a) * radius);
                    v.push(Vec2::new(-a.sin(), a.cos()) * (sign * speed));
                }
            }
            let last = q.len() - 1;
            q[last] = q[0];
            v[last] = v[0];
            (q, v, speed)
        }
    }
}

/// Closed-lap trajectory of a pattern under constant wind.
pub fn pattern_trajectory(params: &PatternParams, wind: Vec2, slotting: Slotting) -> Trajectory {
    let (q, v, _) = pattern_states(params.pattern, params.center, params.radius, params.theta_deg, wind, slotting);
    let w = vec![wind; q.len()];
    Trajectory::from_ground(q, v, w, slotting.slot_s, true)
}

/// Orientation of a lap in degrees `[0, 180)`: the angle from the wind axis
/// to the principal axis of its waypoints. For a figure eight that is the
/// axis through both lobes.
pub fn lap_orientation_deg(traj: &Trajectory, wind: Vec2) -> f64 {
    let pts = &traj.q[..traj.q.len() - 1];
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vec2::ZERO, |a, p| a + *p) / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    let axis = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    (axis - wind_axis(wind).angle()).to_degrees().rem_euclid(180.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitSearch {
    pub pattern: Pattern,
    /// Orientations tried (degrees); ignored for circles.
    pub thetas: Vec<f64>,
    /// Geometric period grid: first value, ratio and cap (seconds).
    pub period_ratio: f64,
    pub period_cap: f64,
    pub radius_points: usize,
    pub radius_min: f64,
    pub max_slots: usize,
    pub exec: Exec,
}

impl InitSearch {
    pub fn new(pattern: Pattern) -> Self {
        Self {
            pattern,
            thetas: (0..24).map(|i| 15.0 * i as f64).collect(),
            period_ratio: 1.25,
            period_cap: 600.0,
            radius_points: 12,
            radius_min: 50.0,
            max_slots: 100,
            exec: Exec::default(),
        }
    }

    pub fn radii(&self, scenario: &Scenario) -> Vec<f64> {
        let c = scenario.buoy_center();
        let spread = scenario.buoys.iter().map(|b| (b.position - c).norm()).fold(0.0, f64::max);
        let hi = (2.0 * spread).max(500.0);
        let n = self.radius_points.max(2);
        (0..n)
            .map(|i| self.radius_min + (hi - self.radius_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn periods(&self, scenario: &Scenario) -> Vec<f64> {
        let lobes = if self.pattern == Pattern::Eight { 2.0 } else { 1.0 };
        let mut t = lobes * std::f64::consts::TAU * self.radius_min / scenario.limits.v_max;
        let mut out = Vec::new();
        while t <= self.period_cap {
            out.push(t);
            t *= self.period_ratio;
        }
        out
    }
}

/// One evaluated pattern candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub id: usize,
    pub period: f64,
    pub radius: f64,
    pub theta_deg: f64,
    pub feasible: bool,
    /// Pattern energy for feasible candidates, SCA energy for fine-tune rows.
    pub energy_j: Option<f64>,
    /// Best collection ratio from the feasibility program.
    pub ratio: f64,
    pub stage: String,
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<()> {
    let mut body = String::from("candidate,stage,T0,r,theta,feasible,ratio,energy_J\n");
    for r in rows {
        body.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.id,
            r.stage,
            r.period,
            r.radius,
            r.theta_deg,
            r.feasible,
            r.ratio,
            r.energy_j.map(|e| e.to_string()).unwrap_or_default()
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternStart {
    pub params: PatternParams,
    pub slotting: Slotting,
    pub trajectory: Trajectory,
    pub schedule: comms::CommSchedule,
    pub energy_j: f64,
}

/// Evaluate one pattern: flight limits, feasibility program, lap energy.
/// Returns the collection ratio and, when feasible, the start.
pub fn evaluate_pattern(
    scenario: &Scenario,
    wind: Vec2,
    per_lap: &[f64],
    pattern: Pattern,
    period: f64,
    radius: f64,
    theta_deg: f64,
    max_slots: usize,
) -> (f64, Option<PatternStart>) {
    let slotting = lap_slotting(pattern, period, scenario.slotting.slot_s, max_slots);
    let center = scenario.buoy_center();
    let (q, v, speed) = pattern_states(pattern, center, radius, theta_deg, wind, slotting);
    let params = PatternParams {
        pattern,
        radius,
        period,
        theta_deg,
        ground_speed: speed,
        center,
    };
    let traj = Trajectory::from_ground(q, v, vec![wind; slotting.waypoints()], slotting.slot_s, true);
    let lim = &scenario.limits;
    let v_min = lim.v_min(wind);
    let speeds_ok = traj.v_air.iter().all(|a| a.norm() >= v_min && a.norm() <= lim.v_max);
    let accel_ok = traj.accel.iter().all(|a| a.norm() <= lim.a_max);
    if !speeds_ok || !accel_ok {
        return (0.0, None);
    }
    let rates = RateTable::for_trajectory(&traj, &scenario.buoys, &scenario.channel);
    match comms::feasibility_lp(&rates, per_lap, slotting.slot_s) {
        Feasibility::Feasible { schedule, ratio } => match trajectory_energy(&traj, &scenario.energy) {
            Ok(e) => (
                ratio,
                Some(PatternStart {
                    params,
                    slotting,
                    trajectory: traj,
                    schedule,
                    energy_j: e.total,
                }),
            ),
            Err(_) => (ratio, None),
        },
        Feasibility::Infeasible { ratio } => (ratio, None),
    }
}

/// Candidate order: energy, then shorter period, then smaller radius.
fn better(a: &PatternStart, b: &PatternStart) -> bool {
    (a.energy_j, a.params.period, a.params.radius) < (b.energy_j, b.params.period, b.params.radius)
}

/// Grid search over period, radius and (for the eight) orientation for the
/// cheapest constant-ground-speed lap that delivers `per_lap` bits per buoy.
pub fn initial_trajectory(
    scenario: &Scenario,
    wind: Vec2,
    per_lap: &[f64],
    search: &InitSearch,
) -> Result<(PatternStart, Vec<TraceRow>)> {
    let thetas = match search.pattern {
        Pattern::Circular => vec![0.0],
        Pattern::Eight => search.thetas.clone(),
    };
    let mut grid = Vec::new();
    for &t in &search.periods(scenario) {
        for &r in &search.radii(scenario) {
            for &th in &thetas {
                grid.push((t, r, th));
            }
        }
    }
    let results = search.exec.map(&grid, |&(t, r, th)| {
        evaluate_pattern(scenario, wind, per_lap, search.pattern, t, r, th, search.max_slots)
    });
    let mut trace = Vec::with_capacity(grid.len());
    let mut best: Option<PatternStart> = None;
    let mut best_ratio = 0.0f64;
    for (id, (&(t, r, th), (ratio, start))) in grid.iter().zip(results).enumerate() {
        best_ratio = best_ratio.max(ratio);
        trace.push(TraceRow {
            id,
            period: t,
            radius: r,
            theta_deg: th,
            feasible: start.is_some(),
            energy_j: start.as_ref().map(|s| s.energy_j),
            ratio,
            stage: "init".into(),
        });
        if let Some(s) = start {
            if best.as_ref().is_none_or(|b| better(&s, b)) {
                best = Some(s);
            }
        }
    }
    match best {
        Some(b) => Ok((b, trace)),
        None => Err(Error::NoFeasibleInit(format!(
            "{} candidates, best collection ratio {best_ratio:.4}",
            grid.len()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicalOptions {
    pub search: InitSearch,
    pub period_factors: Vec<f64>,
    pub theta_offsets: Vec<f64>,
    pub sca: ScaOptions,
}

impl CyclicalOptions {
    pub fn new(pattern: Pattern) -> Self {
        Self {
            search: InitSearch::new(pattern),
            period_factors: vec![0.9, 0.95, 1.0, 1.05, 1.1],
            theta_offsets: vec![0.0, -15.0, 15.0, -30.0, 30.0],
            sca: ScaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CyclicalPlan {
    pub laps: usize,
    /// Bits per buoy per lap.
    pub per_lap: Vec<f64>,
    pub lap: FixedWindPlan,
    /// Pattern that seeded the kept lap.
    pub params: PatternParams,
    /// The grid-search winner, before fine tuning.
    pub initial: PatternParams,
    pub initial_energy_j: f64,
    /// Measured orientation of the refined lap, see [`lap_orientation_deg`].
    pub orientation_deg: f64,
    pub total_energy_j: f64,
    pub trace: Vec<TraceRow>,
}

/// Volume requirement for a cyclical run: either a per-lap volume or a lap count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LapSplit {
    PerLap(f64),
    Laps(usize),
}

/// Laps and per-lap targets for the scenario's buoy volumes.
pub fn split_targets(scenario: &Scenario, split: LapSplit) -> (usize, Vec<f64>) {
    let targets = scenario.targets();
    let laps = match split {
        LapSplit::Laps(m) => m.max(1),
        LapSplit::PerLap(q0) => targets.iter().map(|q| partition_volume(*q, q0)).max().unwrap_or(1),
    };
    let per_lap = targets.iter().map(|q| q / laps as f64).collect();
    (laps, per_lap)
}

/// Initialisation by pattern search, SCA on the winner, then SCA from
/// perturbed periods (and orientations) around it; the cheapest lap is kept.
pub fn optimize_cyclical(scenario: &Scenario, split: LapSplit, wind: Vec2, opts: &CyclicalOptions) -> Result<CyclicalPlan> {
    let (laps, per_lap) = split_targets(scenario, split);
    let (init, mut trace) = initial_trajectory(scenario, wind, &per_lap, &opts.search)?;
    let p0 = init.params;
    let thetas: Vec<f64> = match p0.pattern {
        Pattern::Circular => vec![p0.theta_deg],
        Pattern::Eight => opts.theta_offsets.iter().map(|d| (p0.theta_deg + d).rem_euclid(360.0)).collect(),
    };
    let mut tune = Vec::new();
    for &f in &opts.period_factors {
        for &th in &thetas {
            tune.push((f * p0.period, th));
        }
    }
    let exec = opts.search.exec;
    let runs = exec.map(&tune, |&(t, th)| -> (f64, Option<Result<(FixedWindPlan, PatternParams)>>) {
        let (ratio, start) = evaluate_pattern(scenario, wind, &per_lap, p0.pattern, t, p0.radius, th, opts.search.max_slots);
        let Some(start) = start else {
            return (ratio, None);
        };
        let problem = FixedWindProblem::periodic(scenario, wind, start.slotting, per_lap.clone());
        let run = sca_solve(&problem, &start.trajectory, &start.schedule, &opts.sca).map(|p| (p, start.params));
        (ratio, Some(run))
    });
    let mut best: Option<(FixedWindPlan, PatternParams)> = None;
    let mut first_err = None;
    let base = trace.len();
    for (i, (&(t, th), (ratio, run))) in tune.iter().zip(runs).enumerate() {
        let energy = match &run {
            Some(Ok((p, _))) => Some(p.energy.total),
            _ => None,
        };
        trace.push(TraceRow {
            id: base + i,
            period: t,
            radius: p0.radius,
            theta_deg: th,
            feasible: energy.is_some(),
            energy_j: energy,
            ratio,
            stage: "fine-tune".into(),
        });
        match run {
            Some(Ok((p, params))) => {
                let replace = best.as_ref().is_none_or(|(b, bp)| {
                    (p.energy.total, params.period) < (b.energy.total, bp.period)
                });
                if replace {
                    best = Some((p, params));
                }
            }
            Some(Err(e)) => {
                first_err.get_or_insert(e);
            }
            None => {}
        }
    }
    let Some((lap, params)) = best else {
        return Err(first_err.unwrap_or_else(|| Error::NoFeasibleInit("no fine-tune candidate was feasible".into())));
    };
    Ok(CyclicalPlan {
        orientation_deg: lap_orientation_deg(&lap.trajectory, wind),
        laps,
        total_energy_j: laps as f64 * lap.energy.total,
        per_lap,
        lap,
        params,
        initial: p0,
        initial_energy_j: init.energy_j,
        trace,
    })
}

#[cfg(test)]
mod tests;
