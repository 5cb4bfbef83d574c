//! Air-to-sea link rates, TDMA schedules and data-volume accounting.
//!
//! Slot `n` (1-based, `1..=N+1`) is served from waypoint `n - 1`. Schedules
//! and rate tables are stored 0-based so that row `s` of a schedule is slot
//! `s + 1` and reads its rate from row `s` of the rate table.

use serde::{Deserialize, Serialize};

use crate::energy::Trajectory;
use crate::error::{Error, Result};
use crate::lp::{self, LpResult};
use crate::scenario::{Buoy, ChannelParams};
use crate::vector::Vec2;

/// Spectral efficiency in bits/s/Hz at squared horizontal distance `d2`.
pub fn spectral_efficiency(d2: f64, ch: &ChannelParams) -> f64 {
    (ch.ref_snr / (ch.altitude_m * ch.altitude_m + d2)).ln_1p() / std::f64::consts::LN_2
}

/// Achievable rate in bits/s from `q` to `buoy`.
pub fn link_rate(q: Vec2, buoy: &Buoy, ch: &ChannelParams) -> f64 {
    ch.bandwidth_hz * spectral_efficiency((q - buoy.position).norm_sq(), ch)
}

/// Rates `r[s][k]` in bits/s for the serving waypoint of each slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub r: Vec<Vec<f64>>,
}

impl RateTable {
    /// One row per serving waypoint in `q`.
    pub fn new(q: &[Vec2], buoys: &[Buoy], ch: &ChannelParams) -> Self {
        Self {
            r: q.iter()
                .map(|p| buoys.iter().map(|b| link_rate(*p, b, ch)).collect())
                .collect(),
        }
    }

    /// Rates at waypoints `0..=N` of a trajectory.
    pub fn for_trajectory(traj: &Trajectory, buoys: &[Buoy], ch: &ChannelParams) -> Self {
        Self::new(&traj.q[..traj.waypoints() - 1], buoys, ch)
    }

    pub fn slots(&self) -> usize {
        self.r.len()
    }

    pub fn buoys(&self) -> usize {
        self.r.first().map_or(0, Vec::len)
    }
}

/// Time allocations `tau[s][k]` in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommSchedule {
    pub tau: Vec<Vec<f64>>,
}

impl CommSchedule {
    pub fn zeros(slots: usize, buoys: usize) -> Self {
        Self {
            tau: vec![vec![0.0; buoys]; slots],
        }
    }

    pub fn slots(&self) -> usize {
        self.tau.len()
    }

    pub fn buoys(&self) -> usize {
        self.tau.first().map_or(0, Vec::len)
    }

    /// Largest violation of `tau >= 0` and `sum_k tau <= slot_s`.
    pub fn tdma_violation(&self, slot_s: f64) -> f64 {
        self.tau
            .iter()
            .map(|row| {
                let neg = row.iter().fold(0.0f64, |m, &t| m.max(-t));
                neg.max(row.iter().sum::<f64>() - slot_s)
            })
            .fold(0.0, f64::max)
    }
}

/// Bits delivered per buoy.
pub fn collected(rates: &RateTable, sched: &CommSchedule) -> Result<Vec<f64>> {
    if rates.slots() != sched.slots() || rates.buoys() != sched.buoys() {
        return Err(Error::DimensionMismatch(format!(
            "rate table {}x{} vs schedule {}x{}",
            rates.slots(),
            rates.buoys(),
            sched.slots(),
            sched.buoys()
        )));
    }
    let mut out = vec![0.0; sched.buoys()];
    for (tr, rr) in sched.tau.iter().zip(&rates.r) {
        for k in 0..out.len() {
            out[k] += tr[k] * rr[k];
        }
    }
    Ok(out)
}

/// Bits delivered to buoy `k` along `traj`.
pub fn collected_volume(
    traj: &Trajectory,
    sched: &CommSchedule,
    buoys: &[Buoy],
    k: usize,
    ch: &ChannelParams,
) -> Result<f64> {
    if traj.waypoints() != sched.slots() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} waypoints but {} schedule slots",
            traj.waypoints(),
            sched.slots()
        )));
    }
    Ok(sched
        .tau
        .iter()
        .zip(&traj.q)
        .map(|(row, q)| row[k] * link_rate(*q, &buoys[k], ch))
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// `ratio` is the best achievable `min_k collected_k / target_k`; the
    /// schedule is the optimum rescaled so the tightest buoy meets its target
    /// exactly.
    Feasible { schedule: CommSchedule, ratio: f64 },
    Infeasible { ratio: f64 },
}

impl Feasibility {
    pub fn ratio(&self) -> f64 {
        match self {
            Feasibility::Feasible { ratio, .. } | Feasibility::Infeasible { ratio } => *ratio,
        }
    }
}

/// Ratios within this of 1 count as feasible.
pub const RATIO_TOL: f64 = 1e-9;

/// Maximise the minimum collection ratio subject to TDMA; feasible iff the
/// optimum reaches 1.
pub fn feasibility_lp(rates: &RateTable, targets: &[f64], slot_s: f64) -> Feasibility {
    let (slots, k) = (rates.slots(), targets.len());
    let active: Vec<usize> = (0..k).filter(|&i| targets[i] > 0.0).collect();
    if active.is_empty() {
        return Feasibility::Feasible {
            schedule: CommSchedule::zeros(slots, k),
            ratio: f64::INFINITY,
        };
    }
    // columns: t, then tau[s][k] row-major
    let n = 1 + slots * k;
    let col = |s: usize, j: usize| 1 + s * k + j;
    let mut a = Vec::with_capacity(active.len() + slots);
    let mut b = Vec::with_capacity(active.len() + slots);
    for &j in &active {
        let mut row = vec![0.0; n];
        row[0] = 1.0;
        for s in 0..slots {
            row[col(s, j)] = -rates.r[s][j] / targets[j];
        }
        a.push(row);
        b.push(0.0);
    }
    for s in 0..slots {
        let mut row = vec![0.0; n];
        for j in 0..k {
            row[col(s, j)] = 1.0;
        }
        a.push(row);
        b.push(slot_s);
    }
    let mut c = vec![0.0; n];
    c[0] = 1.0;
    let LpResult::Optimal { x, value } = lp::maximize(&c, &a, &b) else {
        unreachable!("collection ratio is bounded by finite rates");
    };
    if value < 1.0 - RATIO_TOL {
        return Feasibility::Infeasible { ratio: value };
    }
    let scale = value.max(1.0);
    let mut schedule = CommSchedule::zeros(slots, k);
    for s in 0..slots {
        for j in 0..k {
            schedule.tau[s][j] = x[col(s, j)] / scale;
        }
    }
    Feasibility::Feasible { schedule, ratio: value }
}
