//! Fixed-wing propulsion energy.
//!
//! Level-flight power at airspeed `v` and acceleration `a` is
//! `w1 |v|^3 + (w2 / |v|) (1 + |a|^2 / g^2)`. Mission energy sums that power
//! over the counted waypoints times the slot length and adds the kinetic term
//! `m/2 (|v[N+1]|^2 - |v[0]|^2)`.
//!
//! Open missions count waypoints `1..=N`. Closed laps count `0..=N`, the
//! `N + 1` distinct states of the periodic orbit (waypoint `N + 1` is
//! waypoint 0 of the next lap).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::EnergyParams;
use crate::vector::Vec2;

/// Airspeeds below this are rejected; the model diverges as `|v| -> 0`.
pub const MIN_AIRSPEED: f64 = 0.1;

/// Discretised flight: `N + 2` waypoints, `N + 1` slots of `slot_s` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub q: Vec<Vec2>,
    /// Ground velocity.
    pub v_e: Vec<Vec2>,
    /// Airspeed, `v_e - wind`.
    pub v_air: Vec<Vec2>,
    /// Wind the trajectory was planned or flown against.
    pub wind: Vec<Vec2>,
    /// `(v_air[n+1] - v_air[n]) / slot_s` for `n in 0..=N`.
    pub accel: Vec<Vec2>,
    pub slot_s: f64,
    pub closed: bool,
}

impl Trajectory {
    pub fn from_airspeeds(q: Vec<Vec2>, v_air: Vec<Vec2>, wind: Vec<Vec2>, slot_s: f64, closed: bool) -> Self {
        assert_eq!(q.len(), v_air.len());
        assert_eq!(q.len(), wind.len());
        let v_e = v_air.iter().zip(&wind).map(|(v, w)| *v + *w).collect();
        let accel = v_air.windows(2).map(|p| (p[1] - p[0]) / slot_s).collect();
        Self {
            q,
            v_e,
            v_air,
            wind,
            accel,
            slot_s,
            closed,
        }
    }

    pub fn from_ground(q: Vec<Vec2>, v_e: Vec<Vec2>, wind: Vec<Vec2>, slot_s: f64, closed: bool) -> Self {
        let v_air = v_e.iter().zip(&wind).map(|(v, w)| *v - *w).collect();
        Self::from_airspeeds(q, v_air, wind, slot_s, closed)
    }

    /// Number of communication slots minus one (`N`).
    pub fn n_slots(&self) -> usize {
        self.q.len() - 2
    }

    pub fn waypoints(&self) -> usize {
        self.q.len()
    }

    pub fn duration(&self) -> f64 {
        (self.q.len() - 1) as f64 * self.slot_s
    }

    /// Waypoints whose power enters the energy sum.
    pub fn counted(&self) -> std::ops::RangeInclusive<usize> {
        counted_waypoints(self.n_slots(), self.closed)
    }

    /// Largest violation of the trapezoidal kinematics
    /// `q[n+1] = q[n] + (v_e[n] + v_e[n+1]) T_s / 2`, in metres.
    pub fn kinematic_residual(&self) -> f64 {
        (0..self.q.len() - 1)
            .map(|n| {
                let pred = self.q[n] + (self.v_e[n] + self.v_e[n + 1]) * (0.5 * self.slot_s);
                (pred - self.q[n + 1]).norm()
            })
            .fold(0.0, f64::max)
    }
}

pub fn counted_waypoints(n_slots: usize, closed: bool) -> std::ops::RangeInclusive<usize> {
    if closed {
        0..=n_slots
    } else {
        1..=n_slots
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Joules attributed to each waypoint (zero where not counted).
    pub per_slot: Vec<f64>,
    /// Kinetic term.
    pub delta: f64,
    pub total: f64,
}

/// Instantaneous propulsion power in watts.
pub fn propulsion_power(v_air: Vec2, a: Vec2, p: &EnergyParams) -> Result<f64> {
    let speed = v_air.norm();
    if !(speed >= MIN_AIRSPEED) {
        return Err(Error::ZeroAirspeed { waypoint: 0, speed });
    }
    Ok(power_at(speed, a.norm_sq(), p))
}

/// Power from scalar airspeed and squared acceleration norm.
pub fn power_at(speed: f64, accel_sq: f64, p: &EnergyParams) -> f64 {
    p.w1 * speed.powi(3) + p.w2 / speed * (1.0 + accel_sq / (p.gravity * p.gravity))
}

/// Gradient of [`propulsion_power`] with respect to airspeed and acceleration.
pub fn power_gradient(v_air: Vec2, a: Vec2, p: &EnergyParams) -> (Vec2, Vec2) {
    let s = v_air.norm();
    let g2 = p.gravity * p.gravity;
    let ds = 3.0 * p.w1 * s * s - p.w2 / (s * s) * (1.0 + a.norm_sq() / g2);
    (v_air * (ds / s), a * (2.0 * p.w2 / (s * g2)))
}

/// Airspeed minimising steady level-flight power.
pub fn optimal_loiter_speed(p: &EnergyParams) -> f64 {
    (p.w2 / (3.0 * p.w1)).powf(0.25)
}

pub fn trajectory_energy(traj: &Trajectory, p: &EnergyParams) -> Result<EnergyBreakdown> {
    let mut per_slot = vec![0.0; traj.waypoints()];
    for n in traj.counted() {
        let power = propulsion_power(traj.v_air[n], traj.accel[n], p).map_err(|e| match e {
            Error::ZeroAirspeed { speed, .. } => Error::ZeroAirspeed { waypoint: n, speed },
            other => other,
        })?;
        per_slot[n] = power * traj.slot_s;
    }
    let last = traj.waypoints() - 1;
    let delta = 0.5 * p.mass_kg * (traj.v_air[last].norm_sq() - traj.v_air[0].norm_sq());
    let total = per_slot.iter().sum::<f64>() + delta;
    Ok(EnergyBreakdown {
        per_slot,
        delta,
        total,
    })
}
