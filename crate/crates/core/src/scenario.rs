//! Problem data: buoys, radio channel, airframe, slotting, wind statistics.
//!
//! Scenarios are read from a JSON document. Every field except `buoys` is
//! optional; absent fields take the reference parameter set and are listed in
//! [`ValidationReport::defaults_applied`].
//!
//! ```json
//! {
//!   "buoys": [{ "id": 1, "position": [0, 0], "target_bits": 2e8 }],
//!   "channel": { "bandwidth_hz": 1e6, "ref_snr_db": 70, "altitude_m": 100 },
//!   "energy": { "w1": 9.26e-4, "w2": 2250, "gravity": 9.8, "mass_kg": 10 },
//!   "limits": { "v_max": 50, "stall_speed": 3, "a_max": 5, "v_min_policy": "max_wind_stall" },
//!   "slotting": { "slot_s": 1.0, "n_slots": 60 },
//!   "endpoints": { "q0": [-600, 0], "qF": [600, 0], "v0": [30, 0], "vF": [30, 0] },
//!   "wind": { "mean": [0, 0], "sigma_f": 0, "rho_c": 0.5 },
//!   "tolerances": { "eps1": 1, "eps2": 1, "xi_q": 3, "xi_v": 0.2, "w3": 100 },
//!   "saa_samples": 100
//! }
//! ```
//!
//! `ref_snr` (linear) may be given instead of `ref_snr_db`. `endpoints` may be
//! omitted for closed-lap planning.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Vec2;
use crate::wind::WindModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Buoy {
    pub id: u32,
    pub position: Vec2,
    /// Bits that must be collected from this buoy.
    #[serde(rename = "target_bits")]
    pub target_volume: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    /// Received SNR at 1 m reference distance, linear.
    pub ref_snr: f64,
    pub altitude_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub w1: f64,
    pub w2: f64,
    pub gravity: f64,
    pub mass_kg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VMinPolicy {
    /// `max(|wind|, stall_speed)`.
    #[default]
    MaxWindStall,
    /// Stall speed regardless of wind.
    Stall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightLimits {
    pub v_max: f64,
    pub stall_speed: f64,
    pub a_max: f64,
    #[serde(default)]
    pub v_min_policy: VMinPolicy,
}

impl FlightLimits {
    /// Minimum admissible airspeed under the given wind.
    pub fn v_min(&self, wind: Vec2) -> f64 {
        match self.v_min_policy {
            VMinPolicy::MaxWindStall => wind.norm().max(self.stall_speed),
            VMinPolicy::Stall => self.stall_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slotting {
    pub slot_s: f64,
    pub n_slots: usize,
}

impl Slotting {
    /// Mission duration, `(N + 1) * T_s`.
    pub fn horizon(&self) -> f64 {
        (self.n_slots + 1) as f64 * self.slot_s
    }

    /// Number of waypoints, `N + 2`.
    pub fn waypoints(&self) -> usize {
        self.n_slots + 2
    }

    /// Slotting covering `horizon` seconds with slots no longer than
    /// `nominal_slot`, capped at `max_slots` communication slots.
    pub fn for_horizon(horizon: f64, nominal_slot: f64, max_slots: usize) -> Self {
        let slots = ((horizon / nominal_slot) - 1e-9).ceil().max(2.0) as usize;
        let slots = slots.min(max_slots.max(2));
        Slotting {
            slot_s: horizon / slots as f64,
            n_slots: slots - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub q0: Vec2,
    #[serde(rename = "qF")]
    pub qf: Vec2,
    pub v0: Vec2,
    #[serde(rename = "vF")]
    pub vf: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub eps1: f64,
    pub eps2: f64,
    pub xi_q: f64,
    pub xi_v: f64,
    /// Penalty in joules per megabit of relaxed throughput.
    pub w3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub buoys: Vec<Buoy>,
    pub channel: ChannelParams,
    pub energy: EnergyParams,
    pub limits: FlightLimits,
    pub slotting: Slotting,
    pub endpoints: Option<Endpoints>,
    pub wind: WindModel,
    pub tolerances: Tolerances,
    pub saa_samples: usize,
    #[serde(skip)]
    defaults_applied: Vec<String>,
}

pub mod defaults {
    pub const ALTITUDE_M: f64 = 100.0;
    pub const BANDWIDTH_HZ: f64 = 1e6;
    pub const REF_SNR_DB: f64 = 70.0;
    pub const V_MAX: f64 = 50.0;
    pub const STALL_SPEED: f64 = 3.0;
    pub const A_MAX: f64 = 5.0;
    pub const W1: f64 = 9.26e-4;
    pub const W2: f64 = 2250.0;
    pub const W3: f64 = 100.0;
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_KG: f64 = 10.0;
    pub const RHO_C: f64 = 0.5;
    pub const SAA_SAMPLES: usize = 100;
    pub const EPS: f64 = 1.0;
    pub const XI_Q: f64 = 3.0;
    pub const XI_V: f64 = 0.2;
    pub const SLOT_S: f64 = 1.0;
    pub const N_SLOTS: usize = 60;
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Scenario {
    /// Scenario with the reference parameter set around the given buoys.
    pub fn with_defaults(buoys: Vec<Buoy>) -> Self {
        use defaults::*;
        Scenario {
            buoys,
            channel: ChannelParams {
                bandwidth_hz: BANDWIDTH_HZ,
                ref_snr: db_to_linear(REF_SNR_DB),
                altitude_m: ALTITUDE_M,
            },
            energy: EnergyParams {
                w1: W1,
                w2: W2,
                gravity: GRAVITY,
                mass_kg: MASS_KG,
            },
            limits: FlightLimits {
                v_max: V_MAX,
                stall_speed: STALL_SPEED,
                a_max: A_MAX,
                v_min_policy: VMinPolicy::MaxWindStall,
            },
            slotting: Slotting {
                slot_s: SLOT_S,
                n_slots: N_SLOTS,
            },
            endpoints: None,
            wind: WindModel {
                mean: Vec2::ZERO,
                sigma_f: 0.0,
                rho_c: RHO_C,
            },
            tolerances: Tolerances {
                eps1: EPS,
                eps2: EPS,
                xi_q: XI_Q,
                xi_v: XI_V,
                w3: W3,
            },
            saa_samples: SAA_SAMPLES,
            defaults_applied: Vec::new(),
        }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.buoys.iter().map(|b| b.target_volume).collect()
    }

    /// Geometric centre of the buoys.
    pub fn buoy_center(&self) -> Vec2 {
        let n = self.buoys.len().max(1) as f64;
        self.buoys
            .iter()
            .fold(Vec2::ZERO, |acc, b| acc + b.position)
            / n
    }

    pub fn defaults_applied(&self) -> &[String] {
        &self.defaults_applied
    }

    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let scenario = raw.resolve();
        let report = validate_scenario(&scenario);
        if report.is_usable() {
            Ok(scenario)
        } else {
            Err(Error::Validation(report.violations))
        }
    }
}

/// Read, default-fill and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json_str(&text, path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub defaults_applied: Vec<String>,
}

impl ValidationReport {
    pub fn is_usable(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Every violated invariant of `s`. Never fails.
pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut out = Vec::new();
    let mut bad = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };

    if s.buoys.is_empty() {
        bad("buoys", "buoys empty".into());
    }
    let mut ids = BTreeSet::new();
    for (i, b) in s.buoys.iter().enumerate() {
        if !ids.insert(b.id) {
            bad(&format!("buoys[{i}].id"), format!("duplicate id {}", b.id));
        }
        if !b.position.is_finite() {
            bad(&format!("buoys[{i}].position"), "not finite".into());
        }
        if !(b.target_volume.is_finite() && b.target_volume >= 0.0) {
            bad(
                &format!("buoys[{i}].target_volume"),
                format!("must be finite and >= 0, got {}", b.target_volume),
            );
        }
    }

    let ch = &s.channel;
    for (name, v) in [
        ("channel.bandwidth_hz", ch.bandwidth_hz),
        ("channel.ref_snr", ch.ref_snr),
        ("channel.altitude_m", ch.altitude_m),
    ] {
        if !(v.is_finite() && v > 0.0) {
            bad(name, format!("must be finite and > 0, got {v}"));
        }
    }

    let e = &s.energy;
    for (name, v) in [
        ("energy.w1", e.w1),
        ("energy.w2", e.w2),
        ("energy.gravity", e.gravity),
        ("energy.mass_kg", e.mass_kg),
    ] {
        if !(v.is_finite() && v > 0.0) {
            bad(name, format!("must be finite and > 0, got {v}"));
        }
    }

    let l = &s.limits;
    if !(l.stall_speed.is_finite() && l.v_max.is_finite() && 0.0 < l.stall_speed && l.stall_speed < l.v_max)
    {
        bad(
            "FlightLimits",
            format!(
                "need 0 < stall_speed < v_max, got stall_speed={} v_max={}",
                l.stall_speed, l.v_max
            ),
        );
    }
    if !(l.a_max.is_finite() && l.a_max > 0.0) {
        bad("FlightLimits.a_max", format!("must be > 0, got {}", l.a_max));
    }

    if !(s.slotting.slot_s.is_finite() && s.slotting.slot_s > 0.0) {
        bad(
            "Slotting.slot_s",
            format!("must be > 0, got {}", s.slotting.slot_s),
        );
    }
    if s.slotting.n_slots < 1 {
        bad("Slotting.n_slots", "must be >= 1".into());
    }

    if let Some(ep) = &s.endpoints {
        for (name, p) in [("endpoints.q0", ep.q0), ("endpoints.qF", ep.qf)] {
            if !p.is_finite() {
                bad(name, "not finite".into());
            }
        }
        for (name, v) in [("endpoints.v0", ep.v0), ("endpoints.vF", ep.vf)] {
            let n = v.norm();
            if !(n.is_finite() && n >= l.stall_speed && n <= l.v_max) {
                bad(
                    name,
                    format!(
                        "speed {n} outside [{}, {}]",
                        l.stall_speed, l.v_max
                    ),
                );
            }
        }
    }

    let w = &s.wind;
    if !w.mean.is_finite() {
        bad("WindModel.mean", "not finite".into());
    }
    if !(w.sigma_f.is_finite() && w.sigma_f >= 0.0) {
        bad("WindModel.sigma_f", format!("must be >= 0, got {}", w.sigma_f));
    }
    if !(w.rho_c.is_finite() && (0.0..1.0).contains(&w.rho_c)) {
        bad("WindModel.rho_c", format!("must lie in [0, 1), got {}", w.rho_c));
    }

    let t = &s.tolerances;
    for (name, v) in [
        ("tolerances.eps1", t.eps1),
        ("tolerances.eps2", t.eps2),
        ("tolerances.xi_q", t.xi_q),
        ("tolerances.xi_v", t.xi_v),
        ("tolerances.w3", t.w3),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            bad(name, format!("must be finite and >= 0, got {v}"));
        }
    }
    if s.saa_samples < 1 {
        bad("saa_samples", "must be >= 1".into());
    }

    ValidationReport {
        violations: out,
        defaults_applied: s.defaults_applied.clone(),
    }
}

// Serialized form with every field optional.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    buoys: Vec<Buoy>,
    channel: Option<RawChannel>,
    energy: Option<RawEnergy>,
    limits: Option<RawLimits>,
    slotting: Option<RawSlotting>,
    endpoints: Option<Endpoints>,
    wind: Option<RawWind>,
    tolerances: Option<RawTolerances>,
    saa_samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    bandwidth_hz: Option<f64>,
    ref_snr: Option<f64>,
    ref_snr_db: Option<f64>,
    altitude_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnergy {
    w1: Option<f64>,
    w2: Option<f64>,
    gravity: Option<f64>,
    mass_kg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    v_max: Option<f64>,
    stall_speed: Option<f64>,
    a_max: Option<f64>,
    v_min_policy: Option<VMinPolicy>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlotting {
    slot_s: Option<f64>,
    n_slots: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWind {
    mean: Option<Vec2>,
    sigma_f: Option<f64>,
    rho_c: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    eps1: Option<f64>,
    eps2: Option<f64>,
    xi_q: Option<f64>,
    xi_v: Option<f64>,
    w3: Option<f64>,
}

struct Filler(Vec<String>);

impl Filler {
    fn take<T>(&mut self, name: &str, v: Option<T>, default: T) -> T {
        v.unwrap_or_else(|| {
            self.0.push(name.to_string());
            default
        })
    }
}

impl RawScenario {
    fn resolve(self) -> Scenario {
        let base = Scenario::with_defaults(Vec::new());
        let mut f = Filler(Vec::new());

        let ch = self.channel.unwrap_or_default();
        let ref_snr = match (ch.ref_snr, ch.ref_snr_db) {
            (Some(lin), _) => lin,
            (None, Some(db)) => db_to_linear(db),
            (None, None) => {
                f.0.push("channel.ref_snr".into());
                base.channel.ref_snr
            }
        };
        let channel = ChannelParams {
            bandwidth_hz: f.take("channel.bandwidth_hz", ch.bandwidth_hz, base.channel.bandwidth_hz),
            ref_snr,
            altitude_m: f.take("channel.altitude_m", ch.altitude_m, base.channel.altitude_m),
        };

        let e = self.energy.unwrap_or_default();
        let energy = EnergyParams {
            w1: f.take("energy.w1", e.w1, base.energy.w1),
            w2: f.take("energy.w2", e.w2, base.energy.w2),
            gravity: f.take("energy.gravity", e.gravity, base.energy.gravity),
            mass_kg: f.take("energy.mass_kg", e.mass_kg, base.energy.mass_kg),
        };

        let l = self.limits.unwrap_or_default();
        let limits = FlightLimits {
            v_max: f.take("limits.v_max", l.v_max, base.limits.v_max),
            stall_speed: f.take("limits.stall_speed", l.stall_speed, base.limits.stall_speed),
            a_max: f.take("limits.a_max", l.a_max, base.limits.a_max),
            v_min_policy: f.take("limits.v_min_policy", l.v_min_policy, base.limits.v_min_policy),
        };

        let sl = self.slotting.unwrap_or_default();
        let slotting = Slotting {
            slot_s: f.take("slotting.slot_s", sl.slot_s, base.slotting.slot_s),
            n_slots: f.take("slotting.n_slots", sl.n_slots, base.slotting.n_slots),
        };

        let w = self.wind.unwrap_or_default();
        let wind = WindModel {
            mean: f.take("wind.mean", w.mean, base.wind.mean),
            sigma_f: f.take("wind.sigma_f", w.sigma_f, base.wind.sigma_f),
            rho_c: f.take("wind.rho_c", w.rho_c, base.wind.rho_c),
        };

        let t = self.tolerances.unwrap_or_default();
        let tolerances = Tolerances {
            eps1: f.take("tolerances.eps1", t.eps1, base.tolerances.eps1),
            eps2: f.take("tolerances.eps2", t.eps2, base.tolerances.eps2),
            xi_q: f.take("tolerances.xi_q", t.xi_q, base.tolerances.xi_q),
            xi_v: f.take("tolerances.xi_v", t.xi_v, base.tolerances.xi_v),
            w3: f.take("tolerances.w3", t.w3, base.tolerances.w3),
        };
        let saa_samples = f.take("saa_samples", self.saa_samples, base.saa_samples);

        Scenario {
            buoys: self.buoys,
            channel,
            energy,
            limits,
            slotting,
            endpoints: self.endpoints,
            wind,
            tolerances,
            saa_samples,
            defaults_applied: f.0,
        }
    }
}
