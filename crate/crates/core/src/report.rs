//! Solved plans as files: a trajectory CSV, a schedule CSV and a JSON
//! summary, all reloadable.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comms::CommSchedule;
use crate::energy::{trajectory_energy, Trajectory};
use crate::error::{Error, Result};
use crate::offline::OfflinePlan;
use crate::sca::{FixedWindPlan, PlanCheck};
use crate::scenario::EnergyParams;
use crate::vector::Vec2;

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub energy_j: f64,
    /// Kinetic term included in `energy_j`.
    pub kinetic_j: f64,
    pub collected_bits: Vec<f64>,
    pub target_bits: Vec<f64>,
    pub iterations: usize,
    pub termination: String,
    /// Largest constraint violation reported by the last accepted subproblem.
    pub max_violation: f64,
    pub check: Option<PlanCheck>,
    /// Relaxation allowed on the targets, bits per buoy.
    pub declared_relaxation_bits: Vec<f64>,
    pub slot_s: f64,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub trajectory: Trajectory,
    pub schedule: CommSchedule,
    pub summary: Summary,
}

impl SolveReport {
    pub fn from_fixed(plan: &FixedWindPlan, targets: &[f64]) -> Self {
        Self {
            trajectory: plan.trajectory.clone(),
            schedule: plan.schedule.clone(),
            summary: Summary {
                energy_j: plan.energy.total,
                kinetic_j: plan.energy.delta,
                collected_bits: plan.collected.clone(),
                target_bits: targets.to_vec(),
                iterations: plan.log.len().saturating_sub(1),
                termination: format!("{:?}", plan.termination),
                max_violation: plan.log.last().map_or(0.0, |r| r.max_violation),
                check: Some(plan.check),
                declared_relaxation_bits: vec![0.0; targets.len()],
                slot_s: plan.trajectory.slot_s,
                closed: plan.trajectory.closed,
            },
        }
    }

    /// The plan at its mean wind; energy is the planning objective.
    pub fn from_offline(plan: &OfflinePlan, energy: &EnergyParams) -> Result<Self> {
        let trajectory = plan.trajectory();
        let kinetic = trajectory_energy(&trajectory, energy)?.delta;
        Ok(Self {
            trajectory,
            schedule: plan.schedule(),
            summary: Summary {
                energy_j: plan.objective_j,
                kinetic_j: kinetic,
                collected_bits: plan.remaining[0].clone(),
                target_bits: plan.targets.clone(),
                iterations: plan.log.len().saturating_sub(1),
                termination: format!("{:?}", plan.termination),
                max_violation: plan.log.last().map_or(0.0, |r| r.max_violation),
                check: None,
                declared_relaxation_bits: vec![0.0; plan.buoys()],
                slot_s: plan.slot_s,
                closed: plan.closed,
            },
        })
    }

    /// Every target met up to the declared relaxation (relative `tol`).
    pub fn targets_met(&self, tol: f64) -> bool {
        let s = &self.summary;
        s.collected_bits
            .iter()
            .zip(&s.target_bits)
            .zip(&s.declared_relaxation_bits)
            .all(|((c, t), r)| *c >= t - r - tol * t.max(1.0))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let t = &self.trajectory;
        let mut body = String::from("slot,x,y,vex,vey,vax,vay,ax,ay,windx,windy\n");
        for n in 0..t.waypoints() {
            let a = t.accel.get(n).copied().unwrap_or(Vec2::ZERO);
            body.push_str(&format!(
                "{n},{},{},{},{},{},{},{},{},{},{}\n",
                t.q[n].x, t.q[n].y, t.v_e[n].x, t.v_e[n].y, t.v_air[n].x, t.v_air[n].y, a.x, a.y, t.wind[n].x, t.wind[n].y
            ));
        }
        write_file(&dir.join(TRAJECTORY_FILE), &body)?;

        let k = self.schedule.buoys();
        let mut body = String::from("slot");
        for j in 1..=k {
            body.push_str(&format!(",tau_{j}"));
        }
        body.push('\n');
        for (s, row) in self.schedule.tau.iter().enumerate() {
            body.push_str(&s.to_string());
            for v in row {
                body.push_str(&format!(",{v}"));
            }
            body.push('\n');
        }
        write_file(&dir.join(SCHEDULE_FILE), &body)?;

        let json = serde_json::to_string_pretty(&self.summary).expect("summary serialises");
        write_file(&dir.join(SUMMARY_FILE), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let summary: Summary = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;

        let rows = read_rows(&dir.join(TRAJECTORY_FILE), 11)?;
        let (mut q, mut ve, mut wind) = (vec![], vec![], vec![]);
        for r in &rows {
            q.push(Vec2::new(r[1], r[2]));
            ve.push(Vec2::new(r[3], r[4]));
            wind.push(Vec2::new(r[9], r[10]));
        }
        let trajectory = Trajectory::from_ground(q, ve, wind, summary.slot_s, summary.closed);

        let k = summary.target_bits.len();
        let tau = read_rows(&dir.join(SCHEDULE_FILE), k + 1)?
            .into_iter()
            .map(|r| r[1..].to_vec())
            .collect();
        let schedule = CommSchedule { tau };
        if schedule.slots() + 1 != trajectory.waypoints() {
            return Err(Error::Parse {
                path: dir.to_path_buf(),
                message: format!("{} schedule rows for {} waypoints", schedule.slots(), trajectory.waypoints()),
            });
        }
        Ok(Self {
            trajectory,
            schedule,
            summary,
        })
    }
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: Option<Vec<f64>> = rec.iter().map(|s| s.trim().parse().ok()).collect();
        match row {
            Some(r) if r.len() == width => out.push(r),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("expected {width} numeric columns, got {rec:?}"),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
