use std::path::PathBuf;

use thiserror::Error;

use crate::conic::SolveStatus;
use crate::scenario::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid scenario: {}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("airspeed {speed:.3e} m/s at waypoint {waypoint} is below the fixed-wing model floor")]
    ZeroAirspeed { waypoint: usize, speed: f64 },

    #[error("initial point infeasible: {constraint} ({detail})")]
    InitInfeasible { constraint: String, detail: String },

    #[error("convex subproblem failed at iteration {iteration}: {status:?}")]
    Solver { iteration: usize, status: SolveStatus },

    #[error("{stage} program infeasible; certificate tags: {}", .tags.join(", "))]
    Infeasible { stage: String, tags: Vec<String> },

    #[error("no feasible initial pattern: {0}")]
    NoFeasibleInit(String),

    #[error("plan does not match scenario: {0}")]
    PlanMismatch(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("{}: {}", v.field, v.message))
        .collect::<Vec<_>>()
        .join("; ")
}
