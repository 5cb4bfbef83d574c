//! Energy-minimal fixed-wing UAV trajectories for maritime buoy data
//! collection under fixed or stochastic wind, with a hybrid offline-online
//! execution policy.
//!
//! * [`scenario`], [`wind`], [`comms`], [`energy`]: problem data and models,
//! * [`conic`]: tagged second-order cone programs and their solver,
//! * [`sca`]: fixed-wind successive convex approximation,
//! * [`cyclical`]: lap partitioning and pattern-initialised lap planning,
//! * [`offline`]: sample-average stochastic reference plans,
//! * [`online`]: per-slot adaptation and closed-loop replay,
//! * [`report`]: solved plans as CSV and JSON files.

pub mod comms;
pub mod cyclical;
pub mod conic;
pub mod energy;
pub mod error;
pub mod lp;
pub mod offline;
pub mod online;
pub mod par;
pub mod report;
pub mod sca;
pub mod scenario;
pub mod vector;
pub mod wind;

pub use error::{Error, Result};
pub use vector::Vec2;
