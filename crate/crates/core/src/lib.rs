//! Online k-means clustering in the no-substitution model, with a count
//! augmented k-center sketch, exact oracles and an experiment harness.

mod error;

pub mod cluster;
pub mod geometry;
pub mod harness;
pub mod kcenter;
pub mod lower;
pub mod oracle;

pub use cluster::{run_stream, ClusterConfig, ClusterState, Decision, Mode, Processing};
pub use error::{Error, Result};
pub use geometry::{Point, PointSet};
pub use kcenter::{KCenterState, RadiusSchedule};
