//! Pre-flight strategic planning.
//!
//! SINR-feasible free space is tiled with axis-aligned boxes, the boxes are
//! linked through their shared faces, and a Dijkstra search over the box
//! graph picks a corridor that trades distance against handovers and weak
//! coverage. The corridor is then pulled taut and time-parameterized.
//!
//! Paths are kept inside the hull of each region's cell centers and cross
//! between regions through the slab joining the two facing center layers.
//! Every point of such a path interpolates only from feasible cells, so
//! `RadioMap::sinr_at` stays at or above the threshold along it.

mod regions;
mod search;
mod trajectory;

pub use regions::{decompose_regions, Portal, Region, RegionGraph};
pub use search::{plan_path, Plan, PlanWeights};
pub use trajectory::{refine_trajectory, RefSample, ReferenceTrajectory};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("{0} is not inside any SINR-feasible region")]
    Infeasible(String),
    #[error("no route between start and goal regions")]
    NoRoute,
    #[error("trajectory error: {0}")]
    Trajectory(String),
}
