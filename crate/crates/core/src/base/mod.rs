//! Shared geometric and linear-algebra domain types.
//!
//! Everything here is a plain value type. Simulation logic lives in the
//! modules built on top of these.

mod cov;
mod geom;
mod rng;

pub use cov::{confidence_radius, mat_psd_project, CovMatrix, Mat6};
pub use geom::{Aabb, UavState, Vec3, Vec6};
pub use rng::{mix64, SimRng};
