//! Closed-loop communication and control co-design for cellular-connected UAVs.
//!
//! The crate is organized around the three stages of a mission:
//!
//! - [`radio`] and [`planner`]: build a 3D SINR radio map, decompose the
//!   SINR-feasible free space into convex boxes and plan a
//!   connectivity-aware reference trajectory before take-off.
//! - [`dynamics`] and [`controller`]: fly the reference with packetized
//!   predictive control, choosing when to communicate with periodic,
//!   event-triggered or self-triggered policies over a lossy link.
//! - [`scheduler`]: share a limited number of channel slots across a swarm
//!   using covariance, age of information and context risk.
//!
//! [`harness`] binds the stages into a single slot loop driven by a
//! scenario file, and [`requirements`] checks runs against service profiles.

pub mod base;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod planner;
pub mod radio;
pub mod requirements;
pub mod scheduler;

pub use error::{Error, Result};
