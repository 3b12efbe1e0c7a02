//! Scenario loading, the closed-loop slot simulation, the two case studies
//! and their file outputs.

pub mod case1;
pub mod case2;
pub mod config;
pub mod report;
pub mod sim;

pub use case1::{run_case1, Case1Report, Case1Seed};
pub use case2::{run_case2, sweep_seed, SweepReport, SweepRow};
pub use config::{ConfigError, Scenario, ScenarioConfig, UavSpec};
pub use sim::{run_closed_loop, run_swarm, Prepared, RunOutput, RunSpec, SwarmMetrics, UavRun};
