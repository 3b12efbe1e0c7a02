//! In-flight control: predictive packets, trigger policies and the onboard
//! buffer that keeps executing them through link losses.

mod buffer;
mod mpc;
mod trigger;

pub use buffer::{buffer_execute, BufferOutput, PpcBuffer};
pub use mpc::{mpc_cost, solve_mpc, ControlPacket, MpcSolver, MpcWeights};
pub use trigger::{etc_should_trigger, stmpc_length, NisScale, TriggerPolicy};
