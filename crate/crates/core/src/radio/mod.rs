//! 3D SINR radio map and the per-slot packet-erasure link model.

mod link;
mod map;
mod pathloss;

pub use link::{packet_outcome, LinkModel};
pub use map::{build_radio_map, handover_count, CellIndex, Grid, RadioMap};
pub use pathloss::{
    antenna_gain_db, received_power_dbm, BaseStation, Environment, PathLossModel,
    SPEED_OF_LIGHT,
};
