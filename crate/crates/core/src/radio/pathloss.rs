use serde::{Deserialize, Serialize};

use crate::base::{Aabb, Vec3};
use crate::error::{invalid, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Log-distance path loss with separate LoS and NLoS exponents, referenced
/// to free space at `d0 = 1 m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossModel {
    pub n_los: f64,
    pub n_nlos: f64,
    pub f_ref_hz: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            n_los: 2.2,
            n_nlos: 3.5,
            f_ref_hz: 2.0e9,
        }
    }
}

impl PathLossModel {
    /// Free-space loss at the 1 m reference distance.
    pub fn reference_loss_db(&self) -> f64 {
        20.0 * (4.0 * std::f64::consts::PI * self.f_ref_hz / SPEED_OF_LIGHT).log10()
    }

    pub fn loss_db(&self, distance: f64, los: bool) -> f64 {
        let d = distance.max(1.0);
        let n = if los { self.n_los } else { self.n_nlos };
        self.reference_loss_db() + 10.0 * n * d.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub id: u32,
    /// Antenna position; `z` is the antenna height.
    pub position: Vec3,
    pub tx_power_dbm: f64,
    /// Electrical down-tilt below the horizon.
    pub tilt_deg: f64,
    pub beamwidth_3db_deg: f64,
    pub max_attenuation_db: f64,
}

impl BaseStation {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=60.0).contains(&self.tx_power_dbm) {
            return Err(invalid(format!("bs {}: tx_power_dbm must be in [0, 60]", self.id)));
        }
        if !(0.0..=90.0).contains(&self.tilt_deg) {
            return Err(invalid(format!("bs {}: tilt_deg must be in [0, 90]", self.id)));
        }
        if !(self.beamwidth_3db_deg > 0.0) || !(self.max_attenuation_db > 0.0) {
            return Err(invalid(format!(
                "bs {}: beamwidth and max attenuation must be > 0",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub bounds: Aabb,
    pub buildings: Vec<Aabb>,
    pub base_stations: Vec<BaseStation>,
    pub noise_power_dbm: f64,
    pub grid_resolution: f64,
    pub path_loss: PathLossModel,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if !(self.grid_resolution > 0.0) {
            return Err(invalid("grid_resolution must be > 0"));
        }
        if self.base_stations.is_empty() {
            return Err(invalid("at least one base station is required"));
        }
        for (i, b) in self.buildings.iter().enumerate() {
            b.validate()?;
            if !self.bounds.contains_box(b) {
                return Err(invalid(format!("building {i} is not inside the bounds")));
            }
        }
        let mut ids: Vec<u32> = self.base_stations.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("base station ids must be unique"));
        }
        for bs in &self.base_stations {
            bs.validate()?;
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(invalid("noise_power_dbm must be finite"));
        }
        Ok(())
    }

    pub fn in_building(&self, p: &Vec3) -> bool {
        self.buildings.iter().any(|b| b.contains(p))
    }

    pub fn line_of_sight(&self, a: &Vec3, b: &Vec3) -> bool {
        !self.buildings.iter().any(|bld| bld.segment_hits_interior(a, b))
    }
}

/// Vertical antenna pattern in dB (`<= 0`), quadratic in the offset between
/// the depression angle and the tilt, floored at `-max_attenuation_db`.
pub fn antenna_gain_db(bs: &BaseStation, depression_deg: f64) -> f64 {
    let x = (depression_deg - bs.tilt_deg) / bs.beamwidth_3db_deg;
    -(12.0 * x * x).min(bs.max_attenuation_db)
}

fn depression_deg(bs: &BaseStation, p: &Vec3) -> f64 {
    let d = bs.position - p;
    let horizontal = (d.x * d.x + d.y * d.y).sqrt();
    d.z.atan2(horizontal).to_degrees()
}

pub(crate) fn received_power_unchecked(bs: &BaseStation, p: &Vec3, env: &Environment) -> f64 {
    let distance = (bs.position - p).norm();
    let los = env.line_of_sight(&bs.position, p);
    bs.tx_power_dbm + antenna_gain_db(bs, depression_deg(bs, p)) - env.path_loss.loss_db(distance, los)
}

/// Received power at `p` from `bs`, in dBm. Distances below 1 m are clamped.
pub fn received_power_dbm(bs: &BaseStation, p: &Vec3, env: &Environment) -> Result<f64> {
    if !env.bounds.contains(p) {
        return Err(invalid(format!("point {:?} outside the environment", p.as_slice())));
    }
    if env.in_building(p) {
        return Err(invalid(format!("point {:?} is inside a building", p.as_slice())));
    }
    Ok(received_power_unchecked(bs, p, env))
}
