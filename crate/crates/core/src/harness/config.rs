//! Scenario files: defaults merging with provenance, strict deserialization,
//! and validation with field paths.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::base::{Aabb, CovMatrix, Vec3};
use crate::controller::{MpcWeights, TriggerPolicy};
use crate::dynamics::{Disturbance, Gust, MovingObstacle, PlantModel};
use crate::planner::PlanWeights;
use crate::radio::{Environment, LinkModel};
use crate::scheduler::PriorityWeights;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Values applied where a scenario leaves a key out.
pub const DEFAULTS: &str = r#"
seed = 1
tail_slots = 50

[environment]
buildings = []
noise_power_dbm = -95.0
grid_resolution = 5.0

[environment.path_loss]
n_los = 2.2
n_nlos = 3.5
f_ref_hz = 2.0e9

[radio]
gamma_th_db = -2.0
steepness_per_db = 0.5
energy_per_packet_j = 0.001

[plant]
dt = 0.1
u_max = 3.0
v_max = 15.0
q_pos = 1.0e-6
q_vel = 1.0e-4

[planner]
cruise_speed = 5.0
merge_distance = 1.0e-3

[planner.weights]
w_dist = 1.0
w_handover = 5.0
w_risk = 0.5
gamma_margin_offset_db = 3.0

[controller]
damping = 0.5
nis_alpha = 0.5
nis_cap = 100.0

[controller.mpc]
q_pos = 1.0
q_vel = 0.5
r_u = 0.05
n_max = 20

[controller.policy]
kind = "periodic"
period = 1

[scheduler]
m = 1
r_risk_m = 10.0
r_meas_pos = 0.01
r_meas_vel = 0.04
high_risk = []

[scheduler.weights]
w_cov = 1.0
w_aoi = 0.5
w_risk = 2.0

[case1]
seeds = 10

[case1.periodic]
kind = "periodic"
period = 1

[case1.stmpc]
kind = "stmpc"
kappa = 2.0
m_safe = 1.0
n_max = 20

[case2]
n = [4, 8, 16, 32]
m = [1, 2, 4]
seeds = 10
"#;

/// Per-element defaults for arrays of tables, keyed by dotted array path.
pub const ELEMENT_DEFAULTS: &str = r#"
["environment.base_stations"]
tx_power_dbm = 40.0
tilt_deg = 10.0
beamwidth_3db_deg = 30.0
max_attenuation_db = 25.0

["movers"]
inflation = 0.0
"#;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub gamma_th_db: f64,
    pub steepness_per_db: f64,
    pub energy_per_packet_j: f64,
    /// Fixed delivery probability replacing the SINR curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_override: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub dt: f64,
    pub u_max: f64,
    pub v_max: f64,
    /// Per-slot process noise variances.
    pub q_pos: f64,
    pub q_vel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub cruise_speed: f64,
    pub merge_distance: f64,
    pub weights: PlanWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub damping: f64,
    pub nis_alpha: f64,
    pub nis_cap: f64,
    pub mpc: MpcWeights,
    pub policy: TriggerPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    pub m: usize,
    pub r_risk_m: f64,
    pub r_meas_pos: f64,
    pub r_meas_vel: f64,
    pub high_risk: Vec<Aabb>,
    pub weights: PriorityWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub start: Vec3,
    pub goal: Vec3,
}

/// Grid-of-lanes fleet: UAV `i` sits at column `i % columns`, row `i / columns`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub count: usize,
    pub columns: usize,
    pub start_origin: Vec3,
    pub goal_origin: Vec3,
    pub column_step: Vec3,
    pub row_step: Vec3,
}

impl FleetSpec {
    pub fn uav(&self, i: usize) -> UavSpec {
        let off = self.column_step * (i % self.columns) as f64 + self.row_step * (i / self.columns) as f64;
        UavSpec {
            start: self.start_origin + off,
            goal: self.goal_origin + off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case1Config {
    pub seeds: u64,
    pub periodic: TriggerPolicy,
    pub stmpc: TriggerPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case2Config {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub seeds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Slots to simulate; defaults to the longest reference plus `tail_slots`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_slots: Option<u64>,
    pub tail_slots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    pub environment: Environment,
    pub radio: RadioConfig,
    pub plant: PlantConfig,
    #[serde(default)]
    pub gusts: Vec<Gust>,
    #[serde(default)]
    pub movers: Vec<MovingObstacle>,
    pub planner: PlannerConfig,
    pub controller: ControllerConfig,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub uav: Vec<UavSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fleet: Option<FleetSpec>,
    pub case1: Case1Config,
    pub case2: Case2Config,
}

/// A loaded scenario with the record of every defaulted key.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// `path = value` for each key filled from defaults.
    pub provenance: Vec<String>,
    effective: Table,
}

fn merge_defaults(user: &mut Table, defaults: &Table, prefix: &str, log: &mut Vec<String>) {
    for (k, dv) in defaults {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match user.get_mut(k) {
            None => {
                log_leaves(&path, dv, log);
                user.insert(k.clone(), dv.clone());
            }
            Some(Value::Table(ut)) => {
                if let Value::Table(dt) = dv {
                    merge_defaults(ut, dt, &path, log);
                }
            }
            Some(_) => {}
        }
    }
}

fn log_leaves(path: &str, v: &Value, log: &mut Vec<String>) {
    match v {
        Value::Table(t) if !t.is_empty() => {
            for (k, sub) in t {
                log_leaves(&format!("{path}.{k}"), sub, log);
            }
        }
        other => log.push(format!("{path} = {other}")),
    }
}

fn apply_element_defaults(doc: &mut Table, elems: &Table, log: &mut Vec<String>) {
    for (dotted, template) in elems {
        let Value::Table(template) = template else { continue };
        let mut node: Option<&mut Value> = None;
        for (i, part) in dotted.split('.').enumerate() {
            node = if i == 0 {
                doc.get_mut(part)
            } else {
                node.and_then(|n| n.as_table_mut()).and_then(|t| t.get_mut(part))
            };
        }
        let Some(Value::Array(items)) = node else { continue };
        for (i, item) in items.iter_mut().enumerate() {
            if let Value::Table(t) = item {
                merge_defaults(t, template, &format!("{dotted}[{i}]"), log);
            }
        }
    }
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| ConfigError::Syntax(e.to_string()))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = parse_table(text)?;
        let defaults = parse_table(DEFAULTS).expect("built-in defaults parse");
        let elems = parse_table(ELEMENT_DEFAULTS).expect("built-in element defaults parse");
        let mut provenance = Vec::new();
        merge_defaults(&mut doc, &defaults, "", &mut provenance);
        apply_element_defaults(&mut doc, &elems, &mut provenance);
        let config: ScenarioConfig = serde_path_to_error::deserialize(doc.clone()).map_err(|e| {
            let path = e.path().to_string();
            schema(path, e.into_inner().message().to_string())
        })?;
        let scenario = Self {
            config,
            provenance,
            effective: doc,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Override the seed in both the typed config and the echoed document.
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
        self.effective.insert("seed".into(), toml::Value::Integer(seed as i64));
    }

    /// Defaulted keys as comments followed by the effective document.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# scenario {}", self.config.name);
        let _ = writeln!(s, "# defaulted keys:");
        for line in &self.provenance {
            let _ = writeln!(s, "#   {line}");
        }
        s.push_str(&toml::to_string(&self.effective).expect("table serializes"));
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let pos = |path: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(schema(path, format!("must be a positive number, got {v}")))
            }
        };
        let nonneg = |path: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(schema(path, format!("must be non-negative, got {v}")))
            }
        };
        pos("plant.dt", c.plant.dt)?;
        if c.plant.dt > 1.0 {
            return Err(schema("plant.dt", "slot duration above 1 s is not supported"));
        }
        pos("plant.u_max", c.plant.u_max)?;
        pos("plant.v_max", c.plant.v_max)?;
        nonneg("plant.q_pos", c.plant.q_pos)?;
        nonneg("plant.q_vel", c.plant.q_vel)?;
        c.environment
            .validate()
            .map_err(|e| schema("environment", e.to_string()))?;
        pos("radio.steepness_per_db", c.radio.steepness_per_db)?;
        pos("radio.energy_per_packet_j", c.radio.energy_per_packet_j)?;
        if !c.radio.gamma_th_db.is_finite() {
            return Err(schema("radio.gamma_th_db", "must be finite"));
        }
        if let Some(p) = c.radio.success_override {
            if !(0.0..=1.0).contains(&p) {
                return Err(schema("radio.success_override", "must lie in [0, 1]"));
            }
        }
        pos("planner.cruise_speed", c.planner.cruise_speed)?;
        if c.planner.cruise_speed > c.plant.v_max {
            return Err(schema("planner.cruise_speed", "must not exceed plant.v_max"));
        }
        nonneg("planner.merge_distance", c.planner.merge_distance)?;
        let w = &c.planner.weights;
        nonneg("planner.weights.w_dist", w.w_dist)?;
        nonneg("planner.weights.w_handover", w.w_handover)?;
        nonneg("planner.weights.w_risk", w.w_risk)?;
        c.controller
            .mpc
            .validate()
            .map_err(|e| schema("controller.mpc", e.to_string()))?;
        nonneg("controller.damping", c.controller.damping)?;
        if !(c.controller.nis_alpha > 0.0 && c.controller.nis_alpha <= 1.0) {
            return Err(schema("controller.nis_alpha", "must lie in (0, 1]"));
        }
        if !(c.controller.nis_cap >= 1.0) {
            return Err(schema("controller.nis_cap", "must be at least 1"));
        }
        for (path, p) in [
            ("controller.policy", &c.controller.policy),
            ("case1.periodic", &c.case1.periodic),
            ("case1.stmpc", &c.case1.stmpc),
        ] {
            p.validate().map_err(|e| schema(path, e.to_string()))?;
        }
        if c.scheduler.m == 0 {
            return Err(schema("scheduler.m", "must be at least 1"));
        }
        nonneg("scheduler.r_risk_m", c.scheduler.r_risk_m)?;
        pos("scheduler.r_meas_pos", c.scheduler.r_meas_pos)?;
        pos("scheduler.r_meas_vel", c.scheduler.r_meas_vel)?;
        c.scheduler
            .weights
            .validate()
            .map_err(|e| schema("scheduler.weights", e.to_string()))?;
        for (i, b) in c.scheduler.high_risk.iter().enumerate() {
            b.validate().map_err(|e| schema(format!("scheduler.high_risk[{i}]"), e.to_string()))?;
        }
        for (i, m) in c.movers.iter().enumerate() {
            m.validate().map_err(|e| schema(format!("movers[{i}]"), e.to_string()))?;
        }
        for (i, g) in c.gusts.iter().enumerate() {
            if g.start_slot >= g.end_slot {
                return Err(schema(format!("gusts[{i}]"), "start_slot must precede end_slot"));
            }
            if g.bias.norm() > c.plant.u_max {
                return Err(schema(format!("gusts[{i}].bias"), "magnitude exceeds plant.u_max"));
            }
        }
        if c.horizon_slots == Some(0) {
            return Err(schema("horizon_slots", "must be at least 1"));
        }
        if let Some(f) = &c.fleet {
            if f.columns == 0 {
                return Err(schema("fleet.columns", "must be at least 1"));
            }
        }
        if c.uav.is_empty() && c.fleet.is_none() {
            return Err(schema("uav", "scenario needs at least one [[uav]] or a [fleet]"));
        }
        if c.case2.m.contains(&0) {
            return Err(schema("case2.m", "entries must be at least 1"));
        }
        Ok(())
    }

    /// Explicit UAVs, or the first `fleet.count` generated ones.
    pub fn uavs(&self) -> Vec<UavSpec> {
        match (&self.config.fleet, self.config.uav.is_empty()) {
            (Some(f), true) => self.fleet_of(f.count),
            _ => self.config.uav.clone(),
        }
    }

    /// `n` UAVs from the fleet generator, or the explicit list truncated.
    pub fn fleet_of(&self, n: usize) -> Vec<UavSpec> {
        match &self.config.fleet {
            Some(f) => (0..n).map(|i| f.uav(i)).collect(),
            None => self.config.uav.iter().copied().take(n).collect(),
        }
    }

    pub fn plant(&self) -> PlantModel {
        let p = &self.config.plant;
        let q = CovMatrix::isotropic(p.q_pos, p.q_vel).expect("validated variances");
        PlantModel::double_integrator(p.dt, q, p.u_max, p.v_max).expect("validated plant")
    }

    pub fn link(&self) -> LinkModel {
        LinkModel {
            gamma_th_db: self.config.radio.gamma_th_db,
            steepness_per_db: self.config.radio.steepness_per_db,
            slot_duration_s: self.config.plant.dt,
            energy_per_packet_j: self.config.radio.energy_per_packet_j,
        }
    }

    pub fn disturbance(&self) -> Disturbance {
        Disturbance {
            gusts: self.config.gusts.clone(),
        }
    }

    pub fn r_meas(&self) -> CovMatrix {
        let s = &self.config.scheduler;
        CovMatrix::isotropic(s.r_meas_pos, s.r_meas_vel).expect("validated variances")
    }
}
