//! Single-UAV comparison of periodic MPC against self-triggered MPC.

use crate::controller::TriggerPolicy;
use crate::dynamics::collision_check;
use crate::error::{Error, Result};

use super::sim::{run_closed_loop, Prepared, RunOutput, RunSpec};

/// Distance to obstacles within which a slot counts as challenging.
pub const NEAR_OBSTACLE_M: f64 = 15.0;

#[derive(Debug, Clone)]
pub struct Case1Seed {
    pub seed: u64,
    pub periodic: RunOutput,
    pub stmpc: RunOutput,
    /// Median packet length issued in gust or near-obstacle slots.
    pub median_len_challenging: Option<f64>,
    pub median_len_elsewhere: Option<f64>,
}

impl Case1Seed {
    pub fn energy_reduction(&self) -> f64 {
        1.0 - self.stmpc.metrics.energy_j / self.periodic.metrics.energy_j
    }

    pub fn rms_ratio(&self) -> f64 {
        self.stmpc.metrics.rms_error_m[0] / self.periodic.metrics.rms_error_m[0]
    }

    /// Packets are shorter in challenging slots than elsewhere.
    pub fn adapts(&self) -> bool {
        match (self.median_len_challenging, self.median_len_elsewhere) {
            (Some(c), Some(e)) => c < e,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Case1Report {
    pub seeds: Vec<Case1Seed>,
}

impl Case1Report {
    pub fn mean_energy_reduction(&self) -> f64 {
        mean(self.seeds.iter().map(Case1Seed::energy_reduction))
    }

    pub fn mean_rms_periodic(&self) -> f64 {
        mean(self.seeds.iter().map(|s| s.periodic.metrics.rms_error_m[0]))
    }

    pub fn mean_rms_stmpc(&self) -> f64 {
        mean(self.seeds.iter().map(|s| s.stmpc.metrics.rms_error_m[0]))
    }

    pub fn adapting_seeds(&self) -> usize {
        self.seeds.iter().filter(|s| s.adapts()).count()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Whether slot `k` of a run is inside a gust or near an obstacle.
pub fn challenging_slot(prep: &Prepared, run: &RunOutput, k: u64) -> bool {
    let cfg = &prep.scenario.config;
    if prep.scenario.disturbance().gust_active(k) {
        return true;
    }
    let p = run.uavs[0].traces[k as usize].position;
    collision_check(&p, 0.0, &cfg.environment.buildings, &cfg.movers, k) <= NEAR_OBSTACLE_M
}

fn seed_run(prep: &Prepared, seed: u64) -> Result<Case1Seed> {
    let c = &prep.scenario.config;
    let horizon = prep.default_horizon(1);
    let spec = |policy: TriggerPolicy| RunSpec {
        policy,
        m: 1,
        seed,
        n: 1,
        horizon,
    };
    let periodic = run_closed_loop(prep, &spec(c.case1.periodic))?;
    let stmpc = run_closed_loop(prep, &spec(c.case1.stmpc))?;
    let (mut hard, mut easy) = (Vec::new(), Vec::new());
    for p in &stmpc.uavs[0].packets {
        if challenging_slot(prep, &stmpc, p.issue_slot) {
            hard.push(p.len as f64);
        } else {
            easy.push(p.len as f64);
        }
    }
    Ok(Case1Seed {
        seed,
        periodic,
        stmpc,
        median_len_challenging: median(&mut hard),
        median_len_elsewhere: median(&mut easy),
    })
}

/// Seeds `base, base + 1, ...`.
pub fn case1_seeds(base: u64, count: u64) -> Vec<u64> {
    (0..count).map(|i| base.wrapping_add(i)).collect()
}

pub fn run_case1(prep: &Prepared, seeds: &[u64]) -> Result<Case1Report> {
    if prep.uavs.len() != 1 {
        return Err(Error::Scenario(format!(
            "case1 needs a single-UAV scenario, found {} UAVs",
            prep.uavs.len()
        )));
    }
    use rayon::prelude::*;
    let seeds = seeds
        .par_iter()
        .map(|&s| seed_run(prep, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Case1Report { seeds })
}
