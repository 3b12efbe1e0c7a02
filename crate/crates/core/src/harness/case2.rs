//! Swarm sweep over fleet size and grants per slot.

use rayon::prelude::*;

use crate::base::mix64;
use crate::error::Result;

use super::sim::{run_swarm, Prepared, SwarmMetrics};
use super::config::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub seed_index: u64,
    pub metrics: SwarmMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Seed-averaged swarm control error for one `(n, m)` cell.
    pub fn mean_error(&self, n: usize, m: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.n == n && r.m == m)
            .map(|r| r.metrics.avg_ctrl_err_m)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn ns(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn ms(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.rows.iter().map(|r| r.m).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Run seed for fleet size `n` and seed index `idx`. It does not depend on
/// the grant budget, so runs at different `m` share their random draws.
pub fn sweep_seed(base: u64, n: usize, idx: u64) -> u64 {
    let key = mix64(n as u64) ^ mix64(idx.wrapping_add(0x9e37_79b9));
    base ^ mix64(key)
}

/// Plan the largest fleet once and sweep every `(n, m, seed)` cell in parallel.
pub fn run_case2(scenario: &Scenario, ns: &[usize], ms: &[usize], seeds: u64) -> Result<SweepReport> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let prep = Prepared::new(scenario, &scenario.fleet_of(n_max))?;
    let base = scenario.config.seed;
    let mut cells = Vec::new();
    for &n in ns {
        for &m in ms {
            for idx in 0..seeds {
                cells.push((n, m, idx));
            }
        }
    }
    let mut rows = cells
        .par_iter()
        .map(|&(n, m, idx)| {
            run_swarm(&prep, n, m, sweep_seed(base, n, idx)).map(|metrics| SweepRow {
                n,
                m,
                seed_index: idx,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| (r.n, r.m, r.seed_index));
    Ok(SweepReport { rows })
}
