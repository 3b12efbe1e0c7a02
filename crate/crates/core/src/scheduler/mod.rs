//! Base-station side: belief tracking per UAV and the per-slot grant of the
//! shared uplink/downlink among contending UAVs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::base::{CovMatrix, UavState, Vec3};
use crate::dynamics::{propagate_covariance, PlantModel};
use crate::error::{invalid, Result};

pub use crate::harness::{run_swarm, SwarmMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityWeights {
    pub w_cov: f64,
    pub w_aoi: f64,
    pub w_risk: f64,
}

impl Default for PriorityWeights {
    fn default() -> Self {
        Self {
            w_cov: 1.0,
            w_aoi: 0.5,
            w_risk: 2.0,
        }
    }
}

impl PriorityWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_cov, self.w_aoi, self.w_risk];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().all(|v| *v == 0.0) {
            return Err(invalid("priority weights must be non-negative and not all zero"));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w_cov: self.w_cov * c,
            w_aoi: self.w_aoi * c,
            w_risk: self.w_risk * c,
        }
    }
}

/// Base-station belief about one UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct UavContext {
    pub id: usize,
    pub estimate: UavState,
    pub sigma: CovMatrix,
    /// Slots since the last successful uplink.
    pub aoi: u64,
    pub risk_flag: bool,
    /// Issue slot and length of the last packet delivered to the UAV.
    pub last_packet: Option<(u64, usize)>,
}

impl UavContext {
    pub fn new(id: usize, estimate: UavState, sigma: CovMatrix) -> Self {
        Self {
            id,
            estimate,
            sigma,
            aoi: 0,
            risk_flag: false,
            last_packet: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotSchedule {
    pub slot: u64,
    /// Granted ids in descending priority.
    pub granted: Vec<usize>,
}

impl SlotSchedule {
    pub fn empty(slot: u64) -> Self {
        Self {
            slot,
            granted: Vec::new(),
        }
    }

    pub fn contains(&self, id: usize) -> bool {
        self.granted.contains(&id)
    }
}

pub fn priority_score(ctx: &UavContext, w: &PriorityWeights) -> f64 {
    let risk = if ctx.risk_flag { 1.0 } else { 0.0 };
    w.w_cov * ctx.sigma.position_trace() + w.w_aoi * ctx.aoi as f64 + w.w_risk * risk
}

/// Grant the `m` highest-priority contexts; ties go to larger AoI, then lower id.
pub fn schedule_slot(slot: u64, contexts: &[UavContext], m: usize, w: &PriorityWeights) -> SlotSchedule {
    let mut ranked: Vec<(f64, u64, usize)> = contexts
        .iter()
        .map(|c| (priority_score(c, w), c.aoi, c.id))
        .collect();
    ranked.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| b.1.cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
            .then(Ordering::Equal)
    });
    SlotSchedule {
        slot,
        granted: ranked.into_iter().take(m).map(|r| r.2).collect(),
    }
}

/// Result of one granted uplink: the reported state when it got through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UplinkReport {
    pub id: usize,
    pub delivered: Option<UavState>,
}

/// Replace the belief with a successfully reported state.
pub fn reset_to_report(ctx: &mut UavContext, reported: &UavState, r_meas: &CovMatrix) {
    ctx.estimate = *reported;
    ctx.sigma = *r_meas;
    ctx.aoi = 0;
}

/// Advance the belief one slot through the model under `input`.
pub fn propagate_belief(ctx: &mut UavContext, model: &PlantModel, input: &Vec3) {
    let x = model.predict(&ctx.estimate.to_vector(), input);
    let mut next = UavState::from_vector(&x, ctx.estimate.time_index + 1);
    let speed = next.speed();
    if speed > model.v_max {
        next.velocity *= model.v_max / speed;
    }
    ctx.estimate = next;
    ctx.sigma = propagate_covariance(model, &ctx.sigma, 1);
    ctx.aoi += 1;
}

/// Apply one slot of uplink outcomes.
///
/// Granted UAVs whose report arrived are reset to it; all others, including
/// granted ones whose uplink was lost, are propagated under the input the
/// base station believes they applied (`believed_inputs[id]`).
pub fn update_beliefs(
    contexts: &mut [UavContext],
    schedule: &SlotSchedule,
    reports: &[UplinkReport],
    model: &PlantModel,
    believed_inputs: &[Vec3],
    r_meas: &CovMatrix,
) -> Result<()> {
    if reports.len() != schedule.granted.len() || reports.iter().any(|r| !schedule.contains(r.id)) {
        return Err(invalid("uplink outcomes must cover exactly the granted set"));
    }
    for ctx in contexts.iter_mut() {
        let report = reports.iter().find(|r| r.id == ctx.id).and_then(|r| r.delivered);
        match report {
            Some(state) => reset_to_report(ctx, &state, r_meas),
            None => {
                let u = believed_inputs.get(ctx.id).copied().unwrap_or_else(Vec3::zeros);
                propagate_belief(ctx, model, &u);
            }
        }
    }
    Ok(())
}
