use serde::{Deserialize, Serialize};

use crate::base::{confidence_radius, Aabb, CovMatrix, UavState, Vec3};
use crate::dynamics::{collision_check, propagate_covariance, MovingObstacle, PlantModel};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TriggerPolicy {
    /// Send a full-horizon packet every `period` slots.
    Periodic { period: u64 },
    /// Send when the actual position leaves the predicted one by more than `delta`.
    Etc { delta: f64 },
    /// Send when the previously chosen packet length elapses.
    Stmpc {
        kappa: f64,
        m_safe: f64,
        n_max: usize,
        /// Optional ceiling on the confidence radius over the packet.
        #[serde(default)]
        uncertainty_cap: Option<f64>,
    },
}

impl TriggerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            TriggerPolicy::Periodic { .. } => "periodic",
            TriggerPolicy::Etc { .. } => "etc",
            TriggerPolicy::Stmpc { .. } => "stmpc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TriggerPolicy::Periodic { period } => period >= 1,
            TriggerPolicy::Etc { delta } => delta.is_finite() && delta > 0.0,
            TriggerPolicy::Stmpc {
                kappa,
                m_safe,
                n_max,
                uncertainty_cap,
            } => {
                kappa.is_finite()
                    && kappa > 0.0
                    && m_safe.is_finite()
                    && m_safe >= 0.0
                    && n_max >= 1
                    && uncertainty_cap.is_none_or(|c| c > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid {} trigger parameters", self.name())))
        }
    }
}

/// Strict position-discrepancy test.
pub fn etc_should_trigger(actual: &UavState, predicted: &UavState, delta: f64) -> Result<bool> {
    if actual.time_index != predicted.time_index {
        return Err(invalid(format!(
            "time index mismatch: actual {} vs predicted {}",
            actual.time_index, predicted.time_index
        )));
    }
    Ok((actual.position - predicted.position).norm() > delta)
}

/// Longest packet over which the propagated uncertainty keeps the preview
/// clear of obstacles by `m_safe`.
///
/// `preview[j - 1]` is the planned position at slot `slot + j`. The result is
/// at least 1 and at most `n_max`.
#[allow(clippy::too_many_arguments)]
pub fn stmpc_length(
    model: &PlantModel,
    sigma0: &CovMatrix,
    preview: &[Vec3],
    statics: &[Aabb],
    movers: &[MovingObstacle],
    kappa: f64,
    m_safe: f64,
    n_max: usize,
    uncertainty_cap: Option<f64>,
    slot: u64,
) -> usize {
    let horizon = n_max.min(preview.len());
    let mut sigma = *sigma0;
    let mut l = 0;
    for j in 1..=horizon {
        sigma = propagate_covariance(model, &sigma, 1);
        let r = confidence_radius(&sigma, kappa);
        if uncertainty_cap.is_some_and(|c| r > c) {
            break;
        }
        if collision_check(&preview[j - 1], r, statics, movers, slot + j as u64) < m_safe {
            break;
        }
        l = j;
    }
    l.max(1)
}

/// Running estimate of how much the realized process noise exceeds `Q`.
///
/// Fed with normalized innovation squared values per degree of freedom; the
/// scale is an exponentially weighted mean floored at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NisScale {
    pub alpha: f64,
    pub cap: f64,
    value: f64,
}

impl NisScale {
    pub fn new(alpha: f64, cap: f64) -> Self {
        Self {
            alpha,
            cap,
            value: 1.0,
        }
    }

    pub fn update(&mut self, nis_per_dof: f64) {
        if nis_per_dof.is_finite() {
            self.value = (1.0 - self.alpha) * self.value + self.alpha * nis_per_dof;
        }
    }

    pub fn scale(&self) -> f64 {
        self.value.clamp(1.0, self.cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(x: f64, t: u64) -> UavState {
        UavState::at_rest(Vec3::new(x, 0.0, 0.0), t)
    }

    #[test]
    fn etc_boundary_is_strict() {
        let d = 0.5;
        assert!(!etc_should_trigger(&at(0.0, 3), &at(0.0, 3), d).unwrap());
        assert!(!etc_should_trigger(&at(0.5, 3), &at(0.0, 3), d).unwrap());
        assert!(etc_should_trigger(&at(0.5 + 1e-6, 3), &at(0.0, 3), d).unwrap());
        assert!(etc_should_trigger(&at(0.0, 3), &at(0.0, 4), d).is_err());
    }

    fn model(q: f64) -> PlantModel {
        let qm = CovMatrix::isotropic(q, q).unwrap();
        PlantModel::double_integrator(0.1, qm, 3.0, 15.0).unwrap()
    }

    #[test]
    fn empty_world_gives_full_length() {
        let preview = vec![Vec3::zeros(); 20];
        let s0 = CovMatrix::isotropic(0.01, 0.04).unwrap();
        assert_eq!(stmpc_length(&model(0.1), &s0, &preview, &[], &[], 2.0, 1.0, 20, None, 0), 20);
        let wall = Aabb::new(Vec3::new(5.0, -50.0, -50.0), Vec3::new(6.0, 50.0, 50.0)).unwrap();
        assert_eq!(
            stmpc_length(&model(0.0), &CovMatrix::zeros(), &preview, &[wall], &[], 2.0, 1.0, 20, None, 0),
            20
        );
    }

    #[test]
    fn wall_hand_oracle() {
        // Pure position noise, no velocity coupling from Σ0: per-axis
        // position variance after j steps is q_p j, so r_j = kappa sqrt(q_p j).
        let q_p = 0.95;
        let qm = CovMatrix::new(nalgebra::Matrix6::from_diagonal(&nalgebra::Vector6::new(
            q_p, q_p, q_p, 0.0, 0.0, 0.0,
        )))
        .unwrap();
        let m = PlantModel::double_integrator(0.1, qm, 3.0, 15.0).unwrap();
        let (kappa, m_safe) = (1.5, 1.0);
        // clearance 5 - kappa sqrt(q_p j) >= m_safe  <=>  j <= (4 / kappa)^2 / q_p = 7.49
        let wall = Aabb::new(Vec3::new(5.0, -50.0, -50.0), Vec3::new(6.0, 50.0, 50.0)).unwrap();
        let preview = vec![Vec3::zeros(); 30];
        let oracle = (1..=30)
            .take_while(|&j| 5.0 - kappa * (q_p * j as f64).sqrt() >= m_safe)
            .last()
            .unwrap();
        assert_eq!(oracle, 7);
        let l = stmpc_length(&m, &CovMatrix::zeros(), &preview, &[wall], &[], kappa, m_safe, 30, None, 0);
        assert_eq!(l, oracle);
        // tighter risk never lengthens the packet
        let l2 = stmpc_length(&m, &CovMatrix::zeros(), &preview, &[wall], &[], 2.0 * kappa, m_safe, 30, None, 0);
        assert!(l2 <= l);
    }

    #[test]
    fn floor_is_one() {
        let wall = Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0)).unwrap();
        let preview = vec![Vec3::zeros(); 5];
        assert_eq!(stmpc_length(&model(0.1), &CovMatrix::zeros(), &preview, &[wall], &[], 2.0, 1.0, 5, None, 0), 1);
    }

    #[test]
    fn nis_scale_floors_at_one() {
        let mut s = NisScale::new(0.5, 10.0);
        s.update(0.1);
        assert_eq!(s.scale(), 1.0);
        for _ in 0..20 {
            s.update(4.0);
        }
        assert!((s.scale() - 4.0).abs() < 1e-3);
        s.update(f64::NAN);
        assert!(s.scale().is_finite());
    }
}
