use serde::{Deserialize, Serialize};

use crate::base::SimRng;
use crate::error::{invalid, Result};

/// Per-slot packet-erasure channel: delivery probability is a logistic
/// function of SINR centered on the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkModel {
    pub gamma_th_db: f64,
    /// Logistic steepness per dB.
    pub steepness_per_db: f64,
    pub slot_duration_s: f64,
    pub energy_per_packet_j: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            gamma_th_db: 0.0,
            steepness_per_db: 0.5,
            slot_duration_s: 0.1,
            energy_per_packet_j: 1e-3,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.steepness_per_db > 0.0) {
            return Err(invalid("link steepness must be > 0"));
        }
        if !(self.slot_duration_s > 0.0 && self.slot_duration_s <= 1.0) {
            return Err(invalid("slot_duration_s must be in (0, 1]"));
        }
        if !(self.energy_per_packet_j > 0.0) {
            return Err(invalid("energy_per_packet_j must be > 0"));
        }
        if !self.gamma_th_db.is_finite() {
            return Err(invalid("gamma_th_db must be finite"));
        }
        Ok(())
    }

    pub fn success_probability(&self, sinr_db: f64) -> f64 {
        if sinr_db == f64::NEG_INFINITY {
            return 0.0;
        }
        1.0 / (1.0 + (-self.steepness_per_db * (sinr_db - self.gamma_th_db)).exp())
    }
}

/// Draws one delivery outcome. Exactly one uniform is consumed per call.
pub fn packet_outcome(link: &LinkModel, sinr_db: f64, rng: &mut SimRng) -> bool {
    let p = link.success_probability(sinr_db);
    rng.uniform() < p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_midpoint_and_saturation() {
        let link = LinkModel::default();
        assert_eq!(link.success_probability(link.gamma_th_db), 0.5);
        assert!(link.success_probability(link.gamma_th_db + 60.0) > 1.0 - 1e-9);
        assert_eq!(link.success_probability(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn strictly_increasing_over_operating_range() {
        let link = LinkModel::default();
        let mut prev = -1.0;
        for i in -400..=400 {
            let p = link.success_probability(i as f64 * 0.1);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn draw_consumed_on_extremes() {
        let link = LinkModel::default();
        let mut a = SimRng::new(1, 0);
        let mut b = SimRng::new(1, 0);
        packet_outcome(&link, 1e6, &mut a);
        packet_outcome(&link, -1e6, &mut b);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn empirical_rate_matches_closed_form() {
        let link = LinkModel::default();
        let sinr = link.gamma_th_db + 4.0;
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((expected - 0.8808).abs() < 1e-4);
        let mut rng = SimRng::new(2024, 0);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| packet_outcome(&link, sinr, &mut rng)).count();
        assert!((hits as f64 / n as f64 - expected).abs() <= 0.002);
    }
}
