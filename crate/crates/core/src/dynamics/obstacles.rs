use serde::{Deserialize, Serialize};

use crate::base::{Aabb, Vec3};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub slot: u64,
    pub min: Vec3,
    pub max: Vec3,
}

impl Keyframe {
    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.min,
            max: self.max,
        }
    }
}

/// Box obstacle moving piecewise-linearly between keyframes and held at the
/// first/last keyframe outside their span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingObstacle {
    pub keyframes: Vec<Keyframe>,
    #[serde(default)]
    pub inflation: f64,
}

impl MovingObstacle {
    pub fn validate(&self) -> Result<()> {
        if self.keyframes.is_empty() {
            return Err(invalid("moving obstacle needs at least one keyframe"));
        }
        if self.keyframes.windows(2).any(|w| w[0].slot >= w[1].slot) {
            return Err(invalid("keyframes must be strictly time-ordered"));
        }
        if !(self.inflation >= 0.0) {
            return Err(invalid("inflation must be >= 0"));
        }
        for k in &self.keyframes {
            k.bounds().validate()?;
        }
        Ok(())
    }

    /// Uninflated box at slot `t`.
    pub fn box_at(&self, t: f64) -> Aabb {
        let ks = &self.keyframes;
        let first = ks[0];
        if t <= first.slot as f64 {
            return first.bounds();
        }
        for w in ks.windows(2) {
            let (a, b) = (w[0], w[1]);
            if t <= b.slot as f64 {
                let s = (t - a.slot as f64) / (b.slot - a.slot) as f64;
                return a.bounds().lerp(&b.bounds(), s);
            }
        }
        ks[ks.len() - 1].bounds()
    }
}

/// Distance from a sphere of `radius` at `p` to the nearest (inflated)
/// obstacle surface. Negative means overlap; `+inf` with no obstacles.
pub fn collision_check(
    p: &Vec3,
    radius: f64,
    statics: &[Aabb],
    movers: &[MovingObstacle],
    t: u64,
) -> f64 {
    let s = statics.iter().map(|b| b.signed_distance(p));
    let m = movers
        .iter()
        .map(|mo| mo.box_at(t as f64).inflate(mo.inflation).signed_distance(p));
    s.chain(m).fold(f64::INFINITY, f64::min) - radius
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(at: Vec3) -> Aabb {
        Aabb::new(at, at + Vec3::new(1.0, 1.0, 1.0)).unwrap()
    }

    #[test]
    fn distance_to_face_minus_radius() {
        let b = unit(Vec3::zeros());
        let c = collision_check(&Vec3::new(6.0, 0.5, 0.5), 1.0, &[b], &[], 0);
        assert!((c - 4.0).abs() < 1e-12);
        assert!(collision_check(&Vec3::new(0.5, 0.5, 0.5), 0.0, &[b], &[], 0) < 0.0);
        assert_eq!(collision_check(&Vec3::zeros(), 1.0, &[], &[], 0), f64::INFINITY);
    }

    #[test]
    fn mover_is_interpolated_between_keyframes() {
        let k0 = unit(Vec3::zeros());
        let k1 = unit(Vec3::new(10.0, 0.0, 0.0));
        let mo = MovingObstacle {
            keyframes: vec![
                Keyframe { slot: 0, min: k0.min, max: k0.max },
                Keyframe { slot: 10, min: k1.min, max: k1.max },
            ],
            inflation: 0.5,
        };
        mo.validate().unwrap();
        // at slot 5 the box spans x in [5, 6]; inflated to [4.5, 6.5]
        let c = collision_check(&Vec3::new(9.5, 0.5, 0.5), 0.0, &[], &[mo.clone()], 5);
        assert!((c - 3.0).abs() < 1e-12);
        // held after the last keyframe
        let late = collision_check(&Vec3::new(10.5, 0.5, 0.5), 0.0, &[], &[mo], 50);
        assert!(late < 0.0);
    }

    #[test]
    fn unordered_keyframes_rejected() {
        let k = Keyframe { slot: 3, min: Vec3::zeros(), max: Vec3::new(1.0, 1.0, 1.0) };
        let mo = MovingObstacle { keyframes: vec![k, k], inflation: 0.0 };
        assert!(mo.validate().is_err());
    }
}
