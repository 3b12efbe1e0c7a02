use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// 3D point or vector in meters (or m/s, m/s² depending on context).
pub type Vec3 = Vector3<f64>;

/// Stacked (position, velocity) state vector.
pub type Vec6 = Vector6<f64>;

pub(crate) fn is_finite(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Axis-aligned box with `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_finite(&self.min) || !is_finite(&self.max) {
            return Err(invalid("box corners must be finite"));
        }
        if (0..3).any(|i| self.min[i] > self.max[i]) {
            return Err(invalid(format!(
                "box min {:?} exceeds max {:?}",
                self.min.as_slice(),
                self.max.as_slice()
            )));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        let d = Vec3::repeat(r);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }

    /// Signed Euclidean distance from `p` to the box surface; negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let c = self.center();
        let h = self.extent() * 0.5;
        let q = (p - c).abs() - h;
        let outside = q.map(|v| v.max(0.0)).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }

    /// Componentwise linear interpolation between two boxes.
    pub fn lerp(&self, other: &Aabb, t: f64) -> Aabb {
        Aabb {
            min: self.min + (other.min - self.min) * t,
            max: self.max + (other.max - self.max) * t,
        }
    }

    /// True if the open segment `a -> b` passes through the open interior of
    /// the box. Grazing a face, edge or corner does not count.
    pub fn segment_hits_interior(&self, a: &Vec3, b: &Vec3) -> bool {
        let d = b - a;
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if a[i] <= self.min[i] || a[i] >= self.max[i] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[i];
                let mut ta = (self.min[i] - a[i]) * inv;
                let mut tb = (self.max[i] - a[i]) * inv;
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 >= t1 {
                    return false;
                }
            }
        }
        t0 < t1
    }
}

/// Kinematic UAV state at a slot boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub time_index: u64,
}

impl UavState {
    pub fn at_rest(position: Vec3, time_index: u64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            time_index,
        }
    }

    pub fn validate(&self, v_max: f64) -> Result<()> {
        if !is_finite(&self.position) || !is_finite(&self.velocity) {
            return Err(invalid("state components must be finite"));
        }
        if self.speed() > v_max * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "speed {:.6} m/s exceeds v_max {v_max} m/s",
                self.speed()
            )));
        }
        Ok(())
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn to_vector(&self) -> Vec6 {
        Vec6::new(
            self.position.x,
            self.position.y,
            self.position.z,
            self.velocity.x,
            self.velocity.y,
            self.velocity.z,
        )
    }

    pub fn from_vector(x: &Vec6, time_index: u64) -> Self {
        Self {
            position: Vec3::new(x[0], x[1], x[2]),
            velocity: Vec3::new(x[3], x[4], x[5]),
            time_index,
        }
    }
}
