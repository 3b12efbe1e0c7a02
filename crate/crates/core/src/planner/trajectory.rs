use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::base::Vec3;
use crate::dynamics::PlantModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub slot: u64,
    pub position: Vec3,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub dt: f64,
    pub samples: Vec<RefSample>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Sample at `slot`; past the end the final sample is held at rest.
    pub fn at(&self, slot: u64) -> RefSample {
        let last = self.samples.len() - 1;
        match self.samples.get(slot as usize) {
            Some(s) => *s,
            None => RefSample {
                slot,
                position: self.samples[last].position,
                velocity: Vec3::zeros(),
            },
        }
    }

    /// `count` consecutive samples starting at `slot`, held past the end.
    pub fn window(&self, slot: u64, count: usize) -> Vec<RefSample> {
        (0..count as u64).map(|j| self.at(slot + j)).collect()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.position).collect()
    }
}

/// Collapse waypoints closer than `merge_distance`, always keeping both ends.
fn merge_waypoints(wps: &[Vec3], merge_distance: f64) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = vec![wps[0]];
    for (i, w) in wps.iter().enumerate().skip(1) {
        let last = *out.last().unwrap();
        let is_goal = i + 1 == wps.len();
        if (w - last).norm() >= merge_distance {
            out.push(*w);
        } else if is_goal && out.len() > 1 {
            *out.last_mut().unwrap() = *w;
        } else if is_goal && (w - last).norm() > 0.0 {
            out.push(*w);
        }
    }
    out
}

/// Time-parameterize a polyline with a trapezoidal speed profile.
///
/// Acceleration along the path is limited to half of `u_max`, leaving the
/// other half for turning at the vertices, and the vehicle stops at the last
/// waypoint. Corner speeds are capped so the velocity jump across a corner
/// within one slot stays inside the remaining budget.
pub fn refine_trajectory(
    waypoints: &[Vec3],
    model: &PlantModel,
    cruise_speed: f64,
    merge_distance: f64,
) -> Result<ReferenceTrajectory, PlanError> {
    let dt = model.dt();
    if waypoints.is_empty() {
        return Err(PlanError::Trajectory("no waypoints".into()));
    }
    if !(cruise_speed > 0.0 && cruise_speed <= model.v_max) {
        return Err(PlanError::Trajectory(format!(
            "cruise speed {cruise_speed} outside (0, {}]",
            model.v_max
        )));
    }
    if waypoints.iter().any(|w| !w.iter().all(|c| c.is_finite())) {
        return Err(PlanError::Trajectory("non-finite waypoint".into()));
    }
    let pts = merge_waypoints(waypoints, merge_distance);
    if pts.len() == 1 {
        return Ok(ReferenceTrajectory {
            dt,
            samples: vec![RefSample {
                slot: 0,
                position: pts[0],
                velocity: Vec3::zeros(),
            }],
        });
    }

    let accel = 0.5 * model.u_max;
    let seg_len: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let dirs: Vec<Vec3> = pts.windows(2).map(|w| (w[1] - w[0]).normalize()).collect();
    let n = pts.len();
    let mut vlim = vec![cruise_speed; n];
    vlim[0] = 0.0;
    vlim[n - 1] = 0.0;
    for i in 1..n - 1 {
        let cos = dirs[i - 1].dot(&dirs[i]).clamp(-1.0, 1.0);
        // |v d1 - v d2| = 2 v sin(phi/2)
        let half_sin = (0.5 * (1.0 - cos)).sqrt();
        if half_sin > 1e-12 {
            let v = 0.5 * model.u_max * dt / (2.0 * half_sin) - accel * dt;
            vlim[i] = vlim[i].min(v.max(0.0));
        }
    }
    for i in 0..n - 1 {
        vlim[i + 1] = vlim[i + 1].min((vlim[i] * vlim[i] + 2.0 * accel * seg_len[i]).sqrt());
    }
    for i in (0..n - 1).rev() {
        vlim[i] = vlim[i].min((vlim[i + 1] * vlim[i + 1] + 2.0 * accel * seg_len[i]).sqrt());
    }

    let segs: Vec<Profile> = (0..n - 1)
        .map(|i| Profile::new(seg_len[i], vlim[i], vlim[i + 1], cruise_speed, accel))
        .collect();
    let mut t_start = Vec::with_capacity(segs.len() + 1);
    let mut acc = 0.0;
    for s in &segs {
        t_start.push(acc);
        acc += s.duration();
    }
    let total = acc;
    let steps = (total / dt - 1e-9).ceil().max(1.0) as u64;

    let mut samples = Vec::with_capacity(steps as usize + 1);
    let mut seg = 0usize;
    for k in 0..steps {
        let t = k as f64 * dt;
        while seg + 1 < segs.len() && t >= t_start[seg + 1] {
            seg += 1;
        }
        let (s, v) = segs[seg].eval(t - t_start[seg]);
        samples.push(RefSample {
            slot: k,
            position: pts[seg] + dirs[seg] * s.min(seg_len[seg]),
            velocity: dirs[seg] * v,
        });
    }
    samples.push(RefSample {
        slot: steps,
        position: pts[n - 1],
        velocity: Vec3::zeros(),
    });
    Ok(ReferenceTrajectory { dt, samples })
}

/// Accelerate from `v0`, cruise at `vc`, decelerate to `v1` over length `len`.
#[derive(Debug, Clone, Copy)]
struct Profile {
    v0: f64,
    vc: f64,
    a: f64,
    t_acc: f64,
    t_cruise: f64,
    t_dec: f64,
}

impl Profile {
    fn new(len: f64, v0: f64, v1: f64, cruise: f64, a: f64) -> Self {
        let peak = ((2.0 * a * len + v0 * v0 + v1 * v1) / 2.0).sqrt();
        let vc = cruise.min(peak).max(v0).max(v1);
        let t_acc = (vc - v0) / a;
        let t_dec = (vc - v1) / a;
        let d_ramp = (vc * vc - v0 * v0) / (2.0 * a) + (vc * vc - v1 * v1) / (2.0 * a);
        let t_cruise = if vc > 0.0 { ((len - d_ramp) / vc).max(0.0) } else { 0.0 };
        Self {
            v0,
            vc,
            a,
            t_acc,
            t_cruise,
            t_dec,
        }
    }

    fn duration(&self) -> f64 {
        self.t_acc + self.t_cruise + self.t_dec
    }

    /// Arc length and speed at local time `t`.
    fn eval(&self, t: f64) -> (f64, f64) {
        if t < self.t_acc {
            return (self.v0 * t + 0.5 * self.a * t * t, self.v0 + self.a * t);
        }
        let s_acc = self.v0 * self.t_acc + 0.5 * self.a * self.t_acc * self.t_acc;
        let t = t - self.t_acc;
        if t < self.t_cruise {
            return (s_acc + self.vc * t, self.vc);
        }
        let s_cr = s_acc + self.vc * self.t_cruise;
        let t = (t - self.t_cruise).min(self.t_dec);
        (s_cr + self.vc * t - 0.5 * self.a * t * t, self.vc - self.a * t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::CovMatrix;

    fn model(dt: f64, u_max: f64, v_max: f64) -> PlantModel {
        PlantModel::double_integrator(dt, CovMatrix::zeros(), u_max, v_max).unwrap()
    }

    #[test]
    fn straight_line_trapezoid_time() {
        // accel 1 m/s^2 => u_max 2
        let m = model(0.1, 2.0, 15.0);
        let traj = refine_trajectory(&[Vec3::zeros(), Vec3::new(100.0, 0.0, 0.0)], &m, 10.0, 1e-3).unwrap();
        assert!((traj.duration() - 20.0).abs() < 1e-6, "{}", traj.duration());
        let last = traj.samples.last().unwrap();
        assert_eq!(last.position, Vec3::new(100.0, 0.0, 0.0));
        assert_eq!(last.velocity, Vec3::zeros());
        let mid = traj.at(100);
        assert!((mid.position.x - 50.0).abs() < 1e-9);
        assert!((mid.velocity.x - 10.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_is_single_sample() {
        let m = model(0.1, 2.0, 15.0);
        let p = Vec3::new(1.0, 2.0, 3.0);
        let traj = refine_trajectory(&[p, p], &m, 5.0, 1e-3).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.samples[0].velocity, Vec3::zeros());
    }

    #[test]
    fn right_angle_respects_input_bound() {
        let m = model(0.1, 3.0, 15.0);
        let wps = [Vec3::zeros(), Vec3::new(40.0, 0.0, 0.0), Vec3::new(40.0, 40.0, 0.0)];
        let traj = refine_trajectory(&wps, &m, 12.0, 1e-3).unwrap();
        for w in traj.samples.windows(2) {
            let dv = (w[1].velocity - w[0].velocity).norm();
            assert!(dv <= m.u_max * m.dt() * (1.0 + 1e-9), "{dv}");
            assert!(w[1].velocity.norm() <= m.v_max + 1e-12);
        }
    }

    #[test]
    fn rejects_excess_cruise() {
        let m = model(0.1, 3.0, 15.0);
        assert!(refine_trajectory(&[Vec3::zeros(), Vec3::x()], &m, 16.0, 1e-3).is_err());
    }
}
