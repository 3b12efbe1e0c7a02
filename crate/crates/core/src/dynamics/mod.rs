//! Discrete-time UAV motion model, disturbance injection and open-loop
//! covariance propagation.

mod obstacles;

pub use obstacles::{collision_check, Keyframe, MovingObstacle};

use nalgebra::{Matrix6x3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::base::{mat_psd_project, CovMatrix, Mat6, SimRng, UavState, Vec3, Vec6};
use crate::error::{invalid, Result};

/// Zero-order-hold double integrator per axis:
/// `A = [[I, dt I], [0, I]]`, `B = [[dt²/2 I], [dt I]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    dt: f64,
    a: Mat6,
    b: Matrix6x3<f64>,
    q: CovMatrix,
    noise_factor: Mat6,
    pub u_max: f64,
    pub v_max: f64,
}

impl PlantModel {
    pub fn double_integrator(dt: f64, q: CovMatrix, u_max: f64, v_max: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("plant dt must be > 0"));
        }
        if !(u_max > 0.0) || !(v_max > 0.0) {
            return Err(invalid("u_max and v_max must be > 0"));
        }
        let mut a = Mat6::identity();
        let mut b = Matrix6x3::zeros();
        for i in 0..3 {
            a[(i, i + 3)] = dt;
            b[(i, i)] = 0.5 * dt * dt;
            b[(i + 3, i)] = dt;
        }
        let eig = SymmetricEigen::new(*q.matrix());
        let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let noise_factor = eig.eigenvectors * Mat6::from_diagonal(&sqrt_l);
        Ok(Self {
            dt,
            a,
            b,
            q,
            noise_factor,
            u_max,
            v_max,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn a(&self) -> &Mat6 {
        &self.a
    }

    pub fn b(&self) -> &Matrix6x3<f64> {
        &self.b
    }

    pub fn q(&self) -> &CovMatrix {
        &self.q
    }

    /// Same dynamics with the process noise scaled by `c`.
    pub fn with_noise_scale(&self, c: f64) -> Self {
        let q = self.q.scaled(c);
        let noise_factor = self.noise_factor * c.max(0.0).sqrt();
        Self {
            q,
            noise_factor,
            ..self.clone()
        }
    }

    /// Noiseless one-step prediction `A x + B u`.
    pub fn predict(&self, x: &Vec6, u: &Vec3) -> Vec6 {
        self.a * x + self.b * u
    }

    pub fn clamp_input(&self, u: &Vec3) -> Vec3 {
        u.map(|c| c.clamp(-self.u_max, self.u_max))
    }
}

/// Wind gust: a deterministic acceleration bias over `[start_slot, end_slot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gust {
    pub start_slot: u64,
    pub end_slot: u64,
    pub bias: Vec3,
}

/// External disturbances layered on the plant's Gaussian process noise `Q`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Disturbance {
    pub gusts: Vec<Gust>,
}

impl Disturbance {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, u_max: f64, horizon: u64) -> Result<()> {
        for g in &self.gusts {
            if g.start_slot >= g.end_slot || g.end_slot > horizon {
                return Err(invalid(format!(
                    "gust interval [{}, {}) must be non-empty and within the horizon {horizon}",
                    g.start_slot, g.end_slot
                )));
            }
            if g.bias.norm() > u_max {
                return Err(invalid("gust bias magnitude exceeds u_max"));
            }
        }
        Ok(())
    }

    pub fn bias_at(&self, slot: u64) -> Vec3 {
        self.gusts
            .iter()
            .filter(|g| g.start_slot <= slot && slot < g.end_slot)
            .map(|g| g.bias)
            .sum()
    }

    pub fn gust_active(&self, slot: u64) -> bool {
        self.gusts
            .iter()
            .any(|g| g.start_slot <= slot && slot < g.end_slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub state: UavState,
    /// Commanded input after clamping to `u_max`.
    pub applied_input: Vec3,
    pub input_saturated: bool,
    pub velocity_saturated: bool,
}

/// Advances one slot: `x+ = A x + B (u + gust) + w`, `w ~ N(0, Q)`.
///
/// Six normals are drawn from `rng` on every call, whatever `Q` is.
pub fn step(
    model: &PlantModel,
    x: &UavState,
    u: &Vec3,
    d: &Disturbance,
    rng: &mut SimRng,
) -> StepRecord {
    let applied = model.clamp_input(u);
    let input_saturated = applied != *u;
    let z = Vec6::from_fn(|_, _| rng.standard_normal());
    let w = model.noise_factor * z;
    let accel = applied + d.bias_at(x.time_index);
    let next = model.a * x.to_vector() + model.b * accel + w;
    let mut state = UavState::from_vector(&next, x.time_index + 1);
    let speed = state.speed();
    let velocity_saturated = speed > model.v_max;
    if velocity_saturated {
        state.velocity *= model.v_max / speed;
    }
    StepRecord {
        state,
        applied_input: applied,
        input_saturated,
        velocity_saturated,
    }
}

/// `steps` applications of `Σ ← A Σ Aᵀ + Q`, PSD-projected after each.
pub fn propagate_covariance(model: &PlantModel, sigma0: &CovMatrix, steps: usize) -> CovMatrix {
    let mut s = *sigma0;
    for _ in 0..steps {
        s = propagate_once(model, &s);
    }
    s
}

pub(crate) fn propagate_once(model: &PlantModel, s: &CovMatrix) -> CovMatrix {
    let next = model.a * s.matrix() * model.a.transpose() + model.q.matrix();
    mat_psd_project(&next).expect("propagation preserves symmetry")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(dt: f64) -> PlantModel {
        PlantModel::double_integrator(dt, CovMatrix::zeros(), 5.0, 20.0).unwrap()
    }

    fn rest() -> UavState {
        UavState::at_rest(Vec3::zeros(), 0)
    }

    #[test]
    fn equilibrium_stays_put() {
        let m = quiet(0.1);
        let r = step(&m, &rest(), &Vec3::zeros(), &Disturbance::none(), &mut SimRng::new(0, 0));
        assert_eq!(r.state.position, Vec3::zeros());
        assert_eq!(r.state.velocity, Vec3::zeros());
        assert_eq!(r.state.time_index, 1);
    }

    #[test]
    fn single_step_arithmetic() {
        let m = quiet(0.1);
        let r = step(
            &m,
            &rest(),
            &Vec3::new(1.0, 0.0, 0.0),
            &Disturbance::none(),
            &mut SimRng::new(0, 0),
        );
        assert!((r.state.position - Vec3::new(0.005, 0.0, 0.0)).norm() < 1e-15);
        assert!((r.state.velocity - Vec3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gust_bias_equals_input() {
        let m = quiet(0.1);
        let d = Disturbance {
            gusts: vec![Gust {
                start_slot: 0,
                end_slot: 5,
                bias: Vec3::new(0.5, 0.0, 0.0),
            }],
        };
        let mut rng = SimRng::new(0, 0);
        let with_gust = step(&m, &rest(), &Vec3::zeros(), &d, &mut rng);
        let with_input = step(&m, &rest(), &Vec3::new(0.5, 0.0, 0.0), &Disturbance::none(), &mut rng);
        assert_eq!(with_gust.state, with_input.state);
    }

    #[test]
    fn saturations_are_flagged() {
        let m = PlantModel::double_integrator(0.1, CovMatrix::zeros(), 1.0, 1.0).unwrap();
        let x = UavState {
            position: Vec3::zeros(),
            velocity: Vec3::new(0.99, 0.0, 0.0),
            time_index: 0,
        };
        let r = step(&m, &x, &Vec3::new(3.0, 0.0, 0.0), &Disturbance::none(), &mut SimRng::new(0, 0));
        assert!(r.input_saturated);
        assert_eq!(r.applied_input, Vec3::new(1.0, 0.0, 0.0));
        assert!(r.velocity_saturated);
        assert!((r.state.speed() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn superposition_without_noise() {
        let m = quiet(0.1);
        let d = Disturbance::none();
        let x1 = UavState {
            position: Vec3::new(1.0, -2.0, 3.0),
            velocity: Vec3::new(0.3, 0.1, -0.2),
            time_index: 4,
        };
        let x2 = UavState {
            position: Vec3::new(-0.5, 0.25, 1.0),
            velocity: Vec3::new(-0.1, 0.4, 0.2),
            time_index: 4,
        };
        let u1 = Vec3::new(0.5, -0.2, 0.1);
        let u2 = Vec3::new(-0.3, 0.6, 0.2);
        let sum = UavState::from_vector(&(x1.to_vector() + x2.to_vector()), 4);
        let zero = UavState::at_rest(Vec3::zeros(), 4);
        let mut r = SimRng::new(0, 0);
        let lhs = step(&m, &sum, &(u1 + u2), &d, &mut r).state.to_vector();
        let rhs = step(&m, &x1, &u1, &d, &mut r).state.to_vector()
            + step(&m, &x2, &u2, &d, &mut r).state.to_vector()
            - step(&m, &zero, &Vec3::zeros(), &d, &mut r).state.to_vector();
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn propagation_trivial_cases() {
        let q = CovMatrix::isotropic(0.0, 0.01).unwrap();
        let m = PlantModel::double_integrator(0.1, q, 5.0, 20.0).unwrap();
        let s0 = CovMatrix::isotropic(0.3, 0.2).unwrap();
        assert_eq!(propagate_covariance(&m, &s0, 0), s0);
        let z = quiet(0.1);
        assert_eq!(propagate_covariance(&z, &CovMatrix::zeros(), 25), CovMatrix::zeros());
    }

    #[test]
    fn position_variance_strictly_increases_under_velocity_noise() {
        let q = CovMatrix::isotropic(0.0, 0.01).unwrap();
        let m = PlantModel::double_integrator(0.1, q, 5.0, 20.0).unwrap();
        let mut s = CovMatrix::zeros();
        let mut prev = 0.0;
        for l in 1..30 {
            let ass = m.a() * s.matrix() * m.a().transpose();
            s = propagate_once(&m, &s);
            assert!(s.trace() >= ass.trace());
            if l >= 2 {
                assert!(s.position_trace() > prev, "step {l}");
            }
            prev = s.position_trace();
        }
    }

    #[test]
    fn sample_mean_converges_to_noiseless_step() {
        let q = CovMatrix::isotropic(0.01, 0.04).unwrap();
        let m = PlantModel::double_integrator(0.1, q, 5.0, 20.0).unwrap();
        let x = UavState {
            position: Vec3::new(1.0, 2.0, 3.0),
            velocity: Vec3::new(0.5, 0.0, -0.5),
            time_index: 0,
        };
        let u = Vec3::new(0.2, 0.1, 0.0);
        let noiseless = m.predict(&x.to_vector(), &u);
        let n = 100_000;
        let mut rng = SimRng::new(99, 0);
        let mut mean = Vec6::zeros();
        for _ in 0..n {
            mean += step(&m, &x, &u, &Disturbance::none(), &mut rng).state.to_vector();
        }
        mean /= n as f64;
        let bound = 3.0 * (q.trace() / n as f64).sqrt();
        assert!((mean - noiseless).norm() <= bound, "{}", (mean - noiseless).norm());
    }
}
