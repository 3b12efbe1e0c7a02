use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::base::{UavState, Vec3, Vec6};
use crate::dynamics::PlantModel;
use crate::error::{invalid, Result};
use crate::planner::RefSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcWeights {
    pub q_pos: f64,
    pub q_vel: f64,
    pub r_u: f64,
    pub n_max: usize,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self {
            q_pos: 1.0,
            q_vel: 0.5,
            r_u: 0.05,
            n_max: 20,
        }
    }
}

impl MpcWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.q_pos) && ok(self.q_vel) && ok(self.r_u)) || self.n_max == 0 {
            return Err(invalid("MPC weights must be positive and n_max at least 1"));
        }
        Ok(())
    }
}

/// A sequence of future inputs `u_{k|k}, ..., u_{k+L-1|k}` sent as one packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPacket {
    pub issue_slot: u64,
    pub inputs: Vec<Vec3>,
    /// Noiseless predicted states for slots `k, ..., k+L` under `inputs`.
    pub predicted: Vec<Vec6>,
}

impl ControlPacket {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Predicted state at `slot`, if the packet covers it.
    pub fn predicted_at(&self, slot: u64) -> Option<&Vec6> {
        slot.checked_sub(self.issue_slot)
            .and_then(|j| self.predicted.get(j as usize))
    }
}

struct Condensed {
    /// Stacked `A^l` blocks, l = 1..L.
    phi: DMatrix<f64>,
    /// Stacked input-to-state map.
    gamma: DMatrix<f64>,
    /// Diagonal of the state weight.
    w: DVector<f64>,
    /// Per-axis Hessian blocks; the double integrator does not couple axes.
    h_axis: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

/// Batch MPC with the Hessian factorization cached per horizon length.
pub struct MpcSolver {
    model: PlantModel,
    weights: MpcWeights,
    cache: HashMap<usize, Condensed>,
}

impl MpcSolver {
    pub fn new(model: PlantModel, weights: MpcWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self {
            model,
            weights,
            cache: HashMap::new(),
        })
    }

    pub fn weights(&self) -> &MpcWeights {
        &self.weights
    }

    fn condensed(&mut self, l: usize) -> &Condensed {
        let (model, w) = (&self.model, &self.weights);
        self.cache.entry(l).or_insert_with(|| {
            let a = model.a();
            let b = model.b();
            let mut phi = DMatrix::zeros(6 * l, 6);
            let mut gamma = DMatrix::zeros(6 * l, 3 * l);
            let mut ap = *a;
            // powers[i] = A^i B
            let mut powers = Vec::with_capacity(l);
            let mut ab = *b;
            for _ in 0..l {
                powers.push(ab);
                ab = a * ab;
            }
            for row in 0..l {
                phi.view_mut((6 * row, 0), (6, 6)).copy_from(&ap);
                ap = a * ap;
                for col in 0..=row {
                    gamma
                        .view_mut((6 * row, 3 * col), (6, 3))
                        .copy_from(&powers[row - col]);
                }
            }
            let wdiag = DVector::from_fn(6 * l, |i, _| if i % 6 < 3 { w.q_pos } else { w.q_vel });
            let mut h = gamma.transpose() * DMatrix::from_diagonal(&wdiag) * &gamma;
            for i in 0..3 * l {
                h[(i, i)] += w.r_u;
            }
            let h_axis = DMatrix::from_fn(l, l, |i, j| h[(3 * i, 3 * j)]);
            let chol = Cholesky::new(h).expect("r_u > 0 makes the Hessian positive definite");
            Condensed {
                phi,
                gamma,
                w: wdiag,
                h_axis,
                chol,
            }
        })
    }

    /// Optimal input stack for horizon `l`. The closed form is returned as is
    /// when it respects `u_max`; otherwise each saturating axis is re-solved
    /// as a box-constrained QP so the inputs after a clamped one still fit.
    fn raw(&mut self, x0: &Vec6, reference: &[RefSample], l: usize) -> DVector<f64> {
        let u_max = self.model.u_max;
        let c = self.condensed(l);
        let mut r = DVector::zeros(6 * l);
        for j in 0..l {
            let s = &reference[j + 1];
            r.fixed_rows_mut::<3>(6 * j).copy_from(&s.position);
            r.fixed_rows_mut::<3>(6 * j + 3).copy_from(&s.velocity);
        }
        let x0 = DVector::from_column_slice(x0.as_slice());
        let e = r - &c.phi * x0;
        let g = c.gamma.transpose() * e.component_mul(&c.w);
        let mut u = c.chol.solve(&g);
        for axis in 0..3 {
            if (0..l).all(|j| u[3 * j + axis].abs() <= u_max) {
                continue;
            }
            let ga = DVector::from_fn(l, |j, _| g[3 * j + axis]);
            let ua = DVector::from_fn(l, |j, _| u[3 * j + axis]);
            let sol = box_qp(&c.h_axis, &ga, &ua, u_max);
            for j in 0..l {
                u[3 * j + axis] = sol[j];
            }
        }
        u
    }

    /// Solve for `l` inputs tracking `reference[1..=l]`; `reference[0]` is the
    /// current slot.
    pub fn solve(&mut self, x0: &UavState, reference: &[RefSample], l: usize) -> Result<ControlPacket> {
        if l == 0 || l > self.weights.n_max {
            return Err(invalid(format!("horizon {l} outside [1, {}]", self.weights.n_max)));
        }
        if reference.len() < l + 1 {
            return Err(invalid(format!(
                "reference has {} samples, horizon {l} needs {}",
                reference.len(),
                l + 1
            )));
        }
        let x = x0.to_vector();
        let u = self.raw(&x, reference, l);
        let mut inputs = Vec::with_capacity(l);
        let mut predicted = Vec::with_capacity(l + 1);
        predicted.push(x);
        let mut xs = x;
        for j in 0..l {
            let uj = self.model.clamp_input(&Vec3::new(u[3 * j], u[3 * j + 1], u[3 * j + 2]));
            xs = self.model.predict(&xs, &uj);
            inputs.push(uj);
            predicted.push(xs);
        }
        Ok(ControlPacket {
            issue_slot: x0.time_index,
            inputs,
            predicted,
        })
    }
}

/// Minimizes `0.5 uᵀHu - gᵀu` over `|u_i| <= bound` by a primal active-set
/// method started from the clamped unconstrained minimizer `u_free`.
fn box_qp(h: &DMatrix<f64>, g: &DVector<f64>, u_free: &DVector<f64>, bound: f64) -> DVector<f64> {
    let n = g.len();
    let mut u = u_free.map(|v| v.clamp(-bound, bound));
    let mut fixed: Vec<bool> = (0..n).map(|i| u_free[i].abs() > bound).collect();
    for _ in 0..10 * n + 10 {
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let target = if free.is_empty() {
            None
        } else {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                g[i] - (0..n).filter(|&k| fixed[k]).map(|k| h[(i, k)] * u[k]).sum::<f64>()
            });
            Some(Cholesky::new(hff).expect("principal submatrix of a positive definite matrix").solve(&rhs))
        };
        if let Some(t) = target {
            // longest feasible step toward the subspace minimizer
            let mut alpha = 1.0;
            let mut block = None;
            for (a, &i) in free.iter().enumerate() {
                let d = t[a] - u[i];
                let limit = if d > 0.0 { bound } else { -bound };
                if t[a].abs() > bound && d != 0.0 {
                    let s = (limit - u[i]) / d;
                    if s < alpha {
                        alpha = s;
                        block = Some((i, limit));
                    }
                }
            }
            for (a, &i) in free.iter().enumerate() {
                u[i] += alpha * (t[a] - u[i]);
            }
            if let Some((i, limit)) = block {
                u[i] = limit;
                fixed[i] = true;
                continue;
            }
        }
        let grad = h * &u - g;
        let release = (0..n)
            .filter(|&i| fixed[i] && grad[i] * u[i].signum() > 1e-12)
            .max_by(|&a, &b| grad[a].abs().total_cmp(&grad[b].abs()));
        match release {
            Some(i) => fixed[i] = false,
            None => break,
        }
    }
    u
}

/// Tracking cost of an input sequence under the noiseless model, with
/// `reference[0]` at the current slot.
pub fn mpc_cost(model: &PlantModel, w: &MpcWeights, x0: &Vec6, reference: &[RefSample], u: &[Vec3]) -> f64 {
    let mut x = *x0;
    let mut cost = 0.0;
    for (j, uj) in u.iter().enumerate() {
        x = model.predict(&x, uj);
        let r = &reference[j + 1];
        let dp = x.fixed_rows::<3>(0) - r.position;
        let dv = x.fixed_rows::<3>(3) - r.velocity;
        cost += w.q_pos * dp.norm_squared() + w.q_vel * dv.norm_squared() + w.r_u * uj.norm_squared();
    }
    cost
}

/// One-shot solve; see [`MpcSolver`] for the cached variant.
pub fn solve_mpc(
    model: &PlantModel,
    x0: &UavState,
    reference: &[RefSample],
    weights: &MpcWeights,
    l: usize,
) -> Result<ControlPacket> {
    MpcSolver::new(model.clone(), *weights)?.solve(x0, reference, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{CovMatrix, SimRng};

    fn model(dt: f64, u_max: f64) -> PlantModel {
        PlantModel::double_integrator(dt, CovMatrix::zeros(), u_max, 100.0).unwrap()
    }

    fn line_ref(p0: Vec3, v: Vec3, dt: f64, n: usize) -> Vec<RefSample> {
        (0..n)
            .map(|k| RefSample {
                slot: k as u64,
                position: p0 + v * (k as f64 * dt),
                velocity: v,
            })
            .collect()
    }

    #[test]
    fn on_reference_gives_zero_input() {
        let m = model(0.1, 5.0);
        let v = Vec3::new(2.0, -1.0, 0.5);
        let r = line_ref(Vec3::new(1.0, 2.0, 3.0), v, 0.1, 12);
        let x0 = UavState {
            position: r[0].position,
            velocity: v,
            time_index: 0,
        };
        let pkt = solve_mpc(&m, &x0, &r, &MpcWeights::default(), 10).unwrap();
        assert_eq!(pkt.len(), 10);
        assert!(pkt.inputs.iter().all(|u| u.norm() <= 1e-9));
    }

    #[test]
    fn scalar_two_step_matches_grid_search() {
        let m = model(1.0, 1.0);
        let w = MpcWeights {
            q_pos: 1.0,
            q_vel: 0.5,
            r_u: 0.3,
            n_max: 5,
        };
        let r: Vec<RefSample> = [(0.0, 0.0), (0.4, 0.3), (0.9, 0.2)]
            .iter()
            .enumerate()
            .map(|(k, &(p, v))| RefSample {
                slot: k as u64,
                position: Vec3::new(p, 0.0, 0.0),
                velocity: Vec3::new(v, 0.0, 0.0),
            })
            .collect();
        let x0 = UavState::at_rest(Vec3::zeros(), 0);
        let pkt = solve_mpc(&m, &x0, &r, &w, 2).unwrap();
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -1000..=1000 {
            for j in -1000..=1000 {
                let u = [Vec3::new(i as f64 * 1e-3, 0.0, 0.0), Vec3::new(j as f64 * 1e-3, 0.0, 0.0)];
                let c = mpc_cost(&m, &w, &x0.to_vector(), &r, &u);
                if c < best.0 {
                    best = (c, u[0].x, u[1].x);
                }
            }
        }
        assert!((pkt.inputs[0].x - best.1).abs() <= 1e-3, "{} vs {}", pkt.inputs[0].x, best.1);
        assert!((pkt.inputs[1].x - best.2).abs() <= 1e-3);
    }

    #[test]
    fn first_order_optimality_and_input_weight() {
        let m = model(0.1, 1e6);
        let mut rng = SimRng::new(11, 0);
        for _ in 0..20 {
            let mut unif = || 4.0 * rng.uniform() - 2.0;
            let r = line_ref(Vec3::new(unif(), unif(), unif()), Vec3::new(unif(), unif(), unif()), 0.1, 9);
            let x0 = UavState {
                position: Vec3::new(unif(), unif(), unif()),
                velocity: Vec3::new(unif(), unif(), unif()),
                time_index: 0,
            };
            let w = MpcWeights::default();
            let pkt = solve_mpc(&m, &x0, &r, &w, 8).unwrap();
            let base = mpc_cost(&m, &w, &x0.to_vector(), &r, &pkt.inputs);
            for j in 0..8 {
                for a in 0..3 {
                    for s in [-1e-3, 1e-3] {
                        let mut u = pkt.inputs.clone();
                        u[j][a] += s;
                        assert!(mpc_cost(&m, &w, &x0.to_vector(), &r, &u) >= base);
                    }
                }
            }
            let heavy = MpcWeights { r_u: 2.0 * w.r_u, ..w };
            let pkt2 = solve_mpc(&m, &x0, &r, &heavy, 8).unwrap();
            let e = |p: &ControlPacket| p.inputs.iter().map(|u| u.norm_squared()).sum::<f64>();
            assert!(e(&pkt2) <= e(&pkt) * (1.0 + 1e-12));
        }
    }

    fn grid_best(m: &PlantModel, w: &MpcWeights, x0: &UavState, r: &[RefSample]) -> (f64, f64) {
        let steps = (m.u_max * 1000.0).round() as i64;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in -steps..=steps {
            for j in -steps..=steps {
                let u = [Vec3::new(i as f64 * 1e-3, 0.0, 0.0), Vec3::new(j as f64 * 1e-3, 0.0, 0.0)];
                let c = mpc_cost(m, w, &x0.to_vector(), r, &u);
                if c < best.0 {
                    best = (c, u[0].x, u[1].x);
                }
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn saturated_two_step_matches_grid_search() {
        // far behind the reference: the closed form wants more than u_max on
        // the first step and the second input must compensate for the clamp
        let m = model(1.0, 0.5);
        let w = MpcWeights {
            q_pos: 1.0,
            q_vel: 0.5,
            r_u: 0.1,
            n_max: 5,
        };
        let r: Vec<RefSample> = [(0.0, 0.0), (2.0, 1.0), (3.0, 1.0)]
            .iter()
            .enumerate()
            .map(|(k, &(p, v))| RefSample {
                slot: k as u64,
                position: Vec3::new(p, 0.0, 0.0),
                velocity: Vec3::new(v, 0.0, 0.0),
            })
            .collect();
        let x0 = UavState::at_rest(Vec3::zeros(), 0);
        let pkt = solve_mpc(&m, &x0, &r, &w, 2).unwrap();
        let (u0, u1) = grid_best(&m, &w, &x0, &r);
        assert!((pkt.inputs[0].x - u0).abs() <= 1e-3, "{} vs {u0}", pkt.inputs[0].x);
        assert!((pkt.inputs[1].x - u1).abs() <= 1e-3, "{} vs {u1}", pkt.inputs[1].x);
        assert_eq!(pkt.inputs[0].x, 0.5);
    }

    #[test]
    fn saturated_solutions_are_box_optimal() {
        let m = model(0.1, 1.0);
        let mut rng = SimRng::new(12, 0);
        let w = MpcWeights::default();
        for _ in 0..20 {
            let mut unif = || 20.0 * rng.uniform() - 10.0;
            let r = line_ref(Vec3::new(unif(), unif(), unif()), Vec3::new(unif(), unif(), unif()) * 0.3, 0.1, 13);
            let x0 = UavState::at_rest(Vec3::zeros(), 0);
            let pkt = solve_mpc(&m, &x0, &r, &w, 12).unwrap();
            assert!(pkt.inputs.iter().all(|u| u.amax() <= 1.0));
            let base = mpc_cost(&m, &w, &x0.to_vector(), &r, &pkt.inputs);
            for j in 0..12 {
                for a in 0..3 {
                    for s in [-1e-4, 1e-4] {
                        let mut u = pkt.inputs.clone();
                        u[j][a] = (u[j][a] + s).clamp(-1.0, 1.0);
                        assert!(mpc_cost(&m, &w, &x0.to_vector(), &r, &u) >= base - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn short_reference_is_rejected() {
        let m = model(0.1, 5.0);
        let r = line_ref(Vec3::zeros(), Vec3::zeros(), 0.1, 5);
        let x0 = UavState::at_rest(Vec3::zeros(), 0);
        assert!(solve_mpc(&m, &x0, &r, &MpcWeights::default(), 5).is_err());
        assert!(solve_mpc(&m, &x0, &r, &MpcWeights::default(), 4).is_ok());
    }
}
