use nalgebra::{Matrix3, Matrix6, SymmetricEigen};

use crate::error::{invalid, Result};

pub type Mat6 = Matrix6<f64>;

const SYMMETRY_RTOL: f64 = 1e-9;
const PSD_RTOL: f64 = 1e-9;

/// Error covariance over (position, velocity): units m², m²/s, m²/s².
///
/// Invariants: symmetric within `1e-9` relative to the largest entry, and
/// every eigenvalue `>= -1e-9 * trace`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix(Mat6);

fn asymmetry(m: &Mat6) -> (f64, f64) {
    let scale = m.amax();
    let mut worst = 0.0_f64;
    for i in 0..6 {
        for j in (i + 1)..6 {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    (worst, scale)
}

fn check_symmetric(m: &Mat6) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("covariance entries must be finite"));
    }
    let (worst, scale) = asymmetry(m);
    if worst > SYMMETRY_RTOL * scale.max(f64::MIN_POSITIVE) {
        return Err(invalid(format!(
            "matrix not symmetric: max |m_ij - m_ji| = {worst:e} (scale {scale:e})"
        )));
    }
    Ok(())
}

fn symmetrize(m: &Mat6) -> Mat6 {
    (m + m.transpose()) * 0.5
}

impl CovMatrix {
    /// Validates symmetry and positive semidefiniteness without repairing.
    pub fn new(m: Mat6) -> Result<Self> {
        check_symmetric(&m)?;
        let sym = symmetrize(&m);
        let lambda_min = SymmetricEigen::new(sym).eigenvalues.min();
        let trace = sym.trace();
        if lambda_min < -PSD_RTOL * trace.max(0.0) {
            return Err(invalid(format!(
                "matrix not positive semidefinite: min eigenvalue {lambda_min:e}"
            )));
        }
        Ok(Self(sym))
    }

    pub fn zeros() -> Self {
        Self(Mat6::zeros())
    }

    pub fn identity() -> Self {
        Self(Mat6::identity())
    }

    /// Block-diagonal covariance with isotropic position and velocity variances.
    pub fn isotropic(pos_var: f64, vel_var: f64) -> Result<Self> {
        if !(pos_var >= 0.0 && vel_var >= 0.0) {
            return Err(invalid("variances must be >= 0"));
        }
        let d = nalgebra::Vector6::new(pos_var, pos_var, pos_var, vel_var, vel_var, vel_var);
        Ok(Self(Mat6::from_diagonal(&d)))
    }

    pub fn matrix(&self) -> &Mat6 {
        &self.0
    }

    pub fn position_block(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn position_trace(&self) -> f64 {
        self.0[(0, 0)] + self.0[(1, 1)] + self.0[(2, 2)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0 * c.max(0.0))
    }
}

/// Nearest PSD matrix: symmetrize, then clip negative eigenvalues to zero.
///
/// Matrices that are already PSD (up to rounding at `64 ε · max|λ|`) come
/// back as their symmetrized selves, which makes the projection exactly
/// idempotent.
pub fn mat_psd_project(m: &Mat6) -> Result<CovMatrix> {
    check_symmetric(m)?;
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax();
    let tol = 64.0 * f64::EPSILON * scale;
    if eig.eigenvalues.iter().all(|&l| l >= -tol) {
        return Ok(CovMatrix(sym));
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let rebuilt = v * Mat6::from_diagonal(&clipped) * v.transpose();
    Ok(CovMatrix(symmetrize(&rebuilt)))
}

/// `kappa * sqrt(λ_max)` of the position block, in meters.
pub fn confidence_radius(sigma: &CovMatrix, kappa: f64) -> f64 {
    let lambda_max = SymmetricEigen::new(sigma.position_block()).eigenvalues.max();
    kappa.max(0.0) * lambda_max.max(0.0).sqrt()
}
