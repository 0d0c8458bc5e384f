//! Discrete Riccati recursion and the continuous Riccati right-hand side.

use nalgebra::{DMatrix, DVector};

use super::{Innovation, Mat7, ObserverError};
use crate::geometry::Vec3;

/// Diagonal jitter added once when the innovation covariance fails to factor.
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// `P⁺ = A_d P A_dᵀ + S T`.
pub fn riccati_predict(p: &Mat7, a_d: &Mat7, s: &Mat7, period: f64) -> Mat7 {
    a_d * p * a_d.transpose() + s * period
}

/// Gain `K = P Cᵀ (C P Cᵀ + Q)⁻¹` and covariance `½((I − K C)P + ((I − K C)P)ᵀ)`.
///
/// The innovation covariance is factored with Cholesky, never inverted.
pub fn riccati_update(p: &Mat7, c: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<(DMatrix<f64>, Mat7), ObserverError> {
    let rows = c.nrows();
    assert_eq!(c.ncols(), 7, "output matrix must have 7 columns");
    assert_eq!(q.shape(), (rows, rows), "innovation weight shape mismatch");
    let p_dyn = DMatrix::from_column_slice(7, 7, p.as_slice());
    let pct = &p_dyn * c.transpose();
    let mut innovation_cov = c * &pct + q;
    innovation_cov = 0.5 * (&innovation_cov + innovation_cov.transpose());
    let chol = match innovation_cov.clone().cholesky() {
        Some(ch) => ch,
        None => {
            let jittered = innovation_cov + DMatrix::identity(rows, rows) * CHOLESKY_JITTER;
            jittered.cholesky().ok_or(ObserverError::SingularInnovation)?
        }
    };
    // K = P Cᵀ S⁻¹  ⇔  S Kᵀ = C P
    let gain = chol.solve(&pct.transpose()).transpose();
    let updated = (DMatrix::identity(7, 7) - &gain * c) * p_dyn;
    let mut p_new = Mat7::from_column_slice(updated.as_slice());
    p_new = 0.5 * (p_new + p_new.transpose());
    Ok((gain, p_new))
}

/// Row partition of `u = −K y` into `(δ_R, δ_v, δ_h)`.
pub fn innovation_from_gain(gain: &DMatrix<f64>, y: &DVector<f64>) -> Innovation {
    assert_eq!(gain.shape(), (7, y.len()), "gain and residual dimensions disagree");
    Innovation::from_correction(&(-(gain * y)))
}

impl Innovation {
    pub fn zero() -> Self {
        Self { delta_r: Vec3::zeros(), delta_v: Vec3::zeros(), delta_h: 0.0 }
    }

    pub fn from_correction(u: &DVector<f64>) -> Self {
        Self { delta_r: Vec3::new(u[0], u[1], u[2]), delta_v: Vec3::new(u[3], u[4], u[5]), delta_h: u[6] }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { delta_r: self.delta_r * k, delta_v: self.delta_v * k, delta_h: self.delta_h * k }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&[
            self.delta_r.x,
            self.delta_r.y,
            self.delta_r.z,
            self.delta_v.x,
            self.delta_v.y,
            self.delta_v.z,
            self.delta_h,
        ])
    }
}

/// `Ṗ = A P + P Aᵀ − P Cᵀ Q C P + S`.
pub fn cre_rhs(p: &Mat7, a: &Mat7, c: &DMatrix<f64>, q: &DMatrix<f64>, s: &Mat7) -> Mat7 {
    let p_dyn = DMatrix::from_column_slice(7, 7, p.as_slice());
    let info = &p_dyn * c.transpose() * q * c * &p_dyn;
    a * p + p * a.transpose() - Mat7::from_column_slice(info.as_slice()) + s
}
