//! The LTV error model: state matrices, output matrices and stacked residuals.

use nalgebra::{DMatrix, DVector};

use super::{Mat7, ObserverError, ObserverState, SensorSubset};
use crate::geometry::{skew, RotationMatrix, Vec3};
use crate::sensors::{MagReference, ProbeSet, TickMeasurements};

/// Continuous-time `A(R̂)`: `−(R̂a)^×` in rows 4–6 / cols 1–3 and `e₃ᵀ` in
/// row 7 / cols 4–6.
pub fn state_matrix_ct(r_hat: &RotationMatrix, a: &Vec3) -> Mat7 {
    let mut m = Mat7::zeros();
    let force = r_hat * a;
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-skew(&force)));
    m[(6, 5)] = 1.0;
    m
}

/// First-order discretization `A_d = I₇ + T·A`.
pub fn state_matrix_dt(r_hat: &RotationMatrix, a: &Vec3, period: f64) -> Mat7 {
    Mat7::identity() + state_matrix_ct(r_hat, a) * period
}

/// Output matrix rows for the requested sensors, stacked Pitot, Mag, Baro.
pub fn output_matrix(
    r_hat: &RotationMatrix,
    va_hat: &Vec3,
    probes: &ProbeSet,
    mag_ref: &MagReference,
    subset: SensorSubset,
) -> DMatrix<f64> {
    let rows = subset.rows(probes.len());
    let mut c = DMatrix::zeros(rows, 7);
    let mut row = 0;
    if subset.pitot {
        let rt = r_hat.matrix().transpose();
        let attitude_block = rt * skew(&(r_hat * va_hat));
        for b in probes.axes() {
            let bt_rt = b.transpose() * rt;
            let bt_att = b.transpose() * attitude_block;
            for j in 0..3 {
                c[(row, j)] = bt_att[j];
                c[(row, 3 + j)] = bt_rt[j];
            }
            row += 1;
        }
    }
    if subset.mag {
        let block = -skew(mag_ref.vector());
        c.view_mut((row, 0), (3, 3)).copy_from(&block);
        row += 3;
    }
    if subset.baro {
        c[(row, 6)] = 1.0;
    }
    c
}

/// Stacked output errors `y_p − Bᵀ V̂_a`, `m_ℐ − R̂ m_ℬ`, `y_b − ĥ`.
pub fn residual(
    meas: &TickMeasurements,
    est: &ObserverState,
    probes: &ProbeSet,
    mag_ref: &MagReference,
    subset: SensorSubset,
) -> Result<DVector<f64>, ObserverError> {
    let mut y = Vec::with_capacity(subset.rows(probes.len()));
    if subset.pitot {
        let yp = meas.pitot.as_ref().ok_or(ObserverError::MissingPayload("Pitot"))?;
        if yp.len() != probes.len() {
            return Err(ObserverError::MissingPayload("Pitot (wrong probe count)"));
        }
        let predicted = probes.project(&est.va_hat);
        y.extend((yp - predicted).iter());
    }
    if subset.mag {
        let mb = meas.mag.as_ref().ok_or(ObserverError::MissingPayload("magnetometer"))?;
        let r = mag_ref.vector() - est.r_hat * *mb;
        y.extend(r.iter());
    }
    if subset.baro {
        let yb = meas.baro.ok_or(ObserverError::MissingPayload("barometer"))?;
        y.push(yb - est.h_hat);
    }
    Ok(DVector::from_vec(y))
}
