//! Riccati observer on SO(3) ⋉ ℝ³ × ℝ for attitude, body air velocity and
//! altitude.
//!
//! [`observer_tick`] is the discrete production path: covariance prediction,
//! measurement update for whatever aiding sensors landed on the tick, then
//! exponential-Euler integration of the estimates. The correction `u = −K y`
//! is a whole Kalman increment, so it enters the integration as the rate
//! `u/T` over one period. [`cre_rhs`] is the
//! continuous Riccati right-hand side used for validation.

pub mod linear;
pub mod riccati;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use thiserror::Error;

pub use linear::{output_matrix, residual, state_matrix_ct, state_matrix_dt};
pub use riccati::{cre_rhs, innovation_from_gain, riccati_predict, riccati_update, CHOLESKY_JITTER};

use crate::dynamics::NavState;
use crate::geometry::{exp_so3, skew, Mat3, RotationMatrix, Vec3};
use crate::sensors::{MagReference, ProbeSet, TickMeasurements};

pub type Mat7 = SMatrix<f64, 7, 7>;
pub type Vec7 = SVector<f64, 7>;

/// A state component beyond this magnitude counts as divergence.
pub const DIVERGENCE_STATE_LIMIT: f64 = 1e9;
/// A covariance trace beyond this counts as divergence.
pub const DIVERGENCE_TRACE_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("missing {0} payload for the requested update")]
    MissingPayload(&'static str),
    #[error("observer diverged: {0}")]
    Diverged(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// Estimates `(R̂, V̂_a, ĥ)` and the Riccati matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub r_hat: RotationMatrix,
    pub va_hat: Vec3,
    pub h_hat: f64,
    pub p: Mat7,
}

impl ObserverState {
    /// Estimates equal to the truth with `P = I₇`.
    pub fn from_truth(truth: &NavState) -> Self {
        Self { r_hat: truth.r, va_hat: truth.va, h_hat: truth.h, p: Mat7::identity() }
    }

    fn check_finite(&self) -> Result<(), ObserverError> {
        let state_ok = self
            .va_hat
            .iter()
            .chain(std::iter::once(&self.h_hat))
            .chain(self.r_hat.matrix().iter())
            .all(|x| x.is_finite() && x.abs() <= DIVERGENCE_STATE_LIMIT);
        if !state_ok {
            return Err(ObserverError::Diverged("state component out of range".into()));
        }
        let trace = self.p.trace();
        if !trace.is_finite() || trace > DIVERGENCE_TRACE_LIMIT {
            return Err(ObserverError::Diverged(format!("trace(P) = {trace:e}")));
        }
        Ok(())
    }
}

/// How the configured measurement weights enter the discrete gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QConvention {
    /// Weights are precisions; the innovation term is their inverse.
    Precision,
    /// Weights are the innovation covariance itself.
    #[default]
    Covariance,
}

impl FromStr for QConvention {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "precision" => Ok(Self::Precision),
            "covariance" => Ok(Self::Covariance),
            other => Err(format!("unknown q_convention `{other}` (expected precision | covariance)")),
        }
    }
}

impl fmt::Display for QConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Precision => "precision",
            Self::Covariance => "covariance",
        })
    }
}

/// Measurement weights `Q_p, Q_m, Q_b`, process weight `S` and `P(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiWeights {
    pub q_pitot: DMatrix<f64>,
    pub q_mag: Mat3,
    pub q_baro: f64,
    pub s: Mat7,
    pub p0: Mat7,
}

fn check_spd(name: &str, m: &DMatrix<f64>) -> Result<(), ObserverError> {
    let asym = (m - m.transpose()).norm();
    if asym > 1e-9 * (1.0 + m.norm()) {
        return Err(ObserverError::InvalidWeights(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(ObserverError::InvalidWeights(format!("{name} is not positive definite")));
    }
    Ok(())
}

fn to_dyn<const N: usize>(m: &SMatrix<f64, N, N>) -> DMatrix<f64> {
    DMatrix::from_column_slice(N, N, m.as_slice())
}

impl RiccatiWeights {
    pub fn new(q_pitot: DMatrix<f64>, q_mag: Mat3, q_baro: f64, s: Mat7, p0: Mat7) -> Result<Self, ObserverError> {
        check_spd("Q_p", &q_pitot)?;
        check_spd("Q_m", &to_dyn(&q_mag))?;
        if !(q_baro > 0.0) {
            return Err(ObserverError::InvalidWeights("Q_b must be > 0".into()));
        }
        check_spd("S", &to_dyn(&s))?;
        check_spd("P0", &to_dyn(&p0))?;
        Ok(Self { q_pitot, q_mag, q_baro, s, p0 })
    }

    /// `Q = 100·blkdiag(σ_p², σ_m², σ_b²)` with the reference noise levels,
    /// `S = blkdiag(0.01 I₃, 0.1 I₃, 0.01)`, `P(0) = blkdiag(0.1 I₃, 0.25 I₃, 1)`.
    pub fn reference(probes: usize) -> Self {
        let scale = 100.0;
        Self {
            q_pitot: DMatrix::identity(probes, probes) * (scale * 0.5 * 0.5),
            q_mag: Mat3::identity() * (scale * 0.01 * 0.01),
            q_baro: scale * 0.05 * 0.05,
            s: Mat7::from_diagonal(&Vec7::from_column_slice(&[0.01, 0.01, 0.01, 0.1, 0.1, 0.1, 0.01])),
            p0: Mat7::from_diagonal(&Vec7::from_column_slice(&[0.1, 0.1, 0.1, 0.25, 0.25, 0.25, 1.0])),
        }
    }

    /// Innovation-covariance block for the given sensors, in stacking order.
    pub fn innovation_weight(&self, subset: SensorSubset, convention: QConvention) -> DMatrix<f64> {
        let m = self.q_pitot.nrows();
        let n = subset.rows(m);
        let mut q = DMatrix::zeros(n, n);
        let mut at = 0;
        let mut place = |block: DMatrix<f64>| {
            let k = block.nrows();
            let block = match convention {
                QConvention::Covariance => block,
                QConvention::Precision => block.try_inverse().expect("validated SPD weight"),
            };
            q.view_mut((at, at), (k, k)).copy_from(&block);
            at += k;
        };
        if subset.pitot {
            place(self.q_pitot.clone());
        }
        if subset.mag {
            place(to_dyn(&self.q_mag));
        }
        if subset.baro {
            place(DMatrix::from_element(1, 1, self.q_baro));
        }
        q
    }
}

/// Which aiding sensors contribute rows to an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SensorSubset {
    pub pitot: bool,
    pub mag: bool,
    pub baro: bool,
}

impl SensorSubset {
    pub const PITOT: Self = Self { pitot: true, mag: false, baro: false };
    pub const MAG: Self = Self { pitot: false, mag: true, baro: false };
    pub const BARO: Self = Self { pitot: false, mag: false, baro: true };
    pub const ALL: Self = Self { pitot: true, mag: true, baro: true };

    pub fn of(meas: &TickMeasurements) -> Self {
        Self { pitot: meas.pitot.is_some(), mag: meas.mag.is_some(), baro: meas.baro.is_some() }
    }

    pub fn is_empty(&self) -> bool {
        !(self.pitot || self.mag || self.baro)
    }

    pub fn is_all(&self) -> bool {
        self.pitot && self.mag && self.baro
    }

    pub fn rows(&self, probes: usize) -> usize {
        probes * self.pitot as usize + 3 * self.mag as usize + self.baro as usize
    }
}

/// Innovation terms `(δ_R, δ_v, δ_h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub delta_r: Vec3,
    pub delta_v: Vec3,
    pub delta_h: f64,
}

/// Stacked residual, output matrix and innovation weight for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputStack {
    pub y: DVector<f64>,
    pub c: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

/// Immutable configuration shared by every tick of a run.
#[derive(Debug, Clone)]
pub struct ObserverModel {
    pub weights: RiccatiWeights,
    pub probes: ProbeSet,
    pub mag_ref: MagReference,
    pub gravity: f64,
    pub period: f64,
    pub q_convention: QConvention,
}

impl ObserverModel {
    pub fn output_stack(
        &self,
        meas: &TickMeasurements,
        est: &ObserverState,
        subset: SensorSubset,
    ) -> Result<OutputStack, ObserverError> {
        Ok(OutputStack {
            y: residual(meas, est, &self.probes, &self.mag_ref, subset)?,
            c: output_matrix(&est.r_hat, &est.va_hat, &self.probes, &self.mag_ref, subset),
            q: self.weights.innovation_weight(subset, self.q_convention),
        })
    }
}

/// Exponential-Euler / Euler integration of the estimates over one period.
/// `P` is carried over unchanged.
pub fn observer_step_state(
    est: &ObserverState,
    omega: &Vec3,
    a: &Vec3,
    gravity: f64,
    innov: &Innovation,
    period: f64,
) -> ObserverState {
    let r = est.r_hat;
    let rt = r.matrix().transpose();
    let rotation_rate = omega - rt * innov.delta_r;
    let r_next = (r * exp_so3(&(rotation_rate * period))).renormalized();
    let zeta1 = -omega.cross(&est.va_hat) + gravity * rt * Vec3::z() + a;
    let zeta2 = -rt * innov.delta_v + rt * skew(&innov.delta_r) * (r * est.va_hat);
    let va_next = est.va_hat + period * (zeta1 + zeta2);
    let h_next = est.h_hat + period * ((r * est.va_hat).z - innov.delta_h);
    ObserverState { r_hat: r_next, va_hat: va_next, h_hat: h_next, p: est.p }
}

/// Runs the measurement update for the aiding sensors present on the tick
/// and returns the innovation and posterior covariance.
///
/// With Pitot, magnetometer and barometer all present a single stacked
/// update is made. Otherwise the available sensors are processed one after
/// another in the order barometer, magnetometer, Pitot, each later residual
/// being corrected by the error estimate accumulated so far. For
/// block-diagonal weights both routes give the same posterior.
pub fn measurement_update(
    est: &ObserverState,
    p_prior: &Mat7,
    meas: &TickMeasurements,
    model: &ObserverModel,
) -> Result<(Innovation, Mat7), ObserverError> {
    let available = SensorSubset::of(meas);
    if available.is_empty() {
        return Ok((Innovation::zero(), *p_prior));
    }
    let stages: Vec<SensorSubset> = if available.is_all() {
        vec![SensorSubset::ALL]
    } else {
        [SensorSubset::BARO, SensorSubset::MAG, SensorSubset::PITOT]
            .into_iter()
            .filter(|s| (s.baro && available.baro) || (s.mag && available.mag) || (s.pitot && available.pitot))
            .collect()
    };
    let mut p = *p_prior;
    let mut x_hat = DVector::<f64>::zeros(7);
    for subset in stages {
        let stack = model.output_stack(meas, est, subset)?;
        let (gain, p_next) = riccati_update(&p, &stack.c, &stack.q)?;
        let corrected = &stack.y - &stack.c * &x_hat;
        x_hat += &gain * corrected;
        p = p_next;
    }
    Ok((Innovation::from_correction(&(-x_hat)), p))
}

/// One IMU period: predict `P`, update with the tick's aiding measurements,
/// then integrate the estimates with the innovation rate `u/T`.
pub fn observer_tick(
    est: &ObserverState,
    meas: &TickMeasurements,
    model: &ObserverModel,
) -> Result<ObserverState, ObserverError> {
    let t = model.period;
    let a_d = state_matrix_dt(&est.r_hat, &meas.imu.a, t);
    let p_prior = riccati_predict(&est.p, &a_d, &model.weights.s, t);
    let (innov, p_post) = measurement_update(est, &p_prior, meas, model)?;
    // u = −K y is a full Kalman increment; spread it over the period as a rate.
    let rate = innov.scaled(1.0 / t);
    let mut next = observer_step_state(est, &meas.imu.omega, &meas.imu.a, model.gravity, &rate, t);
    next.p = 0.5 * (p_post + p_post.transpose());
    next.check_finite()?;
    Ok(next)
}
