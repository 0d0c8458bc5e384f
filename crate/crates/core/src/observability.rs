//! Observability of the true-trajectory error system: closed-form transition
//! blocks, the windowed Gramian and the two persistent-excitation margins.

use nalgebra::{DMatrix, Matrix2, SMatrix};
use thiserror::Error;

use crate::dynamics::{truth_state, DynamicsError, TrajectorySpec};
use crate::geometry::{skew, Vec3};
use crate::observer::linear::output_matrix;
use crate::observer::{Mat7, SensorSubset};
use crate::parallel::Execution;
use crate::sensors::{MagReference, ProbeSet};

/// Default quadrature step in seconds.
pub const DEFAULT_QUAD_STEP: f64 = 1e-3;
/// Default window length, about one yaw-rate period of the reference flight.
pub const DEFAULT_WINDOW: f64 = 4.0;
/// Eigenvalues below this fraction of `λ_max` count as zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

pub type Mat6 = SMatrix<f64, 6, 6>;
pub type Row6 = SMatrix<f64, 1, 6>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("window [{tau}, {t}] is empty or reversed")]
    InvalidWindow { tau: f64, t: f64 },
    #[error("quadrature step {step} must be positive and at most window/100 ({limit})")]
    InvalidStep { step: f64, limit: f64 },
    #[error("threshold {0} must be positive")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// `Φ*(t, τ)` in block form: `Φ₁₁` (6×6), `Φ₂₁` (1×6) and the unit `Φ₂₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBlocks {
    pub phi11: Mat6,
    pub phi21: Row6,
    pub t: f64,
    pub tau: f64,
}

impl TransitionBlocks {
    fn from_integrals(tau: f64, t: f64, i1: &Vec3, i2: &Vec3) -> Self {
        let mut phi11 = Mat6::identity();
        phi11.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-skew(i1)));
        let mut phi21 = Row6::zeros();
        // e₃ᵀ(−x^×) = (x₂, −x₁, 0)
        phi21[0] = i2.y;
        phi21[1] = -i2.x;
        phi21[5] = t - tau;
        Self { phi11, phi21, t, tau }
    }

    pub fn full(&self) -> Mat7 {
        let mut m = Mat7::zeros();
        m.fixed_view_mut::<6, 6>(0, 0).copy_from(&self.phi11);
        m.fixed_view_mut::<1, 6>(6, 0).copy_from(&self.phi21);
        m[(6, 6)] = 1.0;
        m
    }
}

/// Even number of subintervals of width at most `step` covering `[a, b]`.
fn grid(a: f64, b: f64, step: f64) -> (usize, f64) {
    let mut n = ((b - a) / step - 1e-9).ceil().max(2.0) as usize;
    if n % 2 == 1 {
        n += 1;
    }
    (n, (b - a) / n as f64)
}

/// Running integral of samples on a uniform grid: composite Simpson at even
/// nodes, plus the three-point interval rule `h/12·(−f₀ + 8f₁ + 5f₂)` for the
/// odd node that follows.
fn cumulative(f: &[Vec3], h: f64) -> Vec<Vec3> {
    let n = f.len() - 1;
    let mut out = vec![Vec3::zeros(); f.len()];
    let mut k = 0;
    while k < n {
        if k + 2 <= n {
            out[k + 1] = out[k] + (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]) * (h / 12.0);
            out[k + 2] = out[k] + (f[k] + 4.0 * f[k + 1] + f[k + 2]) * (h / 3.0);
            k += 2;
        } else {
            out[k + 1] = out[k] + (-f[k - 1] + 8.0 * f[k] + 5.0 * f[k + 1]) * (h / 12.0);
            k += 1;
        }
    }
    out
}

fn simpson_weight(k: usize, n: usize, h: f64) -> f64 {
    let w = if k == 0 || k == n {
        1.0
    } else if k % 2 == 1 {
        4.0
    } else {
        2.0
    };
    w * h / 3.0
}

/// Samples of the window `[tau, t]`: times, `R a`, and the single and double
/// integrals of `R a` from `tau`.
struct WindowSamples {
    times: Vec<f64>,
    h: f64,
    i1: Vec<Vec3>,
    i2: Vec<Vec3>,
}

fn window_samples(spec: &TrajectorySpec, tau: f64, t: f64, step: f64) -> Result<WindowSamples, ObservabilityError> {
    let (n, h) = grid(tau, t, step);
    let times: Vec<f64> = (0..=n).map(|k| if k == n { t } else { tau + k as f64 * h }).collect();
    for &s in [tau, t].iter() {
        truth_state(spec, s)?;
    }
    let force: Vec<Vec3> = times.iter().map(|&s| spec.inertial_specific_force(s)).collect();
    let i1 = cumulative(&force, h);
    let i2 = cumulative(&i1, h);
    Ok(WindowSamples { times, h, i1, i2 })
}

/// Closed-form `Φ*(t, τ)` blocks with quadrature of `R(s)a(s)`.
pub fn phi_blocks(spec: &TrajectorySpec, t: f64, tau: f64) -> Result<TransitionBlocks, ObservabilityError> {
    if t < tau || !t.is_finite() || !tau.is_finite() {
        return Err(ObservabilityError::InvalidWindow { tau, t });
    }
    if t == tau {
        truth_state(spec, t)?;
        return Ok(TransitionBlocks::from_integrals(tau, t, &Vec3::zeros(), &Vec3::zeros()));
    }
    let w = window_samples(spec, tau, t, DEFAULT_QUAD_STEP.min((t - tau) / 2.0))?;
    Ok(TransitionBlocks::from_integrals(tau, t, w.i1.last().unwrap(), w.i2.last().unwrap()))
}

fn check_window(t: f64, delta: f64, step: f64) -> Result<(), ObservabilityError> {
    if !(delta > 0.0) || !t.is_finite() {
        return Err(ObservabilityError::InvalidWindow { tau: t, t: t + delta });
    }
    let limit = delta / 100.0;
    if !(step > 0.0 && step <= limit * (1.0 + 1e-12)) {
        return Err(ObservabilityError::InvalidStep { step, limit });
    }
    Ok(())
}

/// `W(t, t+δ)` restricted to the output rows of `subset`.
pub fn gramian_subset(
    spec: &TrajectorySpec,
    probes: &ProbeSet,
    mag_ref: &MagReference,
    subset: SensorSubset,
    t: f64,
    delta: f64,
    quad_step: f64,
) -> Result<Mat7, ObservabilityError> {
    check_window(t, delta, quad_step)?;
    let w = window_samples(spec, t, t + delta, quad_step)?;
    let n = w.times.len() - 1;
    let mut acc = Mat7::zeros();
    for (k, &s) in w.times.iter().enumerate() {
        let truth = truth_state(spec, s)?;
        let c = output_matrix(&truth.r, &truth.va, probes, mag_ref, subset);
        let phi = TransitionBlocks::from_integrals(t, s, &w.i1[k], &w.i2[k]).full();
        let phi_dyn = DMatrix::from_column_slice(7, 7, phi.as_slice());
        let cphi = c * phi_dyn;
        let g = cphi.transpose() * &cphi;
        acc += Mat7::from_column_slice(g.as_slice()) * simpson_weight(k, n, w.h);
    }
    let acc = acc / delta;
    Ok(0.5 * (acc + acc.transpose()))
}

/// `W(t, t+δ) = (1/δ)∫ Φ*ᵀ C*ᵀ C* Φ* ds` with every aiding sensor.
pub fn gramian(
    spec: &TrajectorySpec,
    probes: &ProbeSet,
    mag_ref: &MagReference,
    t: f64,
    delta: f64,
    quad_step: f64,
) -> Result<Mat7, ObservabilityError> {
    gramian_subset(spec, probes, mag_ref, SensorSubset::ALL, t, delta, quad_step)
}

/// `(μ_Π, μ_aπ)`: smallest eigenvalues of the windowed means of `ΠᵀΠ` and
/// `a_πᵀa_π`, with `Π = BᵀRJ` and `a_π = e₃ᵀ(Ra)^×J`.
pub fn pe_margins(
    spec: &TrajectorySpec,
    probes: &ProbeSet,
    t: f64,
    delta: f64,
    quad_step: f64,
) -> Result<(f64, f64), ObservabilityError> {
    check_window(t, delta, quad_step)?;
    let (n, h) = grid(t, t + delta, quad_step);
    let b = probes.matrix();
    let mut acc_pi = Matrix2::zeros();
    let mut acc_a = Matrix2::zeros();
    for k in 0..=n {
        let s = if k == n { t + delta } else { t + k as f64 * h };
        let truth = truth_state(spec, s)?;
        let rj = truth.r.matrix().fixed_columns::<2>(0).into_owned();
        let rj_dyn = DMatrix::from_column_slice(3, 2, rj.as_slice());
        let pi = b.transpose() * rj_dyn;
        let ptp = pi.transpose() * &pi;
        let a_pi = (Vec3::z().transpose() * skew(&spec.inertial_specific_force(s))) * rj;
        let wk = simpson_weight(k, n, h);
        acc_pi += Matrix2::from_column_slice(ptp.as_slice()) * wk;
        acc_a += a_pi.transpose() * a_pi * wk;
    }
    let min_eig = |m: Matrix2<f64>| {
        let m = 0.5 * (m + m.transpose()) / delta;
        m.symmetric_eigenvalues().min()
    };
    Ok((min_eig(acc_pi), min_eig(acc_a)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianReport {
    pub t_start: f64,
    pub delta: f64,
    pub w: Mat7,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub mu_pi: f64,
    pub mu_api: f64,
    /// `λ_min(W) ≥ threshold` for this window.
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilitySweep {
    pub windows: Vec<GramianReport>,
    pub threshold: f64,
    pub verdict: bool,
}

impl ObservabilitySweep {
    pub fn min_lambda(&self) -> f64 {
        self.windows.iter().map(|w| w.lambda_min).fold(f64::INFINITY, f64::min)
    }
}

pub fn window_report(
    spec: &TrajectorySpec,
    probes: &ProbeSet,
    mag_ref: &MagReference,
    t: f64,
    delta: f64,
    quad_step: f64,
    threshold: f64,
) -> Result<GramianReport, ObservabilityError> {
    let w = gramian(spec, probes, mag_ref, t, delta, quad_step)?;
    let eig = w.symmetric_eigenvalues();
    let (mu_pi, mu_api) = pe_margins(spec, probes, t, delta, quad_step)?;
    let lambda_min = eig.min();
    Ok(GramianReport {
        t_start: t,
        delta,
        w,
        lambda_min,
        lambda_max: eig.max(),
        mu_pi,
        mu_api,
        verdict: lambda_min >= threshold,
    })
}

/// Window starts `0, δ/2, δ, …` with the whole window inside the trajectory.
pub fn window_starts(duration: f64, delta: f64) -> Vec<f64> {
    let hop = delta / 2.0;
    let count = ((duration - delta) / hop + 1e-9).floor();
    if count < 0.0 {
        return Vec::new();
    }
    (0..=count as usize).map(|k| k as f64 * hop).collect()
}

/// Evaluates every window and reports whether all of them clear `threshold`.
pub fn observability_verdict(
    spec: &TrajectorySpec,
    probes: &ProbeSet,
    mag_ref: &MagReference,
    delta: f64,
    quad_step: f64,
    threshold: f64,
    execution: Execution,
) -> Result<ObservabilitySweep, ObservabilityError> {
    if !(threshold > 0.0) {
        return Err(ObservabilityError::InvalidThreshold(threshold));
    }
    check_window(0.0, delta, quad_step)?;
    let starts = window_starts(spec.duration, delta);
    if starts.is_empty() {
        return Err(ObservabilityError::InvalidWindow { tau: 0.0, t: delta });
    }
    let windows = execution
        .map(&starts, |&t| window_report(spec, probes, mag_ref, t, delta, quad_step, threshold))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let verdict = windows.iter().all(|w| w.verdict);
    Ok(ObservabilitySweep { windows, threshold, verdict })
}

/// Number of eigenvalues above `RANK_THRESHOLD · λ_max`.
pub fn numeric_rank(w: &Mat7) -> usize {
    let eig = w.symmetric_eigenvalues();
    let max = eig.max();
    if max <= 0.0 {
        return 0;
    }
    eig.iter().filter(|&&l| l > RANK_THRESHOLD * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::STANDARD_GRAVITY;
    use crate::geometry::Mat3;
    use approx::assert_relative_eq;

    fn reference() -> TrajectorySpec {
        TrajectorySpec::reference(60.0)
    }

    #[test]
    fn identity_at_equal_times() {
        let b = phi_blocks(&reference(), 3.0, 3.0).unwrap();
        assert_eq!(b.phi11, Mat6::identity());
        assert_eq!(b.phi21, Row6::zeros());
        assert_eq!(b.full(), Mat7::identity());
        assert!(phi_blocks(&reference(), 2.0, 3.0).is_err());
    }

    #[test]
    fn hover_blocks_are_analytic() {
        let spec = TrajectorySpec::hover(20.0);
        let (tau, t) = (1.0, 3.5);
        let b = phi_blocks(&spec, t, tau).unwrap();
        let d = t - tau;
        let ge3 = Vec3::new(0.0, 0.0, -STANDARD_GRAVITY);
        let lower = -skew(&ge3) * d;
        assert_relative_eq!(b.phi11.fixed_view::<3, 3>(3, 0).into_owned(), lower, max_relative = 1e-12);
        assert_relative_eq!(b.phi11.fixed_view::<3, 3>(0, 0).into_owned(), Mat3::identity());
        let expected: Row6 = Row6::from_row_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, d]);
        assert_relative_eq!(b.phi21, expected, epsilon = 1e-12);
    }

    #[test]
    fn phi_lower_left_matches_closed_form_integral() {
        // ∫ R a = v(t) − v(τ) − g(t − τ) e₃ for the reference flight
        let spec = reference();
        let (tau, t) = (2.0, 5.7);
        let b = phi_blocks(&spec, t, tau).unwrap();
        let v = |s: f64| truth_state(&spec, s).unwrap().v;
        let integral = v(t) - v(tau) - Vec3::z() * STANDARD_GRAVITY * (t - tau);
        assert_relative_eq!(b.phi11.fixed_view::<3, 3>(3, 0).into_owned(), -skew(&integral), max_relative = 1e-10);
    }

    #[test]
    fn window_and_step_validation() {
        let spec = reference();
        let (p, m) = (ProbeSet::forward(), MagReference::reference());
        assert!(matches!(gramian(&spec, &p, &m, 0.0, 4.0, 0.1), Err(ObservabilityError::InvalidStep { .. })));
        assert!(matches!(gramian(&spec, &p, &m, 0.0, 0.0, 1e-3), Err(ObservabilityError::InvalidWindow { .. })));
        assert!(matches!(gramian(&spec, &p, &m, 58.0, 4.0, 1e-3), Err(ObservabilityError::Dynamics(_))));
    }

    #[test]
    fn no_sensing_gives_zero() {
        let none = SensorSubset { pitot: false, mag: false, baro: false };
        let w = gramian_subset(&reference(), &ProbeSet::forward(), &MagReference::reference(), none, 0.0, 4.0, 1e-3)
            .unwrap();
        assert_eq!(w, Mat7::zeros());
    }

    #[test]
    fn hover_baro_only_is_rank_deficient() {
        let spec = TrajectorySpec::hover(10.0);
        let w =
            gramian_subset(&spec, &ProbeSet::forward(), &MagReference::reference(), SensorSubset::BARO, 0.0, 4.0, 1e-3)
                .unwrap();
        assert!(numeric_rank(&w) <= 3, "rank {}", numeric_rank(&w));
        assert!(w.symmetric_eigenvalues().min() >= -1e-10);
    }

    #[test]
    fn reference_flight_is_observable() {
        let spec = reference();
        let w = gramian(&spec, &ProbeSet::forward(), &MagReference::reference(), 0.0, 4.0, 1e-3).unwrap();
        assert_relative_eq!(w, w.transpose());
        assert!(w.symmetric_eigenvalues().min() > 0.0);
        let (mu_pi, mu_api) = pe_margins(&spec, &ProbeSet::forward(), 0.0, 4.0, 1e-3).unwrap();
        assert!(mu_pi > 0.0 && mu_api > 0.0, "{mu_pi} {mu_api}");
    }

    #[test]
    fn hover_single_probe_margins_vanish() {
        let spec = TrajectorySpec::hover(10.0);
        let (mu_pi, mu_api) = pe_margins(&spec, &ProbeSet::forward(), 0.0, 4.0, 1e-3).unwrap();
        assert!(mu_pi.abs() <= 1e-12 && mu_api.abs() <= 1e-12, "{mu_pi} {mu_api}");
        let sweep = observability_verdict(
            &spec,
            &ProbeSet::forward(),
            &MagReference::reference(),
            4.0,
            1e-3,
            1e-6,
            Execution::Sequential,
        )
        .unwrap();
        assert!(!sweep.verdict);
    }

    #[test]
    fn static_two_probes_margin() {
        let spec = TrajectorySpec::hover(10.0);
        let probes = ProbeSet::new(vec![Vec3::x(), Vec3::y()]).unwrap();
        let (mu_pi, _) = pe_margins(&spec, &probes, 0.0, 4.0, 1e-3).unwrap();
        assert_relative_eq!(mu_pi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn adding_sensors_never_lowers_lambda_min() {
        let (p, m) = (ProbeSet::forward(), MagReference::reference());
        for spec in [reference(), TrajectorySpec::hover(10.0)] {
            let lam = |s: SensorSubset| {
                gramian_subset(&spec, &p, &m, s, 0.0, 4.0, 1e-3).unwrap().symmetric_eigenvalues().min()
            };
            let mb = SensorSubset { pitot: false, mag: true, baro: true };
            assert!(lam(SensorSubset::BARO) <= lam(mb) + 1e-12);
            assert!(lam(mb) <= lam(SensorSubset::ALL) + 1e-12);
        }
    }

    #[test]
    fn collinear_magnetic_field_degrades_observability() {
        let spec = reference();
        let p = ProbeSet::forward();
        let good =
            gramian(&spec, &p, &MagReference::reference(), 0.0, 4.0, 1e-3).unwrap().symmetric_eigenvalues().min();
        let vertical = MagReference::new_allow_collinear(Vec3::z()).unwrap();
        let bad = gramian(&spec, &p, &vertical, 0.0, 4.0, 1e-3).unwrap().symmetric_eigenvalues().min();
        assert!(bad < good, "collinear {bad} vs {good}");
    }

    #[test]
    fn window_start_grid() {
        let s = window_starts(60.0, 4.0);
        assert_eq!(s.len(), 29);
        assert_eq!(s[0], 0.0);
        assert_eq!(*s.last().unwrap(), 56.0);
        assert!(window_starts(3.0, 4.0).is_empty());
    }

    #[test]
    fn sweep_modes_agree() {
        let spec = TrajectorySpec::reference(12.0);
        let (p, m) = (ProbeSet::forward(), MagReference::reference());
        let a = observability_verdict(&spec, &p, &m, 4.0, 1e-3, 1e-6, Execution::Sequential).unwrap();
        let b = observability_verdict(&spec, &p, &m, 4.0, 1e-3, 1e-6, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.verdict);
    }
}
