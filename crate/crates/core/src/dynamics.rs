//! Ground-truth vehicle model: rigid-body kinematics, closed-form reference
//! trajectories, an RK4 propagator and error-state extraction.

use nalgebra::SVector;
use thiserror::Error;

use crate::geometry::{exp_so3, rot_to_quat, small_angle, RotationMatrix, SmallAngleError, Vec3};
use crate::observer::ObserverState;

pub const STANDARD_GRAVITY: f64 = 9.81;

const TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time {t} s is outside the trajectory span [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("invalid trajectory: {0}")]
    InvalidSpec(String),
}

/// True vehicle state. `v` is the inertial velocity; `va` is the body-frame
/// air velocity `Rᵀ(v − v_w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    pub r: RotationMatrix,
    pub va: Vec3,
    pub h: f64,
    pub v: Vec3,
}

/// IMU-rate inputs: body angular velocity and specific acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyInputs {
    pub omega: Vec3,
    pub a: Vec3,
}

/// Per-axis sinusoidal velocity profile with a sinusoidal body-z rate.
///
/// `v_i(t) = offset_i + amplitude_i cos(frequency_i t + phase_i)`,
/// `ω(t) = (0, 0, yaw_rate_amplitude sin(yaw_rate_frequency t))`,
/// `R(t) = R₀ exp(ψ(t) e₃^×)` and `h(t) = h₀ + ∫₀ᵗ v₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidTrajectory {
    pub velocity_offset: Vec3,
    pub velocity_amplitude: Vec3,
    pub velocity_frequency: Vec3,
    pub velocity_phase: Vec3,
    pub yaw_rate_amplitude: f64,
    pub yaw_rate_frequency: f64,
    pub initial_altitude: f64,
    pub initial_attitude: RotationMatrix,
    /// Constant inertial wind. Keep the vertical component at zero.
    pub wind: Vec3,
}

impl Default for SinusoidTrajectory {
    fn default() -> Self {
        Self {
            velocity_offset: Vec3::zeros(),
            velocity_amplitude: Vec3::zeros(),
            velocity_frequency: Vec3::zeros(),
            velocity_phase: Vec3::zeros(),
            yaw_rate_amplitude: 0.0,
            yaw_rate_frequency: 0.0,
            initial_altitude: 0.0,
            initial_attitude: RotationMatrix::identity(),
            wind: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryKind {
    /// Yaw-only reference flight with `R(0) = I`.
    ReferenceYawOnly,
    /// Static vehicle: `v = 0`, constant altitude and attitude.
    Hover {
        altitude: f64,
        attitude: RotationMatrix,
    },
    Custom(SinusoidTrajectory),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub duration: f64,
    pub gravity: f64,
}

const REFERENCE_YAW_AMPLITUDE: f64 = 0.7;
const REFERENCE_YAW_FREQUENCY: f64 = 1.6;

impl TrajectorySpec {
    pub fn new(kind: TrajectoryKind, duration: f64, gravity: f64) -> Result<Self, DynamicsError> {
        if !(duration > 0.0) {
            return Err(DynamicsError::InvalidSpec(format!("duration {duration} must be > 0")));
        }
        if !(gravity > 0.0) {
            return Err(DynamicsError::InvalidSpec(format!("gravity {gravity} must be > 0")));
        }
        if let TrajectoryKind::Custom(c) = &kind {
            if c.wind.z != 0.0 {
                return Err(DynamicsError::InvalidSpec("vertical wind must be zero".into()));
            }
        }
        Ok(Self { kind, duration, gravity })
    }

    pub fn reference(duration: f64) -> Self {
        Self { kind: TrajectoryKind::ReferenceYawOnly, duration, gravity: STANDARD_GRAVITY }
    }

    pub fn hover(duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::Hover { altitude: 0.0, attitude: RotationMatrix::identity() },
            duration,
            gravity: STANDARD_GRAVITY,
        }
    }

    pub fn wind(&self) -> Vec3 {
        match &self.kind {
            TrajectoryKind::Custom(c) => c.wind,
            _ => Vec3::zeros(),
        }
    }

    fn check(&self, t: f64) -> Result<(), DynamicsError> {
        if t < -TIME_SLACK || t > self.duration + TIME_SLACK || !t.is_finite() {
            return Err(DynamicsError::OutOfRange { t, duration: self.duration });
        }
        Ok(())
    }

    /// Inertial velocity, inertial acceleration, altitude, attitude and yaw rate
    /// at `t`, without range checking.
    fn kinematics(&self, t: f64) -> Kinematics {
        match &self.kind {
            TrajectoryKind::ReferenceYawOnly => {
                let s3 = 3.0f64.sqrt();
                let v = Vec3::new(-1.5 * (1.5 * t).sin(), 3.0 * (3.0 * t).cos(), -15.0 * s3 * (3.0 * t).cos() / 4.0);
                let dv = Vec3::new(-2.25 * (1.5 * t).cos(), -9.0 * (3.0 * t).sin(), 11.25 * s3 * (3.0 * t).sin());
                let h = -5.0 * s3 * (3.0 * t).sin() / 4.0;
                let psi =
                    REFERENCE_YAW_AMPLITUDE / REFERENCE_YAW_FREQUENCY * (1.0 - (REFERENCE_YAW_FREQUENCY * t).cos());
                let yaw_rate = REFERENCE_YAW_AMPLITUDE * (REFERENCE_YAW_FREQUENCY * t).sin();
                Kinematics { v, dv, h, r: exp_so3(&Vec3::new(0.0, 0.0, psi)), yaw_rate }
            }
            TrajectoryKind::Hover { altitude, attitude } => {
                Kinematics { v: Vec3::zeros(), dv: Vec3::zeros(), h: *altitude, r: *attitude, yaw_rate: 0.0 }
            }
            TrajectoryKind::Custom(c) => {
                let mut v = c.velocity_offset;
                let mut dv = Vec3::zeros();
                for i in 0..3 {
                    let (amp, freq, phase) = (c.velocity_amplitude[i], c.velocity_frequency[i], c.velocity_phase[i]);
                    v[i] += amp * (freq * t + phase).cos();
                    dv[i] = -amp * freq * (freq * t + phase).sin();
                }
                let (amp, freq, phase) = (c.velocity_amplitude.z, c.velocity_frequency.z, c.velocity_phase.z);
                let oscillation = if freq == 0.0 {
                    amp * phase.cos() * t
                } else {
                    amp / freq * ((freq * t + phase).sin() - phase.sin())
                };
                let h = c.initial_altitude + c.velocity_offset.z * t + oscillation;
                let (psi, yaw_rate) = if c.yaw_rate_frequency == 0.0 {
                    (0.0, 0.0)
                } else {
                    let f = c.yaw_rate_frequency;
                    (c.yaw_rate_amplitude / f * (1.0 - (f * t).cos()), c.yaw_rate_amplitude * (f * t).sin())
                };
                Kinematics { v, dv, h, r: c.initial_attitude * exp_so3(&Vec3::new(0.0, 0.0, psi)), yaw_rate }
            }
        }
    }

    /// Inertial specific force `R a = v̇ − g e₃`.
    pub fn inertial_specific_force(&self, t: f64) -> Vec3 {
        self.kinematics(t).dv - self.gravity * Vec3::z()
    }
}

struct Kinematics {
    v: Vec3,
    dv: Vec3,
    h: f64,
    r: RotationMatrix,
    yaw_rate: f64,
}

/// Exact closed-form truth at time `t`.
pub fn truth_state(spec: &TrajectorySpec, t: f64) -> Result<NavState, DynamicsError> {
    spec.check(t)?;
    let k = spec.kinematics(t);
    let va = k.r.matrix().transpose() * (k.v - spec.wind());
    Ok(NavState { r: k.r, va, h: k.h, v: k.v })
}

/// Exact IMU inputs at time `t`, consistent with [`truth_state`].
pub fn truth_inputs(spec: &TrajectorySpec, t: f64) -> Result<BodyInputs, DynamicsError> {
    spec.check(t)?;
    let k = spec.kinematics(t);
    let a = k.r.matrix().transpose() * (k.dv - spec.gravity * Vec3::z());
    Ok(BodyInputs { omega: Vec3::new(0.0, 0.0, k.yaw_rate), a })
}

/// RK4 integration of `v̇ = R a + g e₃`, `Ṙ = R ω^×`, `ḣ = e₃ᵀ v` over
/// `steps` steps of `dt` starting at `t0`.
///
/// The attitude is advanced multiplicatively with `exp(ω dt)` at each stage.
/// Wind is taken as the constant `v − R V_a` of the initial state.
pub fn propagate_truth<F>(state: &NavState, inputs: F, gravity: f64, t0: f64, dt: f64, steps: usize) -> NavState
where
    F: Fn(f64) -> BodyInputs,
{
    assert!(dt > 0.0, "dt must be positive");
    let wind = state.v - state.r * state.va;
    let g = gravity * Vec3::z();
    let mut r = state.r;
    let mut v = state.v;
    let mut h = state.h;
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let half = 0.5 * dt;
        let u1 = inputs(t);
        let u2 = inputs(t + half);
        let u4 = inputs(t + dt);

        let dv1 = r * u1.a + g;
        let dh1 = v.z;

        let r2 = r * exp_so3(&(u1.omega * half));
        let v2 = v + dv1 * half;
        let dv2 = r2 * u2.a + g;
        let dh2 = v2.z;

        let r3 = r * exp_so3(&(u2.omega * half));
        let v3 = v + dv2 * half;
        let dv3 = r3 * u2.a + g;
        let dh3 = v3.z;

        let r4 = r * exp_so3(&(u2.omega * dt));
        let v4 = v + dv3 * dt;
        let dv4 = r4 * u4.a + g;
        let dh4 = v4.z;

        v += (dv1 + 2.0 * dv2 + 2.0 * dv3 + dv4) * (dt / 6.0);
        h += (dh1 + 2.0 * dh2 + 2.0 * dh3 + dh4) * (dt / 6.0);
        let mean_omega = (u1.omega + 4.0 * u2.omega + u4.omega) / 6.0;
        r = (r * exp_so3(&(mean_omega * dt))).renormalized();
    }
    let va = r.matrix().transpose() * (v - wind);
    NavState { r, va, h, v }
}

/// Error coordinates `x = [λ̃ᵀ ṽ_aᵀ h̃]ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub lambda: SmallAngleError,
    pub v_tilde: Vec3,
    pub h_tilde: f64,
}

impl ErrorState {
    pub fn to_vector(&self) -> SVector<f64, 7> {
        let l = self.lambda.vector();
        SVector::<f64, 7>::from_column_slice(&[
            l.x,
            l.y,
            l.z,
            self.v_tilde.x,
            self.v_tilde.y,
            self.v_tilde.z,
            self.h_tilde,
        ])
    }
}

/// `R̃ = R R̂ᵀ`, `ṽ_a = R V_a − R̂ V̂_a`, `h̃ = h − ĥ`.
pub fn error_state(truth: &NavState, est: &ObserverState) -> ErrorState {
    let r_tilde = truth.r * est.r_hat.transpose();
    ErrorState {
        lambda: small_angle(&rot_to_quat(&r_tilde)),
        v_tilde: truth.r * truth.va - est.r_hat * est.va_hat,
        h_tilde: truth.h - est.h_hat,
    }
}
