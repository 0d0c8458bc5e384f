//! A single simulated flight with the observer in the loop.

use rand_distr::{Distribution, Normal};

use super::config::{mean_initial_attitude, SimConfig};
use super::HarnessError;
use crate::dynamics::{truth_inputs, truth_state, NavState};
use crate::geometry::{exp_so3, rot_to_euler_zyx, RotationMatrix, Vec3};
use crate::observer::{observer_tick, ObserverError, ObserverModel, ObserverState};
use crate::sensors::{make_schedule, substream, SensorStreams, SensorSuite, INIT_STREAM};

/// One row of the trace, recorded at every IMU tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub euler: [f64; 3],
    pub euler_hat: [f64; 3],
    pub va: Vec3,
    pub va_hat: Vec3,
    pub h: f64,
    pub h_hat: f64,
    pub err_v_body: f64,
    pub err_v_inertial: f64,
    pub err_att: f64,
    pub err_h: f64,
    pub lam_min_p: f64,
    pub lam_max_p: f64,
}

impl TraceRow {
    pub fn new(t: f64, truth: &NavState, est: &ObserverState) -> Self {
        let eig = est.p.symmetric_eigenvalues();
        let rrt = truth.r.matrix() * est.r_hat.matrix().transpose();
        Self {
            t,
            euler: report_euler(&truth.r),
            euler_hat: report_euler(&est.r_hat),
            va: truth.va,
            va_hat: est.va_hat,
            h: truth.h,
            h_hat: est.h_hat,
            err_v_body: (truth.va - est.va_hat).norm(),
            err_v_inertial: (truth.r * truth.va - est.r_hat * est.va_hat).norm(),
            err_att: 3.0 - rrt.trace(),
            err_h: (truth.h - est.h_hat).abs(),
            lam_min_p: eig.min(),
            lam_max_p: eig.max(),
        }
    }
}

/// Euler angles for logging. Inside the gimbal guard roll is reported as 0.
fn report_euler(r: &RotationMatrix) -> [f64; 3] {
    match rot_to_euler_zyx(r) {
        Ok((roll, pitch, yaw)) => [roll, pitch, yaw],
        Err(_) => {
            let m = r.matrix();
            let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
            [0.0, pitch, (-m[(0, 1)]).atan2(m[(1, 1)])]
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub rows: Vec<TraceRow>,
}

impl RunMetrics {
    /// Last row at or before `t`.
    pub fn at(&self, t: f64) -> Option<&TraceRow> {
        self.rows.iter().take_while(|r| r.t <= t + 1e-9).last()
    }

    /// Mean of `f` over rows with `t ≥ t_end − window`.
    pub fn window_mean(&self, window: f64, f: impl Fn(&TraceRow) -> f64) -> f64 {
        let Some(last) = self.rows.last() else { return f64::NAN };
        let start = last.t - window;
        let (sum, n) =
            self.rows.iter().filter(|r| r.t >= start - 1e-9).fold((0.0, 0usize), |(s, n), r| (s + f(r), n + 1));
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_index: u64,
    pub metrics: RunMetrics,
    /// Set when the observer's numerical floor triggered; metrics stop there.
    pub divergence: Option<String>,
    pub final_state: ObserverState,
}

/// Initial estimates for `run_index`, drawn from the dedicated init stream.
pub fn init_estimates(config: &SimConfig, run_index: u64) -> ObserverState {
    let init = &config.init;
    let mut rng = substream(config.base_seed, run_index, INIT_STREAM);
    let mut draw = |sigma: f64| {
        if sigma == 0.0 {
            0.0
        } else {
            Normal::new(0.0, sigma).expect("validated std").sample(&mut rng)
        }
    };
    let va_hat = init.va_hat0 + Vec3::new(draw(init.std_v), draw(init.std_v), draw(init.std_v));
    let h_hat = init.h_hat0 + draw(init.std_h);
    let eps = Vec3::new(draw(init.std_angle), draw(init.std_angle), draw(init.std_angle));
    let r_hat = (mean_initial_attitude(init) * exp_so3(&eps)).renormalized();
    ObserverState { r_hat, va_hat, h_hat, p: config.weights.p0 }
}

pub fn observer_model(config: &SimConfig) -> ObserverModel {
    ObserverModel {
        weights: config.weights.clone(),
        probes: config.probes.clone(),
        mag_ref: config.mag_ref,
        gravity: config.trajectory.gravity,
        period: config.rates.period(),
        q_convention: config.q_convention,
    }
}

/// Runs the observer from `initial` over the full schedule.
pub fn run_from(config: &SimConfig, run_index: u64, initial: ObserverState) -> Result<RunResult, HarnessError> {
    run_inspected(config, run_index, initial, |_, _| {})
}

/// Like [`run_from`], calling `inspect(t, state)` after every completed tick.
pub fn run_inspected<F>(
    config: &SimConfig,
    run_index: u64,
    initial: ObserverState,
    mut inspect: F,
) -> Result<RunResult, HarnessError>
where
    F: FnMut(f64, &ObserverState),
{
    config.validate()?;
    let schedule = make_schedule(&config.rates, config.duration)?;
    let model = observer_model(config);
    let suite = SensorSuite { probes: config.probes.clone(), mag_ref: config.mag_ref, noise: config.noise.clone() };
    let mut streams = SensorStreams::new(config.base_seed, run_index);
    let mut est = initial;
    let mut rows = Vec::with_capacity(schedule.len());
    let mut divergence = None;
    for (k, tick) in schedule.iter().enumerate() {
        let truth = truth_state(&config.trajectory, tick.t)?;
        rows.push(TraceRow::new(tick.t, &truth, &est));
        if k + 1 == schedule.len() {
            break;
        }
        let inputs = truth_inputs(&config.trajectory, tick.t)?;
        let meas = suite.measure(tick, &truth, &inputs, &mut streams);
        match observer_tick(&est, &meas, &model) {
            Ok(next) => {
                est = next;
                inspect(schedule[k + 1].t, &est);
            }
            Err(e @ (ObserverError::Diverged(_) | ObserverError::SingularInnovation)) => {
                divergence = Some(format!("t = {:.3} s: {e}", tick.t));
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(RunResult { run_index, metrics: RunMetrics { rows }, divergence, final_state: est })
}

pub fn run_single(config: &SimConfig, run_index: u64) -> Result<RunResult, HarnessError> {
    run_from(config, run_index, init_estimates(config, run_index))
}
