//! Measurement synthesis for the IMU, Pitot probes, barometer and
//! magnetometer, the multirate tick schedule, and a replayable CSV sensor log.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dynamics::{BodyInputs, NavState};
use crate::geometry::Vec3;

pub const MAX_PROBES: usize = 8;
const UNIT_TOLERANCE: f64 = 1e-12;
const COLLINEAR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("rate mismatch: {0}")]
    RateMismatch(String),
    #[error("invalid probe set: {0}")]
    InvalidProbes(String),
    #[error("invalid magnetic reference: {0}")]
    InvalidMagReference(String),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("sensor log: {0}")]
    Log(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Body-frame Pitot probe axes `B = [b₁ … b_m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    axes: Vec<Vec3>,
}

impl ProbeSet {
    pub fn new(axes: Vec<Vec3>) -> Result<Self, SensorError> {
        if axes.is_empty() || axes.len() > MAX_PROBES {
            return Err(SensorError::InvalidProbes(format!("need 1..={MAX_PROBES} probes, got {}", axes.len())));
        }
        for (i, b) in axes.iter().enumerate() {
            if (b.norm() - 1.0).abs() > UNIT_TOLERANCE {
                return Err(SensorError::InvalidProbes(format!("probe {i} axis has norm {}", b.norm())));
            }
        }
        Ok(Self { axes })
    }

    /// A single forward probe along body x.
    pub fn forward() -> Self {
        Self { axes: vec![Vec3::x()] }
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn axes(&self) -> &[Vec3] {
        &self.axes
    }

    /// `B` as a 3×m matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(3, self.len(), |r, c| self.axes[c][r])
    }

    /// `Bᵀ v`.
    pub fn project(&self, v: &Vec3) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.axes.iter().map(|b| b.dot(v)))
    }
}

/// Inertial magnetic field direction `m_ℐ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagReference(Vec3);

impl MagReference {
    pub fn new(m: Vec3) -> Result<Self, SensorError> {
        Self::check_unit(&m)?;
        if m.cross(&Vec3::z()).norm() < COLLINEAR_TOLERANCE {
            return Err(SensorError::InvalidMagReference("m_I is collinear with e3; heading is unobservable".into()));
        }
        Ok(Self(m))
    }

    /// Skips the non-collinearity check. Only meant for observability experiments.
    pub fn new_allow_collinear(m: Vec3) -> Result<Self, SensorError> {
        Self::check_unit(&m)?;
        Ok(Self(m))
    }

    fn check_unit(m: &Vec3) -> Result<(), SensorError> {
        if (m.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(SensorError::InvalidMagReference(format!("norm {} is not 1", m.norm())));
        }
        Ok(())
    }

    pub fn reference() -> Self {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        Self(Vec3::new(c, 0.0, c))
    }

    pub fn vector(&self) -> &Vec3 {
        &self.0
    }
}

/// Standard deviations of the additive Gaussian sensor noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub sigma_gyro: f64,
    pub sigma_acc: f64,
    pub sigma_pitot: Vec<f64>,
    pub sigma_mag: Vec3,
    pub sigma_baro: f64,
}

impl NoiseSpec {
    pub fn reference() -> Self {
        Self {
            sigma_gyro: 0.05,
            sigma_acc: 0.05,
            sigma_pitot: vec![0.5],
            sigma_mag: Vec3::repeat(0.01),
            sigma_baro: 0.05,
        }
    }

    pub fn noiseless(probes: usize) -> Self {
        Self {
            sigma_gyro: 0.0,
            sigma_acc: 0.0,
            sigma_pitot: vec![0.0; probes],
            sigma_mag: Vec3::zeros(),
            sigma_baro: 0.0,
        }
    }

    pub fn validate(&self, probes: usize) -> Result<(), SensorError> {
        let all = [self.sigma_gyro, self.sigma_acc, self.sigma_baro]
            .into_iter()
            .chain(self.sigma_pitot.iter().copied())
            .chain(self.sigma_mag.iter().copied());
        for s in all {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(SensorError::InvalidNoise(format!("standard deviation {s} must be ≥ 0")));
            }
        }
        if self.sigma_pitot.len() != probes {
            return Err(SensorError::InvalidNoise(format!(
                "{} Pitot noise entries for {probes} probes",
                self.sigma_pitot.len()
            )));
        }
        Ok(())
    }
}

/// Sensor sampling rates in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSpec {
    pub imu: f64,
    pub pitot: f64,
    pub mag: f64,
    pub baro: f64,
}

impl RateSpec {
    pub fn reference() -> Self {
        Self { imu: 200.0, pitot: 50.0, mag: 50.0, baro: 5.0 }
    }

    /// IMU ticks between consecutive samples of each aiding sensor, as
    /// `(pitot, mag, baro)`.
    pub fn decimation(&self) -> Result<(usize, usize, usize), SensorError> {
        if !(self.imu > 0.0) || !self.imu.is_finite() {
            return Err(SensorError::RateMismatch(format!("IMU rate {} must be > 0", self.imu)));
        }
        let ratio = |name: &str, f: f64| -> Result<usize, SensorError> {
            if !(f > 0.0) || f > self.imu {
                return Err(SensorError::RateMismatch(format!("{name} rate {f} Hz must lie in (0, {}] Hz", self.imu)));
            }
            let r = self.imu / f;
            let n = r.round();
            if (r - n).abs() > 1e-9 * r {
                return Err(SensorError::RateMismatch(format!(
                    "{name} rate {f} Hz does not divide the IMU rate {} Hz",
                    self.imu
                )));
            }
            Ok(n as usize)
        };
        Ok((ratio("Pitot", self.pitot)?, ratio("magnetometer", self.mag)?, ratio("barometer", self.baro)?))
    }

    pub fn period(&self) -> f64 {
        1.0 / self.imu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorKind {
    Imu,
    Pitot,
    Mag,
    Baro,
}

impl SensorKind {
    fn stream_id(self) -> u64 {
        match self {
            SensorKind::Imu => 0,
            SensorKind::Pitot => 1,
            SensorKind::Mag => 2,
            SensorKind::Baro => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SensorPayload {
    Imu(BodyInputs),
    Pitot(DVector<f64>),
    Mag(Vec3),
    Baro(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorEvent {
    pub t: f64,
    pub payload: SensorPayload,
}

impl SensorEvent {
    pub fn kind(&self) -> SensorKind {
        match self.payload {
            SensorPayload::Imu(_) => SensorKind::Imu,
            SensorPayload::Pitot(_) => SensorKind::Pitot,
            SensorPayload::Mag(_) => SensorKind::Mag,
            SensorPayload::Baro(_) => SensorKind::Baro,
        }
    }
}

/// One IMU tick of the schedule and the aiding sensors that land on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub index: usize,
    pub t: f64,
    pub pitot: bool,
    pub mag: bool,
    pub baro: bool,
}

/// Every IMU tick in `[0, duration]`, flagged with the coincident aiding sensors.
pub fn make_schedule(rates: &RateSpec, duration: f64) -> Result<Vec<Tick>, SensorError> {
    let (dp, dm, db) = rates.decimation()?;
    if !(duration >= 0.0) {
        return Err(SensorError::RateMismatch(format!("duration {duration} must be ≥ 0")));
    }
    let last = (duration * rates.imu + 1e-9).floor() as usize;
    Ok((0..=last)
        .map(|index| Tick {
            index,
            t: index as f64 / rates.imu,
            pitot: index % dp == 0,
            mag: index % dm == 0,
            baro: index % db == 0,
        })
        .collect())
}

/// Independent per-sensor random streams derived from `(base_seed, run_index)`.
#[derive(Debug, Clone)]
pub struct SensorStreams {
    pub imu: ChaCha8Rng,
    pub pitot: ChaCha8Rng,
    pub mag: ChaCha8Rng,
    pub baro: ChaCha8Rng,
}

/// Stream id reserved for drawing initial estimates.
pub const INIT_STREAM: u64 = 4;

/// ChaCha stream for `(base_seed, run_index, stream)`.
pub fn substream(base_seed: u64, run_index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream((run_index << 8) | stream);
    rng
}

impl SensorStreams {
    pub fn new(base_seed: u64, run_index: u64) -> Self {
        let s = |k: SensorKind| substream(base_seed, run_index, k.stream_id());
        Self {
            imu: s(SensorKind::Imu),
            pitot: s(SensorKind::Pitot),
            mag: s(SensorKind::Mag),
            baro: s(SensorKind::Baro),
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("validated standard deviation").sample(rng)
}

fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, sigma: &Vec3) -> Vec3 {
    Vec3::new(gaussian(rng, sigma.x), gaussian(rng, sigma.y), gaussian(rng, sigma.z))
}

pub fn sample_imu<R: Rng + ?Sized>(truth: &BodyInputs, noise: &NoiseSpec, rng: &mut R) -> BodyInputs {
    BodyInputs {
        omega: truth.omega + gaussian_vec(rng, &Vec3::repeat(noise.sigma_gyro)),
        a: truth.a + gaussian_vec(rng, &Vec3::repeat(noise.sigma_acc)),
    }
}

/// `y_p = Bᵀ V_a + n_p`.
pub fn sample_pitot<R: Rng + ?Sized>(
    truth: &NavState,
    probes: &ProbeSet,
    noise: &NoiseSpec,
    rng: &mut R,
) -> DVector<f64> {
    let mut y = probes.project(&truth.va);
    for (yi, &s) in y.iter_mut().zip(&noise.sigma_pitot) {
        *yi += gaussian(rng, s);
    }
    y
}

/// `y_b = h + n_b`.
pub fn sample_baro<R: Rng + ?Sized>(truth: &NavState, noise: &NoiseSpec, rng: &mut R) -> f64 {
    truth.h + gaussian(rng, noise.sigma_baro)
}

/// `m_ℬ = Rᵀ m_ℐ + n_m`, left unnormalized.
pub fn sample_mag<R: Rng + ?Sized>(truth: &NavState, reference: &MagReference, noise: &NoiseSpec, rng: &mut R) -> Vec3 {
    truth.r.matrix().transpose() * reference.vector() + gaussian_vec(rng, &noise.sigma_mag)
}

/// All measurements available at one IMU tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickMeasurements {
    pub t: f64,
    pub imu: BodyInputs,
    pub pitot: Option<DVector<f64>>,
    pub mag: Option<Vec3>,
    pub baro: Option<f64>,
}

impl TickMeasurements {
    pub fn imu_only(t: f64, imu: BodyInputs) -> Self {
        Self { t, imu, pitot: None, mag: None, baro: None }
    }

    pub fn has_aiding(&self) -> bool {
        self.pitot.is_some() || self.mag.is_some() || self.baro.is_some()
    }

    pub fn events(&self) -> Vec<SensorEvent> {
        let mut out = vec![SensorEvent { t: self.t, payload: SensorPayload::Imu(self.imu) }];
        if let Some(y) = &self.pitot {
            out.push(SensorEvent { t: self.t, payload: SensorPayload::Pitot(y.clone()) });
        }
        if let Some(m) = self.mag {
            out.push(SensorEvent { t: self.t, payload: SensorPayload::Mag(m) });
        }
        if let Some(b) = self.baro {
            out.push(SensorEvent { t: self.t, payload: SensorPayload::Baro(b) });
        }
        out
    }
}

/// Sensor geometry and noise shared by every tick of a run.
#[derive(Debug, Clone)]
pub struct SensorSuite {
    pub probes: ProbeSet,
    pub mag_ref: MagReference,
    pub noise: NoiseSpec,
}

impl SensorSuite {
    pub fn measure(
        &self,
        tick: &Tick,
        truth: &NavState,
        inputs: &BodyInputs,
        streams: &mut SensorStreams,
    ) -> TickMeasurements {
        TickMeasurements {
            t: tick.t,
            imu: sample_imu(inputs, &self.noise, &mut streams.imu),
            pitot: tick.pitot.then(|| sample_pitot(truth, &self.probes, &self.noise, &mut streams.pitot)),
            mag: tick.mag.then(|| sample_mag(truth, &self.mag_ref, &self.noise, &mut streams.mag)),
            baro: tick.baro.then(|| sample_baro(truth, &self.noise, &mut streams.baro)),
        }
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,kind,v1,v2,v3` rows. IMU ticks become a `gyro` and an `accel`
/// row; Pitot vectors longer than three spill into further `pitot` rows.
pub fn write_sensor_log<W: Write>(ticks: &[TickMeasurements], out: W) -> Result<(), SensorError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "kind", "v1", "v2", "v3"])?;
    for m in ticks {
        let t = fmt_real(m.t);
        let mut row = |kind: &str, vals: &[f64]| -> Result<(), SensorError> {
            let mut rec = vec![t.clone(), kind.to_string()];
            rec.extend(vals.iter().map(|&v| fmt_real(v)));
            rec.resize(5, String::new());
            w.write_record(&rec)?;
            Ok(())
        };
        row("gyro", m.imu.omega.as_slice())?;
        row("accel", m.imu.a.as_slice())?;
        if let Some(y) = &m.pitot {
            for chunk in y.as_slice().chunks(3) {
                row("pitot", chunk)?;
            }
        }
        if let Some(v) = &m.mag {
            row("mag", v.as_slice())?;
        }
        if let Some(b) = m.baro {
            row("baro", &[b])?;
        }
    }
    w.flush().map_err(|e| SensorError::Log(e.to_string()))?;
    Ok(())
}

/// Parses a log written by [`write_sensor_log`].
pub fn read_sensor_log<R: Read>(input: R) -> Result<Vec<TickMeasurements>, SensorError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<TickMeasurements> = Vec::new();
    let mut pending_gyro: Option<(f64, Vec3)> = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |msg: &str| SensorError::Log(format!("row {}: {msg}", line + 2));
        let t: f64 = rec.get(0).unwrap_or("").parse().map_err(|_| bad("bad time"))?;
        let kind = rec.get(1).unwrap_or("");
        let vals: Vec<f64> = (2..5)
            .filter_map(|i| rec.get(i).filter(|s| !s.is_empty()))
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad value")))
            .collect::<Result<_, _>>()?;
        let vec3 = |v: &[f64]| -> Result<Vec3, SensorError> {
            if v.len() != 3 {
                return Err(bad("expected three values"));
            }
            Ok(Vec3::new(v[0], v[1], v[2]))
        };
        match kind {
            "gyro" => pending_gyro = Some((t, vec3(&vals)?)),
            "accel" => {
                let (tg, omega) = pending_gyro.take().ok_or_else(|| bad("accel without gyro"))?;
                if tg != t {
                    return Err(bad("accel timestamp differs from gyro"));
                }
                out.push(TickMeasurements::imu_only(t, BodyInputs { omega, a: vec3(&vals)? }));
            }
            other => {
                let tick = out.last_mut().filter(|m| m.t == t).ok_or_else(|| bad("aiding row without IMU tick"))?;
                match other {
                    "pitot" => {
                        let mut all: Vec<f64> = tick.pitot.take().map(|p| p.as_slice().to_vec()).unwrap_or_default();
                        all.extend(vals);
                        tick.pitot = Some(DVector::from_vec(all));
                    }
                    "mag" => tick.mag = Some(vec3(&vals)?),
                    "baro" => {
                        if vals.len() != 1 {
                            return Err(bad("expected one value"));
                        }
                        tick.baro = Some(vals[0]);
                    }
                    _ => return Err(bad("unknown sensor kind")),
                }
            }
        }
    }
    Ok(out)
}
