//! `key = value` simulation configuration.
//!
//! Vectors are written `[a, b, c]`, matrices as bracketed rows
//! `[[a, b], [c, d]]`, and `#` starts a comment. Every key is optional; the
//! defaults reproduce the reference flight experiment.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;

use super::HarnessError;
use crate::dynamics::{TrajectoryKind, TrajectorySpec, STANDARD_GRAVITY};
use crate::geometry::{euler_zyx_to_rot, Mat3, Vec3};
use crate::observer::{Mat7, QConvention, RiccatiWeights, Vec7};
use crate::sensors::{MagReference, NoiseSpec, ProbeSet, RateSpec};

/// Distribution of the initial estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub va_hat0: Vec3,
    pub h_hat0: f64,
    /// `(roll, pitch, yaw)` in radians, ZYX convention.
    pub angles0: (f64, f64, f64),
    pub std_v: f64,
    pub std_h: f64,
    pub std_angle: f64,
}

impl InitSpec {
    pub fn reference() -> Self {
        Self {
            va_hat0: Vec3::new(10.0, -2.0, 8.0),
            h_hat0: 10.0,
            angles0: (PI / 20.0, -PI / 20.0, PI / 6.0),
            std_v: 2.0,
            std_h: 1.0,
            std_angle: PI / 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub trajectory: TrajectorySpec,
    pub probes: ProbeSet,
    pub mag_ref: MagReference,
    pub rates: RateSpec,
    pub noise: NoiseSpec,
    pub weights: RiccatiWeights,
    pub init: InitSpec,
    pub runs: usize,
    pub base_seed: u64,
    pub duration: f64,
    pub q_convention: QConvention,
    /// Minimum `λ_min(W)` for a positive observability verdict.
    pub obs_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let duration = 60.0;
        Self {
            trajectory: TrajectorySpec::reference(duration),
            probes: ProbeSet::forward(),
            mag_ref: MagReference::reference(),
            rates: RateSpec::reference(),
            noise: NoiseSpec::reference(),
            weights: RiccatiWeights::reference(1),
            init: InitSpec::reference(),
            runs: 20,
            base_seed: 1,
            duration,
            q_convention: QConvention::default(),
            obs_threshold: 1e-6,
        }
    }
}

impl SimConfig {
    /// Sets the run and trajectory duration together.
    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self.trajectory.duration = duration;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.runs < 1 {
            return bad("runs must be ≥ 1".into());
        }
        if !(self.duration > 0.0) {
            return bad(format!("duration {} must be > 0", self.duration));
        }
        if self.trajectory.duration != self.duration {
            return bad("trajectory duration differs from run duration".into());
        }
        self.rates.decimation().map_err(|e| HarnessError::Validation(e.to_string()))?;
        self.noise.validate(self.probes.len()).map_err(|e| HarnessError::Validation(e.to_string()))?;
        if self.weights.q_pitot.nrows() != self.probes.len() {
            return bad(format!(
                "q_pitot is {}×{} but there are {} probes",
                self.weights.q_pitot.nrows(),
                self.weights.q_pitot.ncols(),
                self.probes.len()
            ));
        }
        let w = &self.weights;
        RiccatiWeights::new(w.q_pitot.clone(), w.q_mag, w.q_baro, w.s, w.p0)
            .map_err(|e| HarnessError::Validation(e.to_string()))?;
        let i = &self.init;
        if !(i.std_v >= 0.0 && i.std_h >= 0.0 && i.std_angle >= 0.0) {
            return bad("initial standard deviations must be ≥ 0".into());
        }
        if !(self.obs_threshold > 0.0) {
            return bad("obs_threshold must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(f64),
    Word(String),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

fn parse_value(raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err("missing value".into());
    }
    if let Some(inner) = raw.strip_prefix("[[") {
        let inner = inner.strip_suffix("]]").ok_or("unterminated matrix")?;
        let rows = inner
            .split("],")
            .map(|r| parse_list(r.trim().trim_start_matches('[').trim_end_matches(']')))
            .collect::<Result<Vec<_>, _>>()?;
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err("matrix rows have different lengths".into());
        }
        return Ok(Value::Matrix(rows));
    }
    if let Some(inner) = raw.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or("unterminated vector")?;
        return Ok(Value::Vector(parse_list(inner)?));
    }
    match raw.parse::<f64>() {
        Ok(x) => Ok(Value::Scalar(x)),
        Err(_) if raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => Ok(Value::Word(raw.to_string())),
        Err(_) => Err(format!("cannot parse `{raw}`")),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Err("empty list".into());
    }
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| format!("bad number `{}`", x.trim()))).collect()
}

struct Entry {
    line: usize,
    key: String,
    value: Value,
}

impl Entry {
    fn err(&self, msg: impl std::fmt::Display) -> HarnessError {
        HarnessError::Parse { line: self.line, msg: format!("`{}`: {msg}", self.key) }
    }

    fn scalar(&self) -> Result<f64, HarnessError> {
        match &self.value {
            Value::Scalar(x) => Ok(*x),
            _ => Err(self.err("expected a number")),
        }
    }

    fn count(&self) -> Result<u64, HarnessError> {
        let x = self.scalar()?;
        if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
            return Err(self.err("expected a non-negative integer"));
        }
        Ok(x as u64)
    }

    fn word(&self) -> Result<&str, HarnessError> {
        match &self.value {
            Value::Word(w) => Ok(w),
            _ => Err(self.err("expected a word")),
        }
    }

    fn boolean(&self) -> Result<bool, HarnessError> {
        match self.word()? {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.err("expected true or false")),
        }
    }

    fn vector(&self, len: Option<usize>) -> Result<Vec<f64>, HarnessError> {
        let v = match &self.value {
            Value::Vector(v) => v.clone(),
            Value::Scalar(x) if len.is_none() || len == Some(1) => vec![*x],
            _ => return Err(self.err("expected a vector")),
        };
        if let Some(n) = len {
            if v.len() != n {
                return Err(self.err(format!("expected {n} entries, got {}", v.len())));
            }
        }
        Ok(v)
    }

    fn vec3(&self) -> Result<Vec3, HarnessError> {
        let v = self.vector(Some(3))?;
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    fn matrix(&self) -> Result<Vec<Vec<f64>>, HarnessError> {
        match &self.value {
            Value::Matrix(m) => Ok(m.clone()),
            Value::Vector(v) => Ok(vec![v.clone()]),
            Value::Scalar(x) => Ok(vec![vec![*x]]),
            Value::Word(_) => Err(self.err("expected a matrix")),
        }
    }
}

fn diag7(e: &Entry) -> Result<Mat7, HarnessError> {
    Ok(Mat7::from_diagonal(&Vec7::from_column_slice(&e.vector(Some(7))?)))
}

pub const KNOWN_KEYS: &[&str] = &[
    "duration",
    "runs",
    "seed",
    "gravity",
    "trajectory",
    "hover_altitude",
    "probes",
    "mag_ref",
    "allow_collinear_mag",
    "rate_imu",
    "rate_pitot",
    "rate_mag",
    "rate_baro",
    "sigma_gyro",
    "sigma_acc",
    "sigma_pitot",
    "sigma_mag",
    "sigma_baro",
    "q_pitot",
    "q_mag",
    "q_baro",
    "s_diag",
    "p0_diag",
    "q_convention",
    "init_va",
    "init_h",
    "init_angles",
    "init_std_va",
    "init_std_h",
    "init_std_angle",
    "obs_threshold",
];

/// Typed directions rarely have norm 1 to machine precision; renormalize
/// those within this distance and let the types reject the rest.
const UNIT_INPUT_TOLERANCE: f64 = 1e-6;

fn snap_unit(v: Vec3) -> Vec3 {
    if (v.norm() - 1.0).abs() <= UNIT_INPUT_TOLERANCE {
        v.normalize()
    } else {
        v
    }
}

/// Parses configuration text. Unknown keys and duplicates are rejected.
pub fn parse_config(text: &str) -> Result<SimConfig, HarnessError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| HarnessError::Parse { line, msg: "expected `key = value`".into() })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(HarnessError::Parse { line, msg: format!("unknown key `{key}`") });
        }
        if entries.iter().any(|e| e.key == key) {
            return Err(HarnessError::Parse { line, msg: format!("duplicate key `{key}`") });
        }
        let value = parse_value(value).map_err(|msg| HarnessError::Parse { line, msg: format!("`{key}`: {msg}") })?;
        entries.push(Entry { line, key, value });
    }
    let get = |k: &str| entries.iter().find(|e| e.key == k);

    let mut cfg = SimConfig::default();
    if let Some(e) = get("duration") {
        cfg.duration = e.scalar()?;
    }
    if let Some(e) = get("runs") {
        cfg.runs = e.count()? as usize;
    }
    if let Some(e) = get("seed") {
        cfg.base_seed = e.count()?;
    }
    let gravity = match get("gravity") {
        Some(e) => e.scalar()?,
        None => STANDARD_GRAVITY,
    };
    let hover_altitude = match get("hover_altitude") {
        Some(e) => e.scalar()?,
        None => 0.0,
    };
    let kind = match get("trajectory") {
        None => TrajectoryKind::ReferenceYawOnly,
        Some(e) => match e.word()? {
            "reference" => TrajectoryKind::ReferenceYawOnly,
            "hover" => TrajectoryKind::Hover {
                altitude: hover_altitude,
                attitude: crate::geometry::RotationMatrix::identity(),
            },
            other => return Err(e.err(format!("unknown trajectory `{other}` (reference | hover)"))),
        },
    };
    cfg.trajectory =
        TrajectorySpec::new(kind, cfg.duration, gravity).map_err(|e| HarnessError::Validation(e.to_string()))?;

    if let Some(e) = get("probes") {
        let axes = e
            .matrix()?
            .into_iter()
            .map(|r| {
                if r.len() == 3 {
                    Ok(snap_unit(Vec3::new(r[0], r[1], r[2])))
                } else {
                    Err(e.err("each probe axis needs 3 entries"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        cfg.probes = ProbeSet::new(axes).map_err(|err| HarnessError::Validation(err.to_string()))?;
    }
    let m = cfg.probes.len();

    let allow_collinear = match get("allow_collinear_mag") {
        Some(e) => e.boolean()?,
        None => false,
    };
    if let Some(e) = get("mag_ref") {
        let v = snap_unit(e.vec3()?);
        cfg.mag_ref = if allow_collinear { MagReference::new_allow_collinear(v) } else { MagReference::new(v) }
            .map_err(|err| HarnessError::Validation(err.to_string()))?;
    }

    for (key, slot) in [
        ("rate_imu", &mut cfg.rates.imu),
        ("rate_pitot", &mut cfg.rates.pitot),
        ("rate_mag", &mut cfg.rates.mag),
        ("rate_baro", &mut cfg.rates.baro),
        ("sigma_gyro", &mut cfg.noise.sigma_gyro),
        ("sigma_acc", &mut cfg.noise.sigma_acc),
        ("sigma_baro", &mut cfg.noise.sigma_baro),
        ("init_h", &mut cfg.init.h_hat0),
        ("init_std_va", &mut cfg.init.std_v),
        ("init_std_h", &mut cfg.init.std_h),
        ("init_std_angle", &mut cfg.init.std_angle),
        ("obs_threshold", &mut cfg.obs_threshold),
    ] {
        if let Some(e) = get(key) {
            *slot = e.scalar()?;
        }
    }
    cfg.noise.sigma_pitot = match get("sigma_pitot") {
        Some(e) => e.vector(Some(m))?,
        None => vec![cfg.noise.sigma_pitot[0]; m],
    };
    if let Some(e) = get("sigma_mag") {
        cfg.noise.sigma_mag = e.vec3()?;
    }

    let mut weights = RiccatiWeights::reference(m);
    if let Some(e) = get("q_pitot") {
        let rows = e.matrix()?;
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(e.err(format!("expected a {m}×{m} matrix")));
        }
        weights.q_pitot = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    }
    if let Some(e) = get("q_mag") {
        let rows = e.matrix()?;
        if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
            return Err(e.err("expected a 3×3 matrix"));
        }
        weights.q_mag = Mat3::from_fn(|i, j| rows[i][j]);
    }
    if let Some(e) = get("q_baro") {
        weights.q_baro = e.scalar()?;
    }
    if let Some(e) = get("s_diag") {
        weights.s = diag7(e)?;
    }
    if let Some(e) = get("p0_diag") {
        weights.p0 = diag7(e)?;
    }
    cfg.weights = weights;

    if let Some(e) = get("q_convention") {
        cfg.q_convention = e.word()?.parse().map_err(|m: String| e.err(m))?;
    }
    if let Some(e) = get("init_va") {
        cfg.init.va_hat0 = e.vec3()?;
    }
    if let Some(e) = get("init_angles") {
        let v = e.vector(Some(3))?;
        cfg.init.angles0 = (v[0], v[1], v[2]);
    }

    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Mean initial attitude from the configured Euler angles.
pub fn mean_initial_attitude(init: &InitSpec) -> crate::geometry::RotationMatrix {
    euler_zyx_to_rot(init.angles0.0, init.angles0.1, init.angles0.2)
}
