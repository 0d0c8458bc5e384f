//! CSV persistence. Reals are written with 17 significant digits so that a
//! read-back reproduces every value exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::montecarlo::MonteCarloSummary;
use super::run::{RunMetrics, TraceRow};
use super::HarnessError;
use crate::geometry::Vec3;
use crate::observability::ObservabilitySweep;

pub const TRACE_HEADER: [&str; 21] = [
    "t",
    "roll",
    "pitch",
    "yaw",
    "roll_hat",
    "pitch_hat",
    "yaw_hat",
    "Va1",
    "Va2",
    "Va3",
    "Va1_hat",
    "Va2_hat",
    "Va3_hat",
    "h",
    "h_hat",
    "err_v_body",
    "err_v_inertial",
    "err_att",
    "err_h",
    "lam_min_P",
    "lam_max_P",
];

pub const OBSERVABILITY_HEADER: [&str; 6] = ["t_window_start", "lam_min_W", "lam_max_W", "mu_pi", "mu_api", "verdict"];

pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn row_values(r: &TraceRow) -> [f64; 21] {
    [
        r.t,
        r.euler[0],
        r.euler[1],
        r.euler[2],
        r.euler_hat[0],
        r.euler_hat[1],
        r.euler_hat[2],
        r.va.x,
        r.va.y,
        r.va.z,
        r.va_hat.x,
        r.va_hat.y,
        r.va_hat.z,
        r.h,
        r.h_hat,
        r.err_v_body,
        r.err_v_inertial,
        r.err_att,
        r.err_h,
        r.lam_min_p,
        r.lam_max_p,
    ]
}

pub fn write_trace<W: Write>(metrics: &RunMetrics, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in &metrics.rows {
        w.write_record(row_values(r).iter().map(|&x| fmt17(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<RunMetrics, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(HarnessError::Io("unexpected trace header".into()));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| HarnessError::Io(format!("bad number `{s}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != 21 {
            return Err(HarnessError::Io(format!("expected 21 columns, got {}", v.len())));
        }
        rows.push(TraceRow {
            t: v[0],
            euler: [v[1], v[2], v[3]],
            euler_hat: [v[4], v[5], v[6]],
            va: Vec3::new(v[7], v[8], v[9]),
            va_hat: Vec3::new(v[10], v[11], v[12]),
            h: v[13],
            h_hat: v[14],
            err_v_body: v[15],
            err_v_inertial: v[16],
            err_att: v[17],
            err_h: v[18],
            lam_min_p: v[19],
            lam_max_p: v[20],
        });
    }
    Ok(RunMetrics { rows })
}

/// Per-run final-window means.
pub fn write_run_summary<W: Write>(summary: &MonteCarloSummary, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "diverged", "final_err_v_body", "final_err_v_inertial", "final_err_att", "final_err_h"])?;
    for r in &summary.runs {
        w.write_record([
            r.run_index.to_string(),
            r.divergence.is_some().to_string(),
            fmt17(r.final_err_v_body),
            fmt17(r.final_err_v_inertial),
            fmt17(r.final_err_att),
            fmt17(r.final_err_h),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Across-run median, min and max at the summary times.
pub fn write_stats<W: Write>(summary: &MonteCarloSummary, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "metric", "median", "min", "max", "runs"])?;
    for s in &summary.stats {
        w.write_record([
            fmt17(s.t),
            s.metric.to_string(),
            fmt17(s.median),
            fmt17(s.min),
            fmt17(s.max),
            s.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_observability<W: Write>(sweep: &ObservabilitySweep, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OBSERVABILITY_HEADER)?;
    for r in &sweep.windows {
        w.write_record([
            fmt17(r.t_start),
            fmt17(r.lambda_min),
            fmt17(r.lambda_max),
            fmt17(r.mu_pi),
            fmt17(r.mu_api),
            r.verdict.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

pub fn trace_file_name(run_index: u64) -> String {
    format!("trace_run{run_index:03}.csv")
}

pub fn write_trace_file(dir: &Path, run_index: u64, metrics: &RunMetrics) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(trace_file_name(run_index));
    write_trace(metrics, create(&path)?)?;
    Ok(path)
}

/// `summary.csv`, `stats.csv` and one trace per run.
pub fn write_montecarlo_files(
    dir: &Path,
    summary: &MonteCarloSummary,
    results: &[super::run::RunResult],
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_run_summary(summary, create(&dir.join("summary.csv"))?)?;
    write_stats(summary, create(&dir.join("stats.csv"))?)?;
    for r in results {
        write_trace_file(dir, r.run_index, &r.metrics)?;
    }
    Ok(())
}

pub fn write_observability_file(dir: &Path, sweep: &ObservabilitySweep) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("observability.csv");
    write_observability(sweep, create(&path)?)?;
    Ok(path)
}
