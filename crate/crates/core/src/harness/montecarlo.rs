//! Independent runs over per-run random streams, folded in run order.

use super::config::SimConfig;
use super::run::{run_single, RunResult, TraceRow};
use super::HarnessError;
use crate::parallel::Execution;

/// Length of the trailing averaging window in seconds.
pub const FINAL_WINDOW: f64 = 5.0;
/// Times at which across-run statistics are reported, clipped to the duration.
pub const SUMMARY_TIMES: [f64; 3] = [5.0, 15.0, 30.0];

/// Named accessor for one error metric of a trace row.
pub type Metric = (&'static str, fn(&TraceRow) -> f64);

pub const METRICS: [Metric; 4] = [
    ("err_v_body", |r| r.err_v_body),
    ("err_v_inertial", |r| r.err_v_inertial),
    ("err_att", |r| r.err_att),
    ("err_h", |r| r.err_h),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_index: u64,
    pub divergence: Option<String>,
    pub final_err_v_body: f64,
    pub final_err_v_inertial: f64,
    pub final_err_att: f64,
    pub final_err_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricStats {
    pub t: f64,
    pub metric: &'static str,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Runs with a sample at `t`.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub runs: Vec<RunSummary>,
    pub stats: Vec<MetricStats>,
    pub divergences: usize,
}

impl MonteCarloSummary {
    pub fn stat(&self, metric: &str, t: f64) -> Option<&MetricStats> {
        self.stats.iter().find(|s| s.metric == metric && (s.t - t).abs() < 1e-9)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Folds run results, in the order given, into a summary.
pub fn summarize(config: &SimConfig, results: &[RunResult]) -> MonteCarloSummary {
    let runs = results
        .iter()
        .map(|r| RunSummary {
            run_index: r.run_index,
            divergence: r.divergence.clone(),
            final_err_v_body: r.metrics.window_mean(FINAL_WINDOW, METRICS[0].1),
            final_err_v_inertial: r.metrics.window_mean(FINAL_WINDOW, METRICS[1].1),
            final_err_att: r.metrics.window_mean(FINAL_WINDOW, METRICS[2].1),
            final_err_h: r.metrics.window_mean(FINAL_WINDOW, METRICS[3].1),
        })
        .collect();
    let mut times: Vec<f64> = SUMMARY_TIMES.iter().copied().filter(|&t| t < config.duration).collect();
    times.push(config.duration);
    let mut stats = Vec::new();
    for &t in &times {
        for (name, f) in METRICS {
            let mut values: Vec<f64> = results
                .iter()
                .filter_map(|r| r.metrics.rows.last().filter(|last| last.t >= t - 1e-9).and(r.metrics.at(t)))
                .map(f)
                .collect();
            values.sort_by(f64::total_cmp);
            stats.push(MetricStats {
                t,
                metric: name,
                median: median(&values),
                min: values.first().copied().unwrap_or(f64::NAN),
                max: values.last().copied().unwrap_or(f64::NAN),
                count: values.len(),
            });
        }
    }
    let divergences = results.iter().filter(|r| r.divergence.is_some()).count();
    MonteCarloSummary { runs, stats, divergences }
}

/// Runs `config.runs` flights. A diverged run keeps its partial trace and is
/// counted; any other error aborts the sweep.
pub fn run_montecarlo(
    config: &SimConfig,
    execution: Execution,
) -> Result<(MonteCarloSummary, Vec<RunResult>), HarnessError> {
    config.validate()?;
    let indices: Vec<u64> = (0..config.runs as u64).collect();
    let results = execution.map(&indices, |&k| run_single(config, k)).into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((summarize(config, &results), results))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(runs: usize) -> SimConfig {
        let text = format!("duration = 6\nruns = {runs}\n");
        super::super::parse_config(&text).unwrap()
    }

    #[test]
    fn single_run_summary_equals_run_stats() {
        let cfg = short(1);
        let (summary, results) = run_montecarlo(&cfg, Execution::Sequential).unwrap();
        assert_eq!(results.len(), 1);
        let r = &results[0];
        assert_eq!(summary.runs[0].final_err_att, r.metrics.window_mean(5.0, |x| x.err_att));
        let s = summary.stat("err_v_body", 5.0).unwrap();
        let v = r.metrics.at(5.0).unwrap().err_v_body;
        assert_eq!((s.median, s.min, s.max, s.count), (v, v, v, 1));
        assert!(summary.stat("err_att", 6.0).is_some());
        assert!(summary.stat("err_att", 15.0).is_none());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let cfg = short(4);
        let (a, ra) = run_montecarlo(&cfg, Execution::Sequential).unwrap();
        let (b, rb) = run_montecarlo(&cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert!(a.divergences <= cfg.runs);
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), 2.5);
        assert_eq!(median(&[4.0]), 4.0);
        assert!(median(&[]).is_nan());
    }
}
