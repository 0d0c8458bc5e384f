use criterion::{criterion_group, criterion_main, Criterion};

use airvel::harness::{run_montecarlo, SimConfig};
use airvel::observability::{observability_verdict, DEFAULT_QUAD_STEP, DEFAULT_WINDOW};
use airvel::parallel::Execution;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn montecarlo(c: &mut Criterion) {
    let cfg = SimConfig { runs: 8, ..SimConfig::default().with_duration(5.0) };
    let mut group = c.benchmark_group("montecarlo_8x5s");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_function(name, |b| b.iter(|| run_montecarlo(&cfg, mode).unwrap()));
    }
    group.finish();
}

fn observability(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let mut group = c.benchmark_group("observability_sweep_60s");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_function(name, |b| {
            b.iter(|| {
                observability_verdict(
                    &cfg.trajectory,
                    &cfg.probes,
                    &cfg.mag_ref,
                    DEFAULT_WINDOW,
                    DEFAULT_QUAD_STEP,
                    cfg.obs_threshold,
                    mode,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, montecarlo, observability);
criterion_main!(benches);
