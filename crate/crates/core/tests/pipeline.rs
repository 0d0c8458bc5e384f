mod common;

use airvel::dynamics::truth_state;
use airvel::harness::output::{read_trace, write_trace};
use airvel::harness::{load_config, run_montecarlo, run_single, HarnessError, SimConfig};
use airvel::observability::phi_blocks;
use airvel::parallel::Execution;
use airvel::sensors::{make_schedule, read_sensor_log, write_sensor_log, SensorStreams, SensorSuite};

use common::{rel_frobenius, rk4_transition};

fn short_config(duration: f64) -> SimConfig {
    SimConfig::default().with_duration(duration)
}

#[test]
fn config_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("flight.cfg");
    std::fs::write(&path, "duration = 10\nruns = 4\nseed = 11\nq_pitot = [[25]]\n").unwrap();
    let cfg = load_config(&path).unwrap();
    assert_eq!(cfg.duration, 10.0);
    assert_eq!(cfg.runs, 4);
    assert_eq!(cfg.base_seed, 11);

    std::fs::write(&path, "duration = 10\nruns = 4\nruns = 5\n").unwrap();
    assert!(matches!(load_config(&path), Err(HarnessError::Parse { line: 3, .. })));
    assert!(matches!(load_config(&tmp.path().join("missing.cfg")), Err(HarnessError::Io(_))));
}

#[test]
fn trace_survives_a_csv_round_trip() {
    let run = run_single(&short_config(1.0), 0).unwrap();
    let mut buf = Vec::new();
    write_trace(&run.metrics, &mut buf).unwrap();
    let back = read_trace(buf.as_slice()).unwrap();
    assert_eq!(back, run.metrics);
}

#[test]
fn sensor_log_survives_a_csv_round_trip() {
    let cfg = short_config(0.5);
    let schedule = make_schedule(&cfg.rates, cfg.duration).unwrap();
    let suite = SensorSuite { probes: cfg.probes.clone(), mag_ref: cfg.mag_ref, noise: cfg.noise.clone() };
    let mut streams = SensorStreams::new(3, 0);
    let ticks: Vec<_> = schedule
        .iter()
        .map(|tick| {
            let truth = truth_state(&cfg.trajectory, tick.t).unwrap();
            let inputs = airvel::dynamics::truth_inputs(&cfg.trajectory, tick.t).unwrap();
            suite.measure(tick, &truth, &inputs, &mut streams)
        })
        .collect();
    let mut buf = Vec::new();
    write_sensor_log(&ticks, &mut buf).unwrap();
    assert_eq!(read_sensor_log(buf.as_slice()).unwrap(), ticks);
}

#[test]
fn monte_carlo_is_independent_of_execution_mode() {
    let mut cfg = short_config(3.0);
    cfg.runs = 4;
    let (a, ra) = run_montecarlo(&cfg, Execution::Parallel).unwrap();
    let (b, rb) = run_montecarlo(&cfg, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.metrics, y.metrics);
    }
}

#[test]
fn transition_matrix_matches_integration_on_short_windows() {
    let spec = short_config(10.0).trajectory;
    for (tau, t) in [(0.0, 0.5), (1.25, 3.0), (7.0, 10.0)] {
        let closed = phi_blocks(&spec, t, tau).unwrap().full();
        let numeric = rk4_transition(&spec, tau, t, 1e-3);
        assert!(rel_frobenius(&closed, &numeric) < 1e-9);
    }
}
