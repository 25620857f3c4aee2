//! Step-cost measurement demonstrating that filtering time grows linearly
//! in the number of processed measurements.

use std::time::{Duration, Instant};

use gcv_core::gcv::{gcv_init, gcv_step};
use gcv_core::statespace::TimeInvariantModel;
use nalgebra::{DMatrix, DVector};

use crate::{CliError, Result};

/// Timing summary for a run of `steps` and a run of `2 * steps`.
#[derive(Debug, Clone, Copy)]
pub struct BenchReport {
    pub steps: usize,
    pub ns_per_step: f64,
    pub ns_per_step_double: f64,
    /// Total time at `2 * steps` divided by total time at `steps`.
    pub ratio: f64,
}

fn bench_model() -> TimeInvariantModel {
    let a = DMatrix::from_row_slice(
        3,
        3,
        &[0.9, 0.1, 0.0, 0.0, 0.8, 0.2, 0.1, 0.0, 0.7],
    );
    let c = DVector::from_row_slice(&[1.0, 0.5, -0.3]);
    let q = DMatrix::from_row_slice(
        3,
        3,
        &[0.5, 0.1, 0.0, 0.1, 0.4, 0.1, 0.0, 0.1, 0.3],
    );
    TimeInvariantModel::new(a, c, q, DVector::zeros(3), DMatrix::identity(3, 3), 1.0)
        .expect("benchmark model is valid")
}

fn measurement(k: usize) -> f64 {
    (0.3 * k as f64).sin()
}

fn time_run(model: &TimeInvariantModel, steps: usize) -> Duration {
    let start = Instant::now();
    let mut state = gcv_init(model, measurement(1));
    for k in 2..=steps {
        state = gcv_step(&state, model, measurement(k)).expect("benchmark step");
    }
    let elapsed = start.elapsed();
    std::hint::black_box(&state);
    elapsed
}

fn median_duration(mut samples: Vec<Duration>) -> Duration {
    samples.sort();
    samples[samples.len() / 2]
}

/// Times `steps` and `2 * steps` filter runs, interleaved, and reports the
/// median of three repetitions of each.
pub fn run_bench(steps: usize) -> Result<BenchReport> {
    if steps < 2 {
        return Err(CliError::Config("bench requires at least 2 steps".into()));
    }
    let model = bench_model();
    time_run(&model, (steps / 10).max(2));

    let mut single = Vec::with_capacity(3);
    let mut double = Vec::with_capacity(3);
    for _ in 0..3 {
        single.push(time_run(&model, steps));
        double.push(time_run(&model, 2 * steps));
    }
    let med_single = median_duration(single);
    let med_double = median_duration(double);
    let ns_single = med_single.as_nanos() as f64;
    let ns_double = med_double.as_nanos() as f64;
    Ok(BenchReport {
        steps,
        ns_per_step: ns_single / steps as f64,
        ns_per_step_double: ns_double / (2 * steps) as f64,
        ratio: ns_double / ns_single.max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_bench_reports_positive_times() {
        let report = run_bench(200).unwrap();
        assert!(report.ns_per_step > 0.0);
        assert!(report.ns_per_step_double > 0.0);
        assert!(report.ratio > 0.0);
    }

    #[test]
    fn degenerate_step_count_is_rejected() {
        assert!(run_bench(1).is_err());
    }
}
