//! Monte Carlo experiment drivers.
//!
//! Each experiment reads a flat key=value config, runs seeded Monte Carlo
//! repetitions (one ChaCha12 stream per run), writes one CSV per run plus a
//! summary CSV, and returns the figures the acceptance checks assert on.

pub mod mismatch;
pub mod spline;
pub mod sysid;

use gcv_core::bank::Bank;
use gcv_core::kalman::rts_smooth;
use gcv_core::statespace::StateSpaceModel;

use crate::{CliError, Result};

/// Percentage fit between a truth sequence and an estimate of it.
///
/// Returns `100 (1 - ||z - zhat|| / ||z - mean(z)||)`; 100 is a perfect
/// reconstruction and values can be arbitrarily negative. Errors when the
/// truth is constant, which would make the normalization vanish.
pub fn fit_metric(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(CliError::Data(format!(
            "fit metric needs sequences of equal length, got {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    if truth.len() < 2 {
        return Err(CliError::Data(
            "fit metric needs at least two samples".into(),
        ));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let spread = truth.iter().map(|z| (z - mean).powi(2)).sum::<f64>().sqrt();
    if spread <= 0.0 {
        return Err(CliError::Data(
            "fit metric is undefined for constant truth".into(),
        ));
    }
    let err = truth
        .iter()
        .zip(estimate)
        .map(|(z, zh)| (z - zh).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

/// Steps at which experiments evaluate their estimates: every `every`-th
/// step, always including the final step, never before step 2 (the fit
/// metric needs two samples).
pub fn eval_times(t: usize, every: usize) -> Vec<usize> {
    let every = every.max(1);
    let mut times: Vec<usize> = (2..=t).filter(|k| k % every == 0).collect();
    if times.last() != Some(&t) && t >= 2 {
        times.push(t);
    }
    times
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-evaluation-time record of the selected noise variance and the fits
/// of the selected and best-in-hindsight estimators.
#[derive(Debug, Clone)]
pub struct SelectionTrace {
    pub times: Vec<usize>,
    pub gamma_gcv: Vec<f64>,
    pub gamma_oracle: Vec<f64>,
    pub fit_gcv: Vec<f64>,
    pub fit_oracle: Vec<f64>,
}

/// Fit of a single model's smoothed output against the truth prefix.
pub(crate) fn smoother_fit<M: StateSpaceModel>(
    model: &M,
    ys: &[f64],
    truth: &[f64],
    upto: usize,
) -> Result<f64> {
    let smoothed = rts_smooth(model, &ys[..upto])?;
    fit_metric(&truth[..upto], &smoothed.outputs)
}

/// Advances an initialized bank through `ys[1..]`, recording at each
/// evaluation time the score-selected noise variance with its smoothed fit
/// and, for reference, the grid point whose smoothed fit is best in
/// hindsight (ties resolved toward the lower grid index).
pub(crate) fn run_gamma_selection<M: StateSpaceModel>(
    bank: &mut Bank<M>,
    ys: &[f64],
    truth: &[f64],
    every: usize,
) -> Result<SelectionTrace> {
    let t = ys.len();
    if truth.len() != t {
        return Err(CliError::Data(
            "truth and measurement lengths differ".into(),
        ));
    }
    if t < 2 {
        return Err(CliError::Data(
            "selection runs need at least two measurements".into(),
        ));
    }
    let times = eval_times(t, every);
    let mut trace = SelectionTrace {
        times: times.clone(),
        gamma_gcv: Vec::with_capacity(times.len()),
        gamma_oracle: Vec::with_capacity(times.len()),
        fit_gcv: Vec::with_capacity(times.len()),
        fit_oracle: Vec::with_capacity(times.len()),
    };
    let mut next_eval = times.iter().copied().peekable();
    for k in 2..=t {
        bank.step(ys[k - 1])?;
        if next_eval.peek() != Some(&k) {
            continue;
        }
        next_eval.next();

        let (assignment, _) = bank.best();
        let gamma_gcv = assignment
            .get("gamma")
            .ok_or_else(|| CliError::Data("bank grid lacks a gamma axis".into()))?;
        let fit_gcv = smoother_fit(&bank.models()[bank.best_index()], ys, truth, k)?;

        let mut best_fit = f64::NEG_INFINITY;
        let mut best_gamma = gamma_gcv;
        for (point, model) in bank.points().iter().zip(bank.models()) {
            let fit = smoother_fit(model, ys, truth, k)?;
            if fit > best_fit {
                best_fit = fit;
                best_gamma = point
                    .get("gamma")
                    .ok_or_else(|| CliError::Data("bank grid lacks a gamma axis".into()))?;
            }
        }

        trace.gamma_gcv.push(gamma_gcv);
        trace.fit_gcv.push(fit_gcv);
        trace.gamma_oracle.push(best_gamma);
        trace.fit_oracle.push(best_fit);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_metric_matches_hand_computation() {
        let truth = [0.0, 1.0, 2.0];
        let fit = fit_metric(&truth, &[0.0; 3]).unwrap();
        let expected = 100.0 * (1.0 - (5.0f64 / 2.0).sqrt());
        assert!((fit - expected).abs() < 1e-12);
        assert_eq!(fit_metric(&truth, &truth).unwrap(), 100.0);
    }

    #[test]
    fn fit_metric_rejects_bad_input() {
        assert!(fit_metric(&[1.0, 2.0], &[1.0]).is_err());
        assert!(fit_metric(&[1.0], &[1.0]).is_err());
        assert!(fit_metric(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn eval_times_include_final_step() {
        assert_eq!(eval_times(25, 10), vec![10, 20, 25]);
        assert_eq!(eval_times(20, 10), vec![10, 20]);
        assert_eq!(eval_times(5, 100), vec![5]);
        assert_eq!(eval_times(4, 1), vec![2, 3, 4]);
    }

    #[test]
    fn median_handles_even_and_odd_lengths() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
