//! Classical Kalman prediction and fixed-interval smoothing.
//!
//! The one-step-ahead predictor is the measurement-driven half of the GCV
//! filter; it is exposed separately for consumers that only need state
//! estimates. The smoother runs the standard forward filter followed by a
//! backward (RTS) pass and returns smoothed state means, covariances and
//! outputs. Its defining property, used by the tests, is the batch identity
//! between stacked smoothed outputs and H_t Y_t with H_t the influence
//! matrix of the equivalent regularization problem.
//!
//! Nonzero prior means are handled by centering: the filter and smoother run
//! on measurements minus the propagated prior-mean output trajectory, and
//! the trajectory is added back to the results.

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::oracle::prior_mean_trajectory;
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// One-step-ahead prediction state: (xhat_k, P_k) given y_1..y_{k-1}.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState {
    pub xhat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: usize,
}

/// Smoothed trajectory over a fixed measurement window.
#[derive(Clone, Debug)]
pub struct SmootherOutput {
    /// Smoothed state means xhat_{k|t}, k = 1..t.
    pub means: Vec<DVector<f64>>,
    /// Smoothed state covariances P_{k|t}.
    pub covs: Vec<DMatrix<f64>>,
    /// Smoothed outputs C_k xhat_{k|t}.
    pub outputs: Vec<f64>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let mt = m.transpose();
    *m += mt;
    *m *= 0.5;
}

/// Prediction state before any measurement: the prior.
pub fn kf_init(model: &impl StateSpaceModel) -> KalmanState {
    KalmanState {
        xhat: model.prior_mean(),
        p: model.prior_cov(),
        k: 1,
    }
}

/// Absorbs y_k and predicts step k+1:
/// xhat' = A xhat + K (y - C xhat), P' = (A-KC) P (A-KC)' + gamma K K' + Q.
pub fn kf_step(state: &KalmanState, model: &impl StateSpaceModel, y: f64) -> Result<KalmanState> {
    let n = model.state_dim();
    if state.xhat.len() != n {
        return Err(Error::DimensionMismatch {
            what: "filter state",
            expected: n,
            found: state.xhat.len(),
        });
    }
    let k = state.k;
    if let Some(max) = model.max_steps() {
        if k > max {
            return Err(Error::HorizonExhausted {
                step: k,
                max_steps: max,
            });
        }
    }
    let gamma = model.noise_var();
    let c = model.observation(k);
    let pc = &state.p * &c;
    let d = c.dot(&pc) + gamma;
    if !(d > 0.0) {
        return Err(Error::NonPositiveInnovationVariance { step: k });
    }
    let a = model.transition(k);
    let kgain = (&a * &pc) / d;
    let e = y - c.dot(&state.xhat);
    let xhat = &a * &state.xhat + &kgain * e;
    let f = &a - &kgain * c.transpose();
    let mut p = &f * &state.p * f.transpose()
        + gamma * (&kgain * kgain.transpose())
        + model.process_cov(k);
    symmetrize(&mut p);
    Ok(KalmanState { xhat, p, k: k + 1 })
}

/// Fixed-interval smoother over all measurements.
pub fn rts_smooth(model: &impl StateSpaceModel, measurements: &[f64]) -> Result<SmootherOutput> {
    let t = measurements.len();
    if t == 0 {
        return Err(Error::EmptyInput {
            what: "measurements",
        });
    }
    if let Some(max) = model.max_steps() {
        if t > max {
            return Err(Error::HorizonExhausted {
                step: t,
                max_steps: max,
            });
        }
    }
    let n = model.state_dim();
    let gamma = model.noise_var();
    let means = prior_mean_trajectory(model, t)?;
    let centered: Vec<f64> = measurements
        .iter()
        .enumerate()
        .map(|(i, &y)| y - model.observation(i + 1).dot(&means[i]))
        .collect();

    // forward pass on centered data, keeping predictions and updates
    let mut xpred = DVector::zeros(n);
    let mut ppred = model.prior_cov();
    let mut preds: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(t);
    let mut filts: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(t);
    for (i, &z) in centered.iter().enumerate() {
        let k = i + 1;
        let c = model.observation(k);
        let pc = &ppred * &c;
        let d = c.dot(&pc) + gamma;
        if !(d > 0.0) {
            return Err(Error::NonPositiveInnovationVariance { step: k });
        }
        let kgain = &pc / d;
        let e = z - c.dot(&xpred);
        let xfilt = &xpred + &kgain * e;
        let mut pfilt = &ppred - &kgain * pc.transpose() - &pc * kgain.transpose()
            + d * (&kgain * kgain.transpose());
        symmetrize(&mut pfilt);
        preds.push((xpred.clone(), ppred.clone()));
        if k < t {
            let a = model.transition(k);
            xpred = &a * &xfilt;
            ppred = &a * &pfilt * a.transpose() + model.process_cov(k);
            symmetrize(&mut ppred);
        }
        filts.push((xfilt, pfilt));
    }

    // backward pass
    let mut smoothed: Vec<(DVector<f64>, DMatrix<f64>)> = Vec::with_capacity(t);
    smoothed.push(filts[t - 1].clone());
    for k in (1..t).rev() {
        // step index k (1-based), combining the filtered state at k with the
        // smoothed state at k+1
        let (xfilt, pfilt) = &filts[k - 1];
        let (xpred_next, ppred_next) = &preds[k];
        let a = model.transition(k);
        let chol = Cholesky::new(ppred_next.clone()).ok_or(Error::SingularPrediction { step: k + 1 })?;
        let j = chol.solve(&(&a * pfilt)).transpose();
        let (xs_next, ps_next) = smoothed.last().unwrap();
        let xs = xfilt + &j * (xs_next - xpred_next);
        let mut ps = pfilt + &j * (ps_next - ppred_next) * j.transpose();
        symmetrize(&mut ps);
        smoothed.push((xs, ps));
    }
    smoothed.reverse();

    // add the prior-mean trajectory back
    let mut out_means = Vec::with_capacity(t);
    let mut out_covs = Vec::with_capacity(t);
    let mut outputs = Vec::with_capacity(t);
    for (i, (xs, ps)) in smoothed.into_iter().enumerate() {
        let mean = xs + &means[i];
        outputs.push(model.observation(i + 1).dot(&mean));
        out_means.push(mean);
        out_covs.push(ps);
    }
    Ok(SmootherOutput {
        means: out_means,
        covs: out_covs,
        outputs,
    })
}
