//! Recursive GCV filter.
//!
//! Runs a Kalman predictor augmented with the gamma-sensitivities of its
//! state and covariance, which is enough to update the generalized cross
//! validation score of the underlying smoothing problem in O(1) per
//! measurement:
//!
//! ```text
//! GCV_k = k S_k / (k - dof_k)^2
//! ```
//!
//! where S_k is the sum of squared smoothing residuals and dof_k the trace
//! of the influence matrix, both maintained recursively. A step carries two
//! clocks: the prediction variables (xhat, zeta, P, Sigma) are advanced with
//! step-k system matrices and the innovation of the measurement absorbed at
//! the previous call, after which the score variables (dof, ssr, gcv) absorb
//! the new measurement with step-(k+1) matrices. Initialization scores y_1
//! against the prior, so the two clocks stay one measurement apart
//! throughout.
//!
//! Non-finite measurements are not trapped; they propagate into the score
//! fields (and, from the next step on, the prediction fields) as NaN.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// Full state of the GCV filter after absorbing k measurements.
///
/// The prediction block (xhat, P) is the classical one-step-ahead Kalman
/// prediction given the first k-1 measurements; zeta and Sigma are its
/// derivatives with respect to the noise variance gamma. The score block
/// (dof, ssr, gcv) accounts for all k measurements.
#[derive(Clone, Debug, PartialEq)]
pub struct GcvState {
    /// One-step-ahead state prediction.
    pub xhat: DVector<f64>,
    /// Sensitivity d(xhat)/d(gamma).
    pub zeta: DVector<f64>,
    /// Prediction covariance.
    pub p: DMatrix<f64>,
    /// Sensitivity d(P)/d(gamma).
    pub sigma: DMatrix<f64>,
    /// Equivalent degrees of freedom, in [0, k].
    pub dof: f64,
    /// Sum of squared smoothing residuals.
    pub ssr: f64,
    /// GCV score of the first k measurements.
    pub gcv: f64,
    /// Number of measurements absorbed.
    pub k: usize,
    /// Measurement absorbed at the last call, needed to form the next
    /// innovation.
    pub(crate) last_y: f64,
}

impl GcvState {
    /// The measurement most recently absorbed into the score.
    pub fn last_measurement(&self) -> f64 {
        self.last_y
    }

    /// Filtered (posterior) state estimate given all k absorbed
    /// measurements, obtained by applying the pending measurement update to
    /// the stored prediction.
    pub fn filtered_state(&self, model: &impl StateSpaceModel) -> Result<DVector<f64>> {
        let n = model.state_dim();
        if self.xhat.len() != n {
            return Err(Error::DimensionMismatch {
                what: "filter state",
                expected: n,
                found: self.xhat.len(),
            });
        }
        let c = model.observation(self.k);
        let pc = &self.p * &c;
        let d = c.dot(&pc) + model.noise_var();
        let e = self.last_y - c.dot(&self.xhat);
        Ok(&self.xhat + pc * (e / d))
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 1..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Score update shared by init and step: absorbs `y_new` at step `k_new`
/// given the freshly advanced prediction block.
#[allow(clippy::too_many_arguments)]
pub(crate) fn absorb_score(
    model: &impl StateSpaceModel,
    k_new: usize,
    xhat: DVector<f64>,
    zeta: DVector<f64>,
    p: DMatrix<f64>,
    sigma: DMatrix<f64>,
    dof_prev: f64,
    ssr_prev: f64,
    y_new: f64,
) -> GcvState {
    let gamma = model.noise_var();
    let c = model.observation(k_new);
    let d = c.dot(&(&p * &c)) + gamma;
    let u = c.dot(&(&sigma * &c)) + 1.0;
    let e = y_new - c.dot(&xhat);
    let dof = dof_prev + 1.0 - gamma * u / d;
    let ssr = ssr_prev + gamma * gamma * (u * e * e / (d * d) + 2.0 * c.dot(&zeta) * e / d);
    let t = k_new as f64;
    let gcv = t * ssr / ((t - dof) * (t - dof));
    GcvState {
        xhat,
        zeta,
        p,
        sigma,
        dof,
        ssr,
        gcv,
        k: k_new,
        last_y: y_new,
    }
}

/// Starts the filter on the first measurement. The returned state keeps the
/// prior (mu, P0) as its prediction block and has already scored y_1.
pub fn gcv_init(model: &impl StateSpaceModel, y1: f64) -> GcvState {
    let n = model.state_dim();
    absorb_score(
        model,
        1,
        model.prior_mean(),
        DVector::zeros(n),
        model.prior_cov(),
        DMatrix::zeros(n, n),
        0.0,
        0.0,
        y1,
    )
}

/// Advances the filter by one measurement: prediction block with step-k
/// matrices and the previously absorbed innovation, score block with
/// step-(k+1) matrices and `y_next`.
pub fn gcv_step(
    state: &GcvState,
    model: &impl StateSpaceModel,
    y_next: f64,
) -> Result<GcvState> {
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
        if k + 1 > max {
            return Err(Error::HorizonExhausted {
                step: k + 1,
                max_steps: max,
            });
        }
    }
    let gamma = model.noise_var();
    let c = model.observation(k);
    let pc = &state.p * &c;
    let d = c.dot(&pc) + gamma;
    let sc = &state.sigma * &c;
    let u = c.dot(&sc) + 1.0;
    let e = state.last_y - c.dot(&state.xhat);
    let czeta = c.dot(&state.zeta);

    let (xhat, zeta, p, sigma);
    if model.transition_is_identity() {
        // A_k = I: rank-one covariance updates, O(n^2) per step, done in
        // place with ger to avoid full-matrix temporaries
        let kgain = &pc / d;
        let ggain = (&sc - &kgain * u) / d;
        xhat = &state.xhat + &kgain * e;
        zeta = &state.zeta - &kgain * czeta + &ggain * e;
        // with K = pc/d the update P - K pc' - pc K' + d K K' collapses to a
        // single downdate P - pc pc'/d
        let mut p_next = state.p.clone();
        p_next.ger(-1.0 / d, &pc, &pc, 1.0);
        if !model.process_cov_is_zero() {
            p_next += model.process_cov(k);
        }
        symmetrize(&mut p_next);
        p = p_next;
        // Sigma - K sc' - sc K' + u K K' = Sigma - K w' - w K' for
        // w = sc - (u/2) K
        let w = &sc - &kgain * (0.5 * u);
        let mut sigma_next = state.sigma.clone();
        sigma_next.ger(-1.0, &kgain, &w, 1.0);
        sigma_next.ger(-1.0, &w, &kgain, 1.0);
        symmetrize(&mut sigma_next);
        sigma = sigma_next;
    } else {
        let a = model.transition(k);
        let kgain = (&a * &pc) / d;
        let ggain = (&a * &sc - &kgain * u) / d;
        xhat = &a * &state.xhat + &kgain * e;
        zeta = &a * &state.zeta - &kgain * czeta + &ggain * e;
        let f = &a - &kgain * c.transpose();
        let kkt = &kgain * kgain.transpose();
        let mut p_next = &f * &state.p * f.transpose() + gamma * &kkt + model.process_cov(k);
        symmetrize(&mut p_next);
        p = p_next;
        let mut sigma_next = &f * &state.sigma * f.transpose() + kkt;
        symmetrize(&mut sigma_next);
        sigma = sigma_next;
    }

    Ok(absorb_score(
        model,
        k + 1,
        xhat,
        zeta,
        p,
        sigma,
        state.dof,
        state.ssr,
        y_next,
    ))
}

/// Folds init + step over a measurement sequence; element j (0-based) holds
/// the state after j+1 measurements.
pub fn gcv_run(model: &impl StateSpaceModel, measurements: &[f64]) -> Result<Vec<GcvState>> {
    let (first, rest) = measurements.split_first().ok_or(Error::EmptyInput {
        what: "measurements",
    })?;
    let mut states = Vec::with_capacity(measurements.len());
    states.push(gcv_init(model, *first));
    for &y in rest {
        let next = gcv_step(states.last().unwrap(), model, y)?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::batch_gcv;
    use crate::statespace::{make_fir_model, TimeInvariantModel};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::{DMatrix, DVector};

    fn scalar_model(a: f64, q: f64, p0: f64, mu: f64, gamma: f64) -> TimeInvariantModel {
        TimeInvariantModel::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DVector::from_column_slice(&[1.0]),
            DMatrix::from_row_slice(1, 1, &[q]),
            DVector::from_column_slice(&[mu]),
            DMatrix::from_row_slice(1, 1, &[p0]),
            gamma,
        )
        .unwrap()
    }

    fn random_walk() -> TimeInvariantModel {
        scalar_model(1.0, 1.0, 1.0, 0.0, 1.0)
    }

    #[test]
    fn init_zero_prior_scores_raw_measurement() {
        let model = scalar_model(1.0, 1.0, 0.0, 0.0, 1.0);
        let s = gcv_init(&model, 2.0);
        assert_abs_diff_eq!(s.dof, 0.0);
        assert_relative_eq!(s.ssr, 4.0);
        assert_relative_eq!(s.gcv, 4.0);
        assert_eq!(s.k, 1);
    }

    #[test]
    fn init_balanced_prior_splits_dof() {
        // C P0 C' = gamma gives dof = 1/2
        let model = scalar_model(1.0, 1.0, 3.0, 0.0, 3.0);
        let s = gcv_init(&model, 1.0);
        assert_relative_eq!(s.dof, 0.5);
    }

    #[test]
    fn init_frozen_scalar_example() {
        let model = scalar_model(1.0, 0.5, 3.0, 1.0, 2.0);
        let s = gcv_init(&model, 4.0);
        assert_relative_eq!(s.dof, 0.6, max_relative = 1e-15);
        assert_relative_eq!(s.ssr, 1.44, max_relative = 1e-15);
        assert_relative_eq!(s.gcv, 9.0, max_relative = 1e-12);
        assert_eq!(s.xhat[0], 1.0);
        assert_eq!(s.p[(0, 0)], 3.0);
        assert_eq!(s.zeta[0], 0.0);
        assert_eq!(s.sigma[(0, 0)], 0.0);
    }

    #[test]
    fn init_matches_batch_oracle() {
        let model = scalar_model(1.0, 0.5, 3.0, 1.0, 2.0);
        let s = gcv_init(&model, 4.0);
        let b = batch_gcv(&model, &[4.0]).unwrap();
        assert_relative_eq!(s.dof, b.dof, max_relative = 1e-12);
        assert_relative_eq!(s.ssr, b.ssr, max_relative = 1e-12);
        assert_relative_eq!(s.gcv, b.gcv, max_relative = 1e-12);
    }

    #[test]
    fn first_step_sensitivity_gain_reduces() {
        // Sigma_1 = 0 and zeta_1 = 0 force zeta_2 = -K_1 e_1 / d_1
        let model = scalar_model(0.8, 0.3, 2.0, 0.5, 1.5);
        let s1 = gcv_init(&model, 3.0);
        let s2 = gcv_step(&s1, &model, -1.0).unwrap();
        let d1 = 2.0 + 1.5;
        let k1 = 0.8 * 2.0 / d1;
        let e1 = 3.0 - 0.5;
        assert_relative_eq!(s2.zeta[0], -k1 * e1 / d1, max_relative = 1e-14);
    }

    #[test]
    fn random_walk_three_steps_match_frozen_and_oracle() {
        let model = random_walk();
        let ys = [1.0, 0.0, 2.0];
        let states = gcv_run(&model, &ys).unwrap();
        let last = &states[2];
        assert_relative_eq!(last.dof, 19.0 / 13.0, max_relative = 1e-12);
        assert_relative_eq!(last.ssr, 181.0 / 169.0, max_relative = 1e-12);
        assert_relative_eq!(last.gcv, 1.3575, max_relative = 1e-12);
        let b = batch_gcv(&model, &ys).unwrap();
        assert_relative_eq!(last.gcv, b.gcv, max_relative = 1e-10);
        assert_relative_eq!(last.dof, b.dof, max_relative = 1e-10);
        assert_relative_eq!(last.ssr, b.ssr, max_relative = 1e-10);
    }

    #[test]
    fn run_of_length_one_is_init() {
        let model = random_walk();
        let states = gcv_run(&model, &[0.7]).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0], gcv_init(&model, 0.7));
    }

    #[test]
    fn run_rejects_empty_input() {
        assert!(matches!(
            gcv_run(&random_walk(), &[]),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn long_run_matches_oracle() {
        let model = scalar_model(0.9, 0.4, 1.0, 0.3, 0.7);
        let ys: Vec<f64> = (0..50).map(|k| (k as f64 * 0.37).sin() * 2.0).collect();
        let states = gcv_run(&model, &ys).unwrap();
        let b = batch_gcv(&model, &ys).unwrap();
        let last = states.last().unwrap();
        assert_relative_eq!(last.gcv, b.gcv, max_relative = 1e-8);
        assert_relative_eq!(last.dof, b.dof, max_relative = 1e-8);
        assert_relative_eq!(last.ssr, b.ssr, max_relative = 1e-8);
    }

    #[test]
    fn huge_noise_ignores_data() {
        // gamma -> inf pins the prediction to the prior trajectory, dof -> 0
        // and ssr -> sum of squared centered measurements
        let model = scalar_model(0.9, 0.1, 1.0, 2.0, 1e12);
        let ys = [1.0, 4.0, -2.0, 0.5];
        let states = gcv_run(&model, &ys).unwrap();
        let last = states.last().unwrap();
        assert_abs_diff_eq!(last.dof, 0.0, epsilon = 1e-9);
        let mut mean = 2.0;
        let mut expected = 0.0;
        for y in ys {
            expected += (y - mean) * (y - mean);
            mean *= 0.9;
        }
        assert_relative_eq!(last.ssr, expected, max_relative = 1e-9);
        assert_relative_eq!(states[3].xhat[0], 2.0 * 0.9f64.powi(3), max_relative = 1e-9);
    }

    #[test]
    fn non_finite_measurement_propagates() {
        let model = random_walk();
        let s1 = gcv_init(&model, f64::NAN);
        assert!(s1.ssr.is_nan());
        assert!(s1.gcv.is_nan());
        assert!(s1.dof.is_finite(), "dof is data-independent");
        let s2 = gcv_step(&s1, &model, 1.0).unwrap();
        assert!(s2.xhat[0].is_nan());
    }

    #[test]
    fn identity_fast_path_matches_general_update() {
        // same FIR problem once through the fast path, once as a plain
        // time-invariant model with explicit A = I, Q = 0
        let regressors: Vec<DVector<f64>> = (0..12)
            .map(|k| {
                DVector::from_iterator(3, (0..3).map(|j| ((k * 3 + j) as f64 * 0.7).sin()))
            })
            .collect();
        let fir = make_fir_model(regressors.clone(), 0.8, 3, 0.5).unwrap();
        assert!(fir.transition_is_identity());

        struct SlowFir(crate::statespace::FirModel);
        impl StateSpaceModel for SlowFir {
            fn state_dim(&self) -> usize {
                self.0.state_dim()
            }
            fn transition(&self, k: usize) -> DMatrix<f64> {
                self.0.transition(k)
            }
            fn observation(&self, k: usize) -> DVector<f64> {
                self.0.observation(k)
            }
            fn process_cov(&self, k: usize) -> DMatrix<f64> {
                self.0.process_cov(k)
            }
            fn prior_mean(&self) -> DVector<f64> {
                self.0.prior_mean()
            }
            fn prior_cov(&self) -> DMatrix<f64> {
                self.0.prior_cov()
            }
            fn noise_var(&self) -> f64 {
                self.0.noise_var()
            }
            fn with_noise_var(&self, gamma: f64) -> Self {
                SlowFir(self.0.with_noise_var(gamma))
            }
            fn max_steps(&self) -> Option<usize> {
                self.0.max_steps()
            }
        }
        let slow = SlowFir(fir.clone());
        assert!(!slow.transition_is_identity());

        let ys: Vec<f64> = (0..12).map(|k| (k as f64 * 1.1).cos()).collect();
        let fast_states = gcv_run(&fir, &ys).unwrap();
        let slow_states = gcv_run(&slow, &ys).unwrap();
        for (f, s) in fast_states.iter().zip(&slow_states) {
            assert_relative_eq!(f.gcv, s.gcv, max_relative = 1e-12);
            assert_relative_eq!(f.p, s.p, max_relative = 1e-12);
            assert_relative_eq!(f.sigma, s.sigma, epsilon = 1e-13);
            assert_relative_eq!(f.zeta, s.zeta, epsilon = 1e-13);
        }
    }

    #[test]
    fn horizon_exhaustion_is_an_error() {
        let regressors = vec![DVector::from_column_slice(&[1.0, 0.0])];
        let fir = make_fir_model(regressors, 0.5, 2, 1.0).unwrap();
        let s1 = gcv_init(&fir, 1.0);
        assert!(matches!(
            gcv_step(&s1, &fir, 2.0),
            Err(Error::HorizonExhausted {
                step: 2,
                max_steps: 1
            })
        ));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = random_walk();
        let wide = make_fir_model(
            vec![DVector::from_column_slice(&[1.0, 2.0]); 3],
            0.5,
            2,
            1.0,
        )
        .unwrap();
        let s = gcv_init(&wide, 1.0);
        assert!(matches!(
            gcv_step(&s, &model, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn filtered_state_applies_pending_update() {
        let model = scalar_model(1.0, 0.0, 1.0, 0.0, 1.0);
        let s = gcv_init(&model, 2.0);
        // single measurement, P0 = gamma = 1: posterior mean = y/2
        let f = s.filtered_state(&model).unwrap();
        assert_relative_eq!(f[0], 1.0, max_relative = 1e-15);
    }

    #[test]
    fn score_consistency_identity() {
        let model = scalar_model(0.95, 0.2, 1.0, 0.0, 0.4);
        let ys: Vec<f64> = (0..30).map(|k| ((k * k) as f64 * 0.11).sin()).collect();
        for s in gcv_run(&model, &ys).unwrap() {
            let t = s.k as f64;
            assert_relative_eq!(s.gcv * (t - s.dof) * (t - s.dof), t * s.ssr, max_relative = 1e-12);
            assert!(s.dof >= 0.0 && s.dof <= t);
            assert!(s.ssr >= 0.0);
        }
    }
}
