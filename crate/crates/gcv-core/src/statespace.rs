//! Discrete-time linear Gaussian state-space models with scalar outputs.
//!
//! ```text
//! x_{k+1} = A_k x_k + w_k,      w_k ~ N(0, Q_k)
//! y_k     = C_k x_k + e_k,      e_k ~ N(0, gamma)
//! x_1     ~ N(mu, P0)
//! ```
//!
//! Models are queried by 1-based step index `k`; time-invariant models return
//! the same matrices for every `k`, so filters need no special casing. Three
//! concrete families are provided:
//!
//! - [`SplineModel`]: the m-fold integrated Wiener process sampled on a
//!   (possibly non-uniform) schedule, the state-space form of m-th order
//!   smoothing splines.
//! - the DC motor demo model ([`make_dc_motor_model`]), a fixed 2-state system.
//! - [`FirModel`]: constant state x = impulse response g with per-step
//!   regressor rows as observations and a stable-spline prior on g.

use alloc::sync::Arc;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative tolerance for symmetry and positive-semidefiniteness checks on
/// covariance inputs.
pub const PSD_TOL: f64 = 1e-8;

/// A linear Gaussian state-space model with scalar measurements.
///
/// Step indices are 1-based: `transition(k)` is the matrix A_k mapping x_k to
/// x_{k+1}, and `observation(k)` the row C_k applied to x_k. The observation
/// row is returned as a column of coefficients for convenient dot products.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;

    /// State transition A_k (1-based k).
    fn transition(&self, k: usize) -> DMatrix<f64>;

    /// Observation row C_k, stored as an n-vector of coefficients.
    fn observation(&self, k: usize) -> DVector<f64>;

    /// Process noise covariance Q_k.
    fn process_cov(&self, k: usize) -> DMatrix<f64>;

    /// Prior mean of x_1.
    fn prior_mean(&self) -> DVector<f64>;

    /// Prior covariance of x_1.
    fn prior_cov(&self) -> DMatrix<f64>;

    /// Measurement noise variance gamma (> 0).
    fn noise_var(&self) -> f64;

    /// The same model with the noise variance replaced.
    ///
    /// Prior and process covariances do not depend on gamma, so this is the
    /// knob that filter banks and gamma-derivative checks vary.
    /// Panics if `gamma` is not a positive finite number.
    fn with_noise_var(&self, gamma: f64) -> Self
    where
        Self: Sized;

    /// Number of measurements the model can supply matrices for, if bounded
    /// (sampling schedule or regressor list). `None` means unbounded.
    fn max_steps(&self) -> Option<usize> {
        None
    }

    /// True when A_k is exactly the identity for every k. Filters then use
    /// rank-one covariance updates and skip materializing A_k, which matters
    /// for large FIR states.
    fn transition_is_identity(&self) -> bool {
        false
    }

    /// True when Q_k is exactly zero for every k.
    fn process_cov_is_zero(&self) -> bool {
        false
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument {
            arg: "gamma",
            reason: "noise variance must be positive and finite",
        })
    }
}

fn assert_gamma(gamma: f64) {
    assert!(
        gamma.is_finite() && gamma > 0.0,
        "noise variance must be positive and finite"
    );
}

/// Checks that `m` is square of size `n`, symmetric, and PSD within
/// [`PSD_TOL`] relative to its magnitude.
fn validate_sym_psd(m: &DMatrix<f64>, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            what,
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    let scale = m.amax().max(1.0);
    if !scale.is_finite() {
        return Err(Error::NotSymmetricPsd { what });
    }
    if (m - m.transpose()).amax() > PSD_TOL * scale {
        return Err(Error::NotSymmetricPsd { what });
    }
    let min_eig = m.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -PSD_TOL * scale {
        return Err(Error::NotSymmetricPsd { what });
    }
    Ok(())
}

/// Strictly increasing sampling instants t_1 < t_2 < ... with precomputed
/// gaps T_k = t_{k+1} - t_k.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSchedule {
    instants: Vec<f64>,
    gaps: Vec<f64>,
}

impl SamplingSchedule {
    /// Builds a schedule from raw instants. Rejects empty, non-finite, or
    /// non-increasing sequences.
    pub fn new(instants: Vec<f64>) -> Result<Self> {
        if instants.is_empty() {
            return Err(Error::EmptyInput { what: "timestamps" });
        }
        for (i, t) in instants.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::InvalidArgument {
                    arg: "timestamps",
                    reason: "instants must be finite",
                });
            }
            if i > 0 && *t <= instants[i - 1] {
                return Err(Error::NonIncreasingTimestamps { index: i });
            }
        }
        let gaps = instants.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self { instants, gaps })
    }

    /// Uniform schedule start, start + dt, ..., with `len` instants.
    pub fn uniform(start: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument {
                arg: "dt",
                reason: "sampling period must be positive and finite",
            });
        }
        let instants = (0..len).map(|i| start + dt * i as f64).collect();
        Self::new(instants)
    }

    /// Number of instants (equals the number of measurements supported).
    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    /// Gaps T_k = t_{k+1} - t_k; length is `len() - 1`.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }
}

/// A model whose matrices do not depend on the step index.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeInvariantModel {
    a: DMatrix<f64>,
    c: DVector<f64>,
    q: DMatrix<f64>,
    mu: DVector<f64>,
    p0: DMatrix<f64>,
    gamma: f64,
}

impl TimeInvariantModel {
    pub fn new(
        a: DMatrix<f64>,
        c: DVector<f64>,
        q: DMatrix<f64>,
        mu: DVector<f64>,
        p0: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "transition matrix",
                expected: n,
                found: a.ncols(),
            });
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                what: "observation row",
                expected: n,
                found: c.len(),
            });
        }
        if mu.len() != n {
            return Err(Error::DimensionMismatch {
                what: "prior mean",
                expected: n,
                found: mu.len(),
            });
        }
        validate_sym_psd(&q, n, "process covariance")?;
        validate_sym_psd(&p0, n, "prior covariance")?;
        check_gamma(gamma)?;
        Ok(Self {
            a,
            c,
            q,
            mu,
            p0,
            gamma,
        })
    }

    /// Replaces the prior covariance, keeping everything else.
    pub fn with_prior_cov(mut self, p0: DMatrix<f64>) -> Result<Self> {
        validate_sym_psd(&p0, self.a.nrows(), "prior covariance")?;
        self.p0 = p0;
        Ok(self)
    }
}

impl StateSpaceModel for TimeInvariantModel {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn transition(&self, _k: usize) -> DMatrix<f64> {
        self.a.clone()
    }

    fn observation(&self, _k: usize) -> DVector<f64> {
        self.c.clone()
    }

    fn process_cov(&self, _k: usize) -> DMatrix<f64> {
        self.q.clone()
    }

    fn prior_mean(&self) -> DVector<f64> {
        self.mu.clone()
    }

    fn prior_cov(&self) -> DMatrix<f64> {
        self.p0.clone()
    }

    fn noise_var(&self) -> f64 {
        self.gamma
    }

    fn with_noise_var(&self, gamma: f64) -> Self {
        assert_gamma(gamma);
        Self {
            gamma,
            ..self.clone()
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Powers x^0, x^1, ..., x^up_to by sequential multiplication.
fn powers(x: f64, up_to: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(up_to + 1);
    p.push(1.0);
    for i in 1..=up_to {
        p.push(p[i - 1] * x);
    }
    p
}

/// Transition matrix of the m-fold integrated Wiener process over a gap T.
///
/// State ordering x = (f^(m), ..., f', f), so A is lower triangular with
/// [A]_ij = T^(i-j)/(i-j)! for i >= j (1-based) and the observation row
/// (0, ..., 0, 1) picks the signal value f.
pub fn spline_transition(order: usize, gap: f64) -> DMatrix<f64> {
    let n = order + 1;
    let pow = powers(gap, order);
    DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            pow[i - j] / factorial(i - j)
        } else {
            0.0
        }
    })
}

/// Process covariance of the m-fold integrated Wiener process over a gap T:
/// [Q]_ij = T^(i+j-1) / ((i-1)!(j-1)!(i+j-1)), 1-based.
pub fn spline_process_cov(order: usize, gap: f64) -> DMatrix<f64> {
    let n = order + 1;
    let pow = powers(gap, 2 * order + 1);
    DMatrix::from_fn(n, n, |i, j| {
        // shift to the 1-based formula
        let (i, j) = (i + 1, j + 1);
        pow[i + j - 1] / (factorial(i - 1) * factorial(j - 1) * (i + j - 1) as f64)
    })
}

/// The m-th order smoothing-spline model on a sampling schedule: state
/// dimension m+1, matrices depending on the gap T_k at each step.
#[derive(Clone, Debug)]
pub struct SplineModel {
    order: usize,
    schedule: SamplingSchedule,
    p0: DMatrix<f64>,
    gamma: f64,
}

impl SplineModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn schedule(&self) -> &SamplingSchedule {
        &self.schedule
    }

    fn gap(&self, k: usize) -> f64 {
        *self
            .schedule
            .gaps()
            .get(k - 1)
            .expect("spline schedule exhausted; check max_steps before stepping")
    }
}

/// Builds the spline model of order `order` (state dimension order+1).
///
/// `prior_cov` is the covariance of x_1 = (f^(m)(t_1), ..., f(t_1)).
pub fn make_spline_model(
    order: usize,
    schedule: SamplingSchedule,
    gamma: f64,
    prior_cov: DMatrix<f64>,
) -> Result<SplineModel> {
    if order == 0 {
        return Err(Error::InvalidArgument {
            arg: "order",
            reason: "spline order must be at least 1",
        });
    }
    check_gamma(gamma)?;
    validate_sym_psd(&prior_cov, order + 1, "prior covariance")?;
    Ok(SplineModel {
        order,
        schedule,
        p0: prior_cov,
        gamma,
    })
}

impl StateSpaceModel for SplineModel {
    fn state_dim(&self) -> usize {
        self.order + 1
    }

    fn transition(&self, k: usize) -> DMatrix<f64> {
        spline_transition(self.order, self.gap(k))
    }

    fn observation(&self, _k: usize) -> DVector<f64> {
        let mut c = DVector::zeros(self.order + 1);
        c[self.order] = 1.0;
        c
    }

    fn process_cov(&self, k: usize) -> DMatrix<f64> {
        spline_process_cov(self.order, self.gap(k))
    }

    fn prior_mean(&self) -> DVector<f64> {
        DVector::zeros(self.order + 1)
    }

    fn prior_cov(&self) -> DMatrix<f64> {
        self.p0.clone()
    }

    fn noise_var(&self) -> f64 {
        self.gamma
    }

    fn with_noise_var(&self, gamma: f64) -> Self {
        assert_gamma(gamma);
        Self {
            gamma,
            ..self.clone()
        }
    }

    fn max_steps(&self) -> Option<usize> {
        Some(self.schedule.len())
    }
}

/// DC motor demo model: A = [[0.7, 0], [0.1, 1]], C = [0, 1], Q = b b' with
/// b = (11.81, 0.625)', prior mean 0, prior covariance identity (replace via
/// [`TimeInvariantModel::with_prior_cov`] if needed).
pub fn make_dc_motor_model(gamma: f64) -> Result<TimeInvariantModel> {
    let b = DVector::from_column_slice(&[11.81, 0.625]);
    dc_motor(gamma, &b * b.transpose())
}

/// DC motor with the deliberately wrong transition covariance
/// Q~ = b b' + diag(0, 100) used by the model-mismatch experiment.
pub fn make_dc_motor_model_mismatched(gamma: f64) -> Result<TimeInvariantModel> {
    let b = DVector::from_column_slice(&[11.81, 0.625]);
    let mut q = &b * b.transpose();
    q[(1, 1)] += 100.0;
    dc_motor(gamma, q)
}

fn dc_motor(gamma: f64, q: DMatrix<f64>) -> Result<TimeInvariantModel> {
    TimeInvariantModel::new(
        DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.1, 1.0]),
        DVector::from_column_slice(&[0.0, 1.0]),
        q,
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        gamma,
    )
}

/// First-order stable-spline gram matrix [P]_ij = alpha^max(i,j) (1-based),
/// the prior covariance of an exponentially decaying impulse response.
pub fn stable_spline_gram(alpha: f64, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidArgument {
            arg: "m",
            reason: "gram dimension must be at least 1",
        });
    }
    if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
        return Err(Error::InvalidArgument {
            arg: "alpha",
            reason: "must lie in [0, 1)",
        });
    }
    let pow = powers(alpha, m);
    Ok(DMatrix::from_fn(m, m, |i, j| pow[i.max(j) + 1]))
}

/// FIR identification model: the state is the (constant) impulse response g,
/// observed through per-step regressor rows, with a stable-spline prior.
///
/// Transition is exactly the identity and process covariance exactly zero.
/// Regressors and prior are shared (`Arc`), so cloning the model for a filter
/// bank is cheap.
#[derive(Clone, Debug)]
pub struct FirModel {
    rows: Arc<Vec<DVector<f64>>>,
    p0: Arc<DMatrix<f64>>,
    gamma: f64,
}

impl FirModel {
    /// Assembles a model from pre-shared regressors and prior, validating
    /// dimensions only (the gram builder already guarantees PSD).
    pub fn from_parts(
        rows: Arc<Vec<DVector<f64>>>,
        p0: Arc<DMatrix<f64>>,
        gamma: f64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput { what: "regressors" });
        }
        let m = p0.nrows();
        if p0.ncols() != m {
            return Err(Error::DimensionMismatch {
                what: "prior covariance",
                expected: m,
                found: p0.ncols(),
            });
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::RegressorLengthMismatch {
                    index: i,
                    expected: m,
                    found: r.len(),
                });
            }
        }
        check_gamma(gamma)?;
        Ok(Self { rows, p0, gamma })
    }

    pub fn regressors(&self) -> &[DVector<f64>] {
        &self.rows
    }
}

/// Builds the FIR model with P0 = [`stable_spline_gram`]`(alpha, fir_length)`.
pub fn make_fir_model(
    regressors: Vec<DVector<f64>>,
    alpha: f64,
    fir_length: usize,
    gamma: f64,
) -> Result<FirModel> {
    for (i, r) in regressors.iter().enumerate() {
        if r.len() != fir_length {
            return Err(Error::RegressorLengthMismatch {
                index: i,
                expected: fir_length,
                found: r.len(),
            });
        }
    }
    let p0 = stable_spline_gram(alpha, fir_length)?;
    FirModel::from_parts(Arc::new(regressors), Arc::new(p0), gamma)
}

impl StateSpaceModel for FirModel {
    fn state_dim(&self) -> usize {
        self.p0.nrows()
    }

    fn transition(&self, _k: usize) -> DMatrix<f64> {
        DMatrix::identity(self.state_dim(), self.state_dim())
    }

    fn observation(&self, k: usize) -> DVector<f64> {
        self.rows
            .get(k - 1)
            .expect("regressor list exhausted; check max_steps before stepping")
            .clone()
    }

    fn process_cov(&self, _k: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim(), self.state_dim())
    }

    fn prior_mean(&self) -> DVector<f64> {
        DVector::zeros(self.state_dim())
    }

    fn prior_cov(&self) -> DMatrix<f64> {
        (*self.p0).clone()
    }

    fn noise_var(&self) -> f64 {
        self.gamma
    }

    fn with_noise_var(&self, gamma: f64) -> Self {
        assert_gamma(gamma);
        Self {
            rows: Arc::clone(&self.rows),
            p0: Arc::clone(&self.p0),
            gamma,
        }
    }

    fn max_steps(&self) -> Option<usize> {
        Some(self.rows.len())
    }

    fn transition_is_identity(&self) -> bool {
        true
    }

    fn process_cov_is_zero(&self) -> bool {
        true
    }
}
