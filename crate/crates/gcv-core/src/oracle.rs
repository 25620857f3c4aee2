//! Batch reference computation of the GCV ingredients, plus
//! finite-difference checkers.
//!
//! For t measurements, stack the states X_t = (x_1, ..., x_t) and outputs
//! Y_t = (y_1, ..., y_t). With W_t = Var(X_t) and O_t = blockdiag(C_1..C_t),
//!
//! ```text
//! V_t   = O_t W_t O_t' + gamma I        (output covariance)
//! H_t   = I - gamma V_t^{-1}            (influence matrix)
//! Yhat  = H_t Y_t                       (+ prior-mean offset)
//! dof_t = trace(H_t)
//! S_t   = ||Y_t - Yhat_t||^2
//! GCV_t = t S_t / (t - dof_t)^2
//! ```
//!
//! Everything is O(t^3) and exists as ground truth for the recursive filter;
//! cap t around 200 in test suites. With a nonzero prior mean, measurements
//! are centered on the propagated prior-mean output trajectory C_k m_k
//! (m_1 = mu, m_{k+1} = A_k m_k) before applying H, and the offset is added
//! back to Yhat; the smoother uses the same convention.

use alloc::vec::Vec;
use nalgebra::{Cholesky, ComplexField, DMatrix, DVector};

use crate::gcv::gcv_run;
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// Everything the batch route computes for one data prefix.
#[derive(Clone, Debug)]
pub struct BatchGcvResult {
    /// nt x nt stacked state covariance W_t.
    pub w: DMatrix<f64>,
    /// t x t output covariance V_t.
    pub v: DMatrix<f64>,
    /// t x t influence matrix H_t.
    pub h: DMatrix<f64>,
    /// Smoothed output predictions Yhat_t (prior-mean offset included).
    pub yhat: DVector<f64>,
    pub dof: f64,
    pub ssr: f64,
    pub gcv: f64,
}

fn check_horizon(model: &impl StateSpaceModel, t: usize) -> Result<()> {
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
    Ok(())
}

/// Prior-mean state trajectory m_1 = mu, m_{k+1} = A_k m_k, k = 1..t.
pub fn prior_mean_trajectory(model: &impl StateSpaceModel, t: usize) -> Result<Vec<DVector<f64>>> {
    check_horizon(model, t)?;
    let mut ms = Vec::with_capacity(t);
    ms.push(model.prior_mean());
    for k in 1..t {
        let next = model.transition(k) * &ms[k - 1];
        ms.push(next);
    }
    Ok(ms)
}

/// Prior-mean output trajectory (C_1 m_1, ..., C_t m_t).
pub fn prior_output_trajectory(model: &impl StateSpaceModel, t: usize) -> Result<DVector<f64>> {
    let ms = prior_mean_trajectory(model, t)?;
    Ok(DVector::from_iterator(
        t,
        ms.iter()
            .enumerate()
            .map(|(i, m)| model.observation(i + 1).dot(m)),
    ))
}

/// Stacked state covariance W_t, built block-recursively:
/// Var(x_1) = P0, Var(x_{k+1}) = A_k Var(x_k) A_k' + Q_k, and
/// Cov(x_{i+1}, x_j) = A_i Cov(x_i, x_j) for j <= i.
pub fn batch_state_cov(model: &impl StateSpaceModel, t: usize) -> Result<DMatrix<f64>> {
    check_horizon(model, t)?;
    let n = model.state_dim();
    let mut w = DMatrix::zeros(n * t, n * t);
    w.view_mut((0, 0), (n, n)).copy_from(&model.prior_cov());
    for i in 1..t {
        let a = model.transition(i);
        let prev = w.view((n * (i - 1), n * (i - 1)), (n, n)).into_owned();
        let mut diag = &a * prev * a.transpose() + model.process_cov(i);
        diag = (&diag + diag.transpose()) * 0.5;
        w.view_mut((n * i, n * i), (n, n)).copy_from(&diag);
        for j in 0..i {
            let cross = w.view((n * (i - 1), n * j), (n, n)).into_owned();
            let block = &a * cross;
            w.view_mut((n * i, n * j), (n, n)).copy_from(&block);
            w.view_mut((n * j, n * i), (n, n))
                .copy_from(&block.transpose());
        }
    }
    Ok(w)
}

/// O_t W_t O_t' without the noise term: entry (i, j) = C_i W_ij C_j'.
fn stacked_output_cov(model: &impl StateSpaceModel, w: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let n = model.state_dim();
    let cs: Vec<DVector<f64>> = (1..=t).map(|k| model.observation(k)).collect();
    let mut owo = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..=i {
            let block = w.view((n * i, n * j), (n, n));
            let val = cs[i].dot(&(block * &cs[j]));
            owo[(i, j)] = val;
            owo[(j, i)] = val;
        }
    }
    owo
}

/// Output covariance V_t = O_t W_t O_t' + gamma I.
pub fn output_cov(model: &impl StateSpaceModel, t: usize) -> Result<DMatrix<f64>> {
    let w = batch_state_cov(model, t)?;
    let mut v = stacked_output_cov(model, &w, t);
    for i in 0..t {
        v[(i, i)] += model.noise_var();
    }
    Ok(v)
}

/// Batch GCV evaluation over the full measurement prefix.
pub fn batch_gcv(model: &impl StateSpaceModel, measurements: &[f64]) -> Result<BatchGcvResult> {
    let t = measurements.len();
    let w = batch_state_cov(model, t)?;
    let gamma = model.noise_var();
    let mut v = stacked_output_cov(model, &w, t);
    for i in 0..t {
        v[(i, i)] += gamma;
    }
    let chol = Cholesky::new(v.clone()).ok_or(Error::FactorizationFailed {
        what: "output covariance V",
    })?;
    let vinv = chol.inverse();
    let h = DMatrix::identity(t, t) - gamma * &vinv;
    let dof = h.trace();

    let mean_out = prior_output_trajectory(model, t)?;
    let y = DVector::from_column_slice(measurements);
    let z = &y - &mean_out;
    // Y - Yhat = gamma V^{-1} (Y - mean), the identity behind H = I - gamma V^{-1}
    let resid = gamma * (&vinv * &z);
    let ssr = resid.norm_squared();
    let denom = t as f64 - dof;
    if denom < 1e-12 {
        return Err(Error::DegenerateScore { t, dof });
    }
    let gcv = t as f64 * ssr / (denom * denom);
    let yhat = mean_out + &h * z;
    Ok(BatchGcvResult {
        w,
        v,
        h,
        yhat,
        dof,
        ssr,
        gcv,
    })
}

/// log det V_t and the quadratic form z' V_t^{-1} z on centered data, the two
/// gamma-differentiable quantities of the score identities.
fn logdet_and_quad(model: &impl StateSpaceModel, measurements: &[f64]) -> Result<(f64, f64)> {
    let t = measurements.len();
    let v = output_cov(model, t)?;
    let chol = Cholesky::new(v).ok_or(Error::FactorizationFailed {
        what: "output covariance V",
    })?;
    let logdet = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|&d| ComplexField::ln(d))
            .sum::<f64>();
    let z = DVector::from_column_slice(measurements) - prior_output_trajectory(model, t)?;
    let quad = z.dot(&chol.solve(&z));
    Ok((logdet, quad))
}

/// Relative errors of the four derivative identities, checked by central
/// finite differences in gamma.
#[derive(Clone, Copy, Debug)]
pub struct FdReport {
    /// dof_t vs. t - gamma d(log det V_t)/d gamma.
    pub dof_identity: f64,
    /// S_t vs. -gamma^2 d(Y' V^{-1} Y)/d gamma.
    pub ssr_identity: f64,
    /// Sigma_t vs. central difference of P_t (Frobenius, relative).
    pub sigma_fd: f64,
    /// zeta_t vs. central difference of xhat_t (Euclidean, relative).
    pub zeta_fd: f64,
}

impl FdReport {
    /// Worst of the four relative errors.
    pub fn max(&self) -> f64 {
        self.dof_identity
            .max(self.ssr_identity)
            .max(self.sigma_fd)
            .max(self.zeta_fd)
    }
}

fn rel_scalar(reference: f64, candidate: f64) -> f64 {
    (candidate - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}

/// Runs all four finite-difference checks at relative step `h_rel`
/// (absolute step h_rel * gamma).
pub fn fd_gamma_checks<M: StateSpaceModel>(
    model: &M,
    measurements: &[f64],
    h_rel: f64,
) -> Result<FdReport> {
    if !(h_rel.is_finite() && h_rel > 0.0 && h_rel < 1.0) {
        return Err(Error::InvalidArgument {
            arg: "h_rel",
            reason: "relative step must lie in (0, 1)",
        });
    }
    let t = measurements.len();
    let gamma = model.noise_var();
    let h = h_rel * gamma;
    let base = batch_gcv(model, measurements)?;
    let states = gcv_run(model, measurements)?;
    let last = states.last().expect("nonempty run");

    let hi = model.with_noise_var(gamma + h);
    let lo = model.with_noise_var(gamma - h);
    let (ld_hi, quad_hi) = logdet_and_quad(&hi, measurements)?;
    let (ld_lo, quad_lo) = logdet_and_quad(&lo, measurements)?;
    let dof_fd = t as f64 - gamma * (ld_hi - ld_lo) / (2.0 * h);
    let ssr_fd = -gamma * gamma * (quad_hi - quad_lo) / (2.0 * h);

    let run_hi = gcv_run(&hi, measurements)?;
    let run_lo = gcv_run(&lo, measurements)?;
    let (end_hi, end_lo) = (run_hi.last().unwrap(), run_lo.last().unwrap());
    let p_fd = (&end_hi.p - &end_lo.p) / (2.0 * h);
    let x_fd = (&end_hi.xhat - &end_lo.xhat) / (2.0 * h);
    let sigma_fd = (&p_fd - &last.sigma).norm() / last.sigma.norm().max(f64::MIN_POSITIVE);
    let zeta_fd = (&x_fd - &last.zeta).norm() / last.zeta.norm().max(f64::MIN_POSITIVE);

    Ok(FdReport {
        dof_identity: rel_scalar(base.dof, dof_fd),
        ssr_identity: rel_scalar(base.ssr, ssr_fd),
        sigma_fd,
        zeta_fd,
    })
}
