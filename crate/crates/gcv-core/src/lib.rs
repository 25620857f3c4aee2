//! Recursive generalized cross validation (GCV) for linear Gaussian
//! state-space models.
//!
//! For the model
//!
//! ```text
//! x_{k+1} = A_k x_k + w_k,      w_k ~ N(0, Q_k)
//! y_k     = C_k x_k + e_k,      e_k ~ N(0, gamma)
//! x_1     ~ N(mu, P0)
//! ```
//!
//! the smoothed output predictions are a linear function Yhat_t = H_t Y_t of
//! the data, and the GCV score
//!
//! ```text
//! GCV_t = t * S_t / (t - dof_t)^2,
//! dof_t = trace(H_t),   S_t = ||Y_t - Yhat_t||^2
//! ```
//!
//! trades residual fit against effective model complexity. Recomputing the
//! score from scratch costs O(t^3) per new measurement; this crate instead
//! propagates (dof_t, S_t, GCV_t) recursively alongside the Kalman predictor
//! with constant cost per measurement, by carrying two extra sensitivity
//! states: zeta_k = d xhat_k / d gamma and Sigma_k = d P_k / d gamma.
//!
//! Modules:
//! - [`statespace`]: model trait and the concrete builders (spline smoother,
//!   DC motor demo, FIR identification model, stable-spline gram matrix).
//! - [`gcv`]: the recursive GCV filter itself.
//! - [`kalman`]: plain one-step-ahead predictor and fixed-interval smoother.
//! - [`bank`]: a filter bank over a hyperparameter grid with running argmin.
//! - [`asymptotic`]: steady-state solvers (DARE, Lyapunov), stationary gains,
//!   the constant-gain suboptimal filter, and the asymptotic smoothing ratio.
//! - [`oracle`]: O(t^3) batch reference computation of the same scores plus
//!   finite-difference checkers; the ground truth the filter is tested against.
//!
//! The crate is `no_std` (with `alloc`); everything here is pure dense linear
//! algebra. IO, experiment drivers, and the command line live in the companion
//! `gcv-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod asymptotic;
pub mod bank;
mod error;
pub mod gcv;
pub mod kalman;
pub mod oracle;
pub mod statespace;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
