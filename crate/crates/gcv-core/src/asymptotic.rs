//! Steady-state analysis for time-invariant models.
//!
//! For constant (A, C, Q, gamma) the filter covariances converge: P_k to the
//! stabilizing solution Pbar of the algebraic Riccati equation and Sigma_k
//! to the solution Sigmabar of a Lyapunov equation in the closed-loop matrix
//! F = A - Kbar C,
//!
//! ```text
//! Pbar     = A Pbar A' + Q - A Pbar C' (C Pbar C' + gamma)^{-1} C Pbar A'
//! Sigmabar = F Sigmabar F' + Kbar Kbar'
//! ```
//!
//! Both are solved here by iterating the corresponding recursions to a fixed
//! point. The stationary gains give a constant-gain GCV filter whose score
//! converges to the exact one, and the degrees-of-freedom rate
//! dof_k / k approaches the smoothing ratio
//! 1 - gamma (C Sigmabar C' + 1)/(C Pbar C' + gamma).

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::gcv::{absorb_score, GcvState};
use crate::statespace::StateSpaceModel;
use crate::{Error, Result};

/// Relative-change stopping tolerance of the fixed-point solvers.
pub const FP_TOL: f64 = 1e-12;
/// Iteration cap of the fixed-point solvers.
pub const FP_MAX_ITERS: usize = 100_000;

/// Steady-state quantities of a time-invariant model.
#[derive(Clone, Debug)]
pub struct StationarySolution {
    /// Stationary prediction covariance.
    pub pbar: DMatrix<f64>,
    /// Stationary covariance sensitivity.
    pub sigmabar: DMatrix<f64>,
    /// Stationary Kalman gain.
    pub kbar: DVector<f64>,
    /// Stationary sensitivity gain.
    pub gbar: DVector<f64>,
    /// Spectral radius of the closed loop A - Kbar C.
    pub spectral_radius: f64,
    /// Limit of dof_k / k.
    pub smoothing_ratio: f64,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let mt = m.transpose();
    *m += mt;
    *m *= 0.5;
}

fn check_system(a: &DMatrix<f64>, c: &DVector<f64>, q: Option<&DMatrix<f64>>) -> Result<usize> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "transition matrix columns",
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
    if let Some(q) = q {
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "process covariance",
                expected: n,
                found: q.nrows().max(q.ncols()),
            });
        }
    }
    Ok(n)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| ComplexField::sqrt(z.re * z.re + z.im * z.im))
        .fold(0.0, f64::max)
}

/// Stationary prediction covariance: fixed point of the Riccati recursion,
/// iterated from P = Q.
pub fn solve_dare(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    q: &DMatrix<f64>,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    check_system(a, c, Some(q))?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument {
            arg: "gamma",
            reason: "noise variance must be positive and finite",
        });
    }
    let mut p = q.clone();
    let mut converged = false;
    for _ in 0..FP_MAX_ITERS {
        let pc = &p * c;
        let d = c.dot(&pc) + gamma;
        let kgain = (a * &pc) / d;
        let f = a - &kgain * c.transpose();
        let mut next = &f * &p * f.transpose() + gamma * (&kgain * kgain.transpose()) + q;
        symmetrize(&mut next);
        let change = (&next - &p).norm();
        p = next;
        if change <= FP_TOL * p.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "algebraic Riccati equation",
            budget: FP_MAX_ITERS,
        });
    }
    // verify the fixed point against the equation itself
    let pc = &p * c;
    let d = c.dot(&pc) + gamma;
    let residual = (a * &p * a.transpose() + q - (a * &pc) * (a * &pc).transpose() / d - &p).norm();
    if residual > 1e-10 * (1.0 + p.norm()) {
        return Err(Error::NoConvergence {
            what: "algebraic Riccati residual",
            budget: FP_MAX_ITERS,
        });
    }
    Ok(p)
}

/// Solution of X = F X F' + M for stable F, iterated from X = M.
pub fn solve_lyapunov(f: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    if f.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "Lyapunov operands",
            expected: n,
            found: f.ncols().max(m.nrows()).max(m.ncols()),
        });
    }
    let rho = spectral_radius(f);
    if !(rho < 1.0) {
        return Err(Error::UnstableClosedLoop {
            spectral_radius: rho,
        });
    }
    let mut x = m.clone();
    let mut converged = false;
    for _ in 0..FP_MAX_ITERS {
        let mut next = f * &x * f.transpose() + m;
        symmetrize(&mut next);
        let change = (&next - &x).norm();
        x = next;
        if change <= FP_TOL * x.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Lyapunov equation",
            budget: FP_MAX_ITERS,
        });
    }
    let residual = (f * &x * f.transpose() + m - &x).norm();
    if residual > 1e-10 * (1.0 + x.norm()) {
        return Err(Error::NoConvergence {
            what: "Lyapunov residual",
            budget: FP_MAX_ITERS,
        });
    }
    Ok(x)
}

fn ratio_from(
    pbar: &DMatrix<f64>,
    sigmabar: &DMatrix<f64>,
    c: &DVector<f64>,
    gamma: f64,
) -> f64 {
    let dbar = c.dot(&(pbar * c)) + gamma;
    let ubar = c.dot(&(sigmabar * c)) + 1.0;
    1.0 - gamma * ubar / dbar
}

/// Limit of dof_k / k for the solved stationary model.
pub fn smoothing_ratio(sol: &StationarySolution, c: &DVector<f64>, gamma: f64) -> f64 {
    ratio_from(&sol.pbar, &sol.sigmabar, c, gamma)
}

/// Solves both stationary equations and packages gains, stability margin and
/// smoothing ratio.
pub fn stationary_gains(
    a: &DMatrix<f64>,
    c: &DVector<f64>,
    q: &DMatrix<f64>,
    gamma: f64,
) -> Result<StationarySolution> {
    let pbar = solve_dare(a, c, q, gamma)?;
    let pc = &pbar * c;
    let dbar = c.dot(&pc) + gamma;
    let kbar = (a * &pc) / dbar;
    let f = a - &kbar * c.transpose();
    let rho = spectral_radius(&f);
    if !(rho < 1.0) {
        return Err(Error::UnstableClosedLoop {
            spectral_radius: rho,
        });
    }
    let sigmabar = solve_lyapunov(&f, &(&kbar * kbar.transpose()))?;
    let sc = &sigmabar * c;
    let ubar = c.dot(&sc) + 1.0;
    let gbar = (a * &sc - &kbar * ubar) / dbar;
    let smoothing_ratio = ratio_from(&pbar, &sigmabar, c, gamma);
    Ok(StationarySolution {
        pbar,
        sigmabar,
        kbar,
        gbar,
        spectral_radius: rho,
        smoothing_ratio,
    })
}

/// Starts the constant-gain filter: the prediction block is pinned at
/// (mu, Pbar, Sigmabar) and y_1 is scored with the stationary coefficients.
pub fn asymptotic_gcv_init(
    model: &impl StateSpaceModel,
    sol: &StationarySolution,
    y1: f64,
) -> GcvState {
    let n = model.state_dim();
    absorb_score(
        model,
        1,
        model.prior_mean(),
        DVector::zeros(n),
        sol.pbar.clone(),
        sol.sigmabar.clone(),
        0.0,
        0.0,
        y1,
    )
}

/// One step of the constant-gain filter: state and sensitivity advance with
/// the frozen gains, the covariances stay at their stationary values, and
/// the score absorbs `y_next` with the stationary coefficients.
pub fn asymptotic_gcv_step(
    state: &GcvState,
    model: &impl StateSpaceModel,
    kbar: &DVector<f64>,
    gbar: &DVector<f64>,
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
    if kbar.len() != n || gbar.len() != n {
        return Err(Error::DimensionMismatch {
            what: "stationary gains",
            expected: n,
            found: kbar.len().min(gbar.len()),
        });
    }
    let k = state.k;
    let a = model.transition(k);
    let c = model.observation(k);
    let e = state.last_y - c.dot(&state.xhat);
    let xhat = &a * &state.xhat + kbar * e;
    let zeta = &a * &state.zeta - kbar * c.dot(&state.zeta) + gbar * e;
    Ok(absorb_score(
        model,
        k + 1,
        xhat,
        zeta,
        state.p.clone(),
        state.sigma.clone(),
        state.dof,
        state.ssr,
        y_next,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcv::{gcv_init, gcv_run, gcv_step};
    use crate::statespace::{
        make_dc_motor_model, spline_process_cov, spline_transition, TimeInvariantModel,
    };
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    const GOLDEN: f64 = 1.618033988749895;
    const INV_SQRT5: f64 = 0.4472135954999579;

    fn mat1(x: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 1, &[x])
    }

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_column_slice(&[x])
    }

    #[test]
    fn dare_stable_system_without_noise() {
        let p = solve_dare(&mat1(0.5), &vec1(1.0), &mat1(0.0), 1.0).unwrap();
        assert_eq!(p[(0, 0)], 0.0);
    }

    #[test]
    fn dare_random_walk_golden_ratio() {
        let p = solve_dare(&mat1(1.0), &vec1(1.0), &mat1(1.0), 1.0).unwrap();
        assert_relative_eq!(p[(0, 0)], GOLDEN, max_relative = 1e-10);
    }

    #[test]
    fn dare_dc_motor_residual() {
        let model = make_dc_motor_model(30.0).unwrap();
        let (a, c, q) = (model.transition(1), model.observation(1), model.process_cov(1));
        let p = solve_dare(&a, &c, &q, 30.0).unwrap();
        let pc = &p * &c;
        let d = c.dot(&pc) + 30.0;
        let residual =
            (&a * &p * a.transpose() + &q - (&a * &pc) * (&a * &pc).transpose() / d - &p).norm();
        assert!(residual < 1e-10 * (1.0 + p.norm()), "residual {residual}");
        let min_eig = p.clone().symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-10 * p.trace());
    }

    #[test]
    fn dare_matches_filter_recursion_limit() {
        let model = make_dc_motor_model(30.0).unwrap();
        let p = solve_dare(
            &model.transition(1),
            &model.observation(1),
            &model.process_cov(1),
            30.0,
        )
        .unwrap();
        let mut state = gcv_init(&model, 0.0);
        for _ in 0..2000 {
            state = gcv_step(&state, &model, 0.0).unwrap();
        }
        assert!((&state.p - &p).norm() < 1e-8 * (1.0 + p.norm()));
    }

    #[test]
    fn lyapunov_zero_dynamics() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let x = solve_lyapunov(&DMatrix::zeros(2, 2), &m).unwrap();
        assert_relative_eq!(x, m, max_relative = 1e-12);
    }

    #[test]
    fn lyapunov_scalar_geometric_series() {
        let x = solve_lyapunov(&mat1(0.5), &mat1(1.0)).unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, max_relative = 1e-11);
    }

    #[test]
    fn lyapunov_rejects_unstable_dynamics() {
        let err = solve_lyapunov(&mat1(1.0), &mat1(1.0)).unwrap_err();
        assert!(matches!(err, Error::UnstableClosedLoop { .. }));
    }

    #[test]
    fn spectral_radius_examples() {
        let d = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, -0.9]);
        assert_relative_eq!(spectral_radius(&d), 0.9, max_relative = 1e-12);
        let (s, c) = (0.6f64, 0.8f64);
        let rot = DMatrix::from_row_slice(2, 2, &[0.8 * c, -0.8 * s, 0.8 * s, 0.8 * c]);
        assert_relative_eq!(spectral_radius(&rot), 0.8, max_relative = 1e-10);
    }

    #[test]
    fn stationary_random_walk_closed_forms() {
        let sol = stationary_gains(&mat1(1.0), &vec1(1.0), &mat1(1.0), 1.0).unwrap();
        assert_relative_eq!(sol.pbar[(0, 0)], GOLDEN, max_relative = 1e-10);
        assert_relative_eq!(sol.kbar[0], 1.0 / GOLDEN, max_relative = 1e-10);
        assert_relative_eq!(sol.sigmabar[(0, 0)], INV_SQRT5, max_relative = 1e-9);
        assert_relative_eq!(sol.smoothing_ratio, INV_SQRT5, max_relative = 1e-9);
        assert!(sol.spectral_radius < 1.0);
    }

    #[test]
    fn stationary_without_noise_is_open_loop() {
        let sol = stationary_gains(&mat1(0.5), &vec1(1.0), &mat1(0.0), 1.0).unwrap();
        assert_eq!(sol.kbar[0], 0.0);
        assert_eq!(sol.gbar[0], 0.0);
        assert_abs_diff_eq!(sol.smoothing_ratio, 0.0);
    }

    #[test]
    fn smoothing_ratio_in_unit_interval() {
        let motor = make_dc_motor_model(30.0).unwrap();
        let sol = stationary_gains(
            &motor.transition(1),
            &motor.observation(1),
            &motor.process_cov(1),
            30.0,
        )
        .unwrap();
        assert!(sol.smoothing_ratio > 0.0 && sol.smoothing_ratio < 1.0);
        assert_relative_eq!(
            smoothing_ratio(&sol, &motor.observation(1), 30.0),
            sol.smoothing_ratio
        );

        let gap = 1.0 / 400.0;
        let sol = stationary_gains(
            &spline_transition(2, gap),
            &DVector::from_column_slice(&[0.0, 0.0, 1.0]),
            &spline_process_cov(2, gap),
            0.1,
        )
        .unwrap();
        assert!(sol.smoothing_ratio > 0.0 && sol.smoothing_ratio < 1.0);
    }

    #[test]
    fn dof_rate_is_exactly_the_ratio() {
        // constant coefficients make dof_k = k * ratio by construction
        let model = make_dc_motor_model(30.0).unwrap();
        let sol = stationary_gains(
            &model.transition(1),
            &model.observation(1),
            &model.process_cov(1),
            30.0,
        )
        .unwrap();
        let mut s = asymptotic_gcv_init(&model, &sol, 1.0);
        assert_relative_eq!(s.dof, sol.smoothing_ratio, max_relative = 1e-12);
        for k in 2..=40 {
            s = asymptotic_gcv_step(&s, &model, &sol.kbar, &sol.gbar, (k as f64).sin()).unwrap();
            assert_relative_eq!(s.dof, k as f64 * sol.smoothing_ratio, max_relative = 1e-12);
        }
    }

    #[test]
    fn exact_filter_started_at_fixed_point_coincides() {
        let sol = stationary_gains(&mat1(1.0), &vec1(1.0), &mat1(1.0), 1.0).unwrap();
        let model = TimeInvariantModel::new(
            mat1(1.0),
            vec1(1.0),
            mat1(1.0),
            vec1(0.0),
            sol.pbar.clone(),
            1.0,
        )
        .unwrap();
        let ys: Vec<f64> = (0..50).map(|k| (k as f64 * 0.7).sin() * 2.0).collect();
        let exact = gcv_run(&model, &ys).unwrap();
        let mut asym = asymptotic_gcv_init(&model, &sol, ys[0]);
        for (k, &y) in ys.iter().enumerate().skip(1) {
            asym = asymptotic_gcv_step(&asym, &model, &sol.kbar, &sol.gbar, y).unwrap();
            let ex = &exact[k];
            assert_relative_eq!(asym.xhat[0], ex.xhat[0], max_relative = 1e-10);
            assert_relative_eq!(ex.p[(0, 0)], sol.pbar[(0, 0)], max_relative = 1e-10);
        }
    }

    #[test]
    fn asymptotic_score_converges_to_exact() {
        let sol = stationary_gains(&mat1(1.0), &vec1(1.0), &mat1(1.0), 1.0).unwrap();
        let model = TimeInvariantModel::new(
            mat1(1.0),
            vec1(1.0),
            mat1(1.0),
            vec1(0.0),
            mat1(0.2),
            1.0,
        )
        .unwrap();
        let ys: Vec<f64> = (0..3000).map(|k| (k as f64 * 0.37).sin() * 1.5).collect();
        let exact = gcv_run(&model, &ys).unwrap();
        let mut asym = asymptotic_gcv_init(&model, &sol, ys[0]);
        for &y in &ys[1..] {
            asym = asymptotic_gcv_step(&asym, &model, &sol.kbar, &sol.gbar, y).unwrap();
        }
        let last = exact.last().unwrap();
        assert_relative_eq!(asym.gcv, last.gcv, max_relative = 1e-3);
    }

    #[test]
    fn open_loop_prediction_without_noise() {
        let sol = stationary_gains(&mat1(0.5), &vec1(1.0), &mat1(0.0), 1.0).unwrap();
        let model = TimeInvariantModel::new(
            mat1(0.5),
            vec1(1.0),
            mat1(0.0),
            vec1(2.0),
            mat1(0.0),
            1.0,
        )
        .unwrap();
        let mut s = asymptotic_gcv_init(&model, &sol, 5.0);
        for _ in 0..4 {
            s = asymptotic_gcv_step(&s, &model, &sol.kbar, &sol.gbar, 1.0).unwrap();
        }
        assert_relative_eq!(s.xhat[0], 2.0 * 0.5f64.powi(4), max_relative = 1e-14);
    }

    #[test]
    fn dimension_checks() {
        assert!(solve_dare(&DMatrix::zeros(2, 3), &vec1(1.0), &mat1(1.0), 1.0).is_err());
        assert!(solve_lyapunov(&mat1(0.5), &DMatrix::zeros(2, 2)).is_err());
        assert!(solve_dare(&mat1(0.5), &vec1(1.0), &mat1(0.0), -1.0).is_err());
    }
}
