//! Self-check batteries comparing the recursion against its batch oracle
//! and checking the derivative identities by finite differences.

use gcv_core::asymptotic::spectral_radius;
use gcv_core::gcv::gcv_run;
use gcv_core::oracle::{batch_gcv, fd_gamma_checks};
use gcv_core::statespace::TimeInvariantModel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::sim::{seeded_rng, simulate};
use crate::Result;

/// Relative tolerance for recursion-versus-batch agreement.
pub const ORACLE_TOL: f64 = 1e-8;
/// Relative tolerance for the finite-difference identity checks.
pub const FD_TOL: f64 = 1e-4;
/// Relative step used in the finite-difference checks.
pub const FD_STEP: f64 = 1e-5;

fn normal_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)))
}

/// Draws a random time-invariant model: dimension 1 to 4, transition scaled
/// to a spectral radius in [0.3, 0.95], full-rank covariances, and noise
/// variance log-uniform in [0.1, 10].
pub fn random_model(rng: &mut impl Rng) -> TimeInvariantModel {
    let n = rng.random_range(1..=4);
    let mut a = normal_matrix(rng, n, n);
    let rho = spectral_radius(&a);
    let target = 0.3 + 0.65 * rng.random::<f64>();
    if rho > 1e-12 {
        a *= target / rho;
    }
    let c = loop {
        let c = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if c.norm() > 1e-6 {
            break c;
        }
    };
    let mq = normal_matrix(rng, n, n);
    let q = &mq * mq.transpose() / n as f64;
    let mp = normal_matrix(rng, n, n);
    let p0 = &mp * mp.transpose() / n as f64;
    let mu = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let gamma = 10f64.powf(rng.random::<f64>() * 2.0 - 1.0);
    TimeInvariantModel::new(a, c, q, mu, p0, gamma).expect("random model is valid by construction")
}

/// Worst relative errors between the recursion and the batch route.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleErrors {
    pub gcv: f64,
    pub dof: f64,
    pub ssr: f64,
}

impl OracleErrors {
    pub fn max(&self) -> f64 {
        self.gcv.max(self.dof).max(self.ssr)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-10)
}

/// Runs `trials` random models for `horizon` steps and compares the final
/// score, degrees of freedom, and residual sum against the batch oracle.
pub fn oracle_battery(trials: usize, horizon: usize, seed: u64) -> Result<OracleErrors> {
    let mut rng = seeded_rng(seed, 0);
    let mut worst = OracleErrors::default();
    for _ in 0..trials {
        let model = random_model(&mut rng);
        let sim = simulate(&model, horizon, &mut rng)?;
        let states = gcv_run(&model, &sim.measurements)?;
        let last = states.last().expect("nonempty run");
        let batch = batch_gcv(&model, &sim.measurements)?;
        worst.gcv = worst.gcv.max(rel(last.gcv, batch.gcv));
        worst.dof = worst.dof.max(rel(last.dof, batch.dof));
        worst.ssr = worst.ssr.max(rel(last.ssr, batch.ssr));
    }
    Ok(worst)
}

/// Worst relative finite-difference errors over a battery of random models.
#[derive(Debug, Clone, Copy, Default)]
pub struct FdErrors {
    pub dof_identity: f64,
    pub ssr_identity: f64,
    pub sigma: f64,
    pub zeta: f64,
}

impl FdErrors {
    pub fn max(&self) -> f64 {
        self.dof_identity
            .max(self.ssr_identity)
            .max(self.sigma)
            .max(self.zeta)
    }
}

/// Checks the noise-variance derivative identities on `trials` random
/// models by central finite differences with relative step [`FD_STEP`].
pub fn fd_battery(trials: usize, horizon: usize, seed: u64) -> Result<FdErrors> {
    let mut rng = seeded_rng(seed, 1);
    let mut worst = FdErrors::default();
    for _ in 0..trials {
        let model = random_model(&mut rng);
        let sim = simulate(&model, horizon, &mut rng)?;
        let report = fd_gamma_checks(&model, &sim.measurements, FD_STEP)?;
        worst.dof_identity = worst.dof_identity.max(report.dof_identity);
        worst.ssr_identity = worst.ssr_identity.max(report.ssr_identity);
        worst.sigma = worst.sigma.max(report.sigma_fd);
        worst.zeta = worst.zeta.max(report.zeta_fd);
    }
    Ok(worst)
}

/// Combined report for the `verify` subcommand.
#[derive(Debug, Clone, Copy)]
pub struct VerifyReport {
    pub oracle_trials: usize,
    pub fd_trials: usize,
    pub oracle: OracleErrors,
    pub fd: FdErrors,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.oracle.max() < ORACLE_TOL && self.fd.max() < FD_TOL
    }
}

/// Runs both batteries. The finite-difference battery uses a fifth of the
/// trials (at least one) on shorter horizons, since each trial filters the
/// data several times.
pub fn run_verification(trials: usize, seed: u64) -> Result<VerifyReport> {
    let oracle_trials = trials.max(1);
    let fd_trials = (trials / 5).max(1);
    Ok(VerifyReport {
        oracle_trials,
        fd_trials,
        oracle: oracle_battery(oracle_trials, 50, seed)?,
        fd: fd_battery(fd_trials, 20, seed)?,
    })
}
