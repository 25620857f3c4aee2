//! Trajectory simulation for state-space models.
//!
//! Draws are made in a fixed order (initial state, then per step: one
//! measurement draw, then one process-noise draw) so that a seeded run is
//! reproducible across platforms.

use gcv_core::statespace::StateSpaceModel;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::{CliError, Result};

/// Name of the generator recorded in experiment output headers.
pub const RNG_NAME: &str = "chacha12";

/// Returns a ChaCha12 generator for the given seed, positioned on `stream`.
///
/// Experiments use one stream per Monte Carlo run so that runs are
/// independent yet individually reproducible.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Returns a factor `L` with `L L^T = m` for a symmetric PSD matrix.
///
/// Uses the symmetric eigendecomposition and clamps small negative
/// eigenvalues produced by rounding to zero, so it also accepts singular
/// covariances (zero process noise, delta priors).
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// A simulated trajectory with the quantities experiments need.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// State at each step, `x_1 ..= x_t`.
    pub states: Vec<DVector<f64>>,
    /// Noise-free output `C_k x_k` at each step.
    pub noiseless: Vec<f64>,
    /// Measured output, noiseless plus white noise of variance `gamma`.
    pub measurements: Vec<f64>,
}

fn standard_normal_vec(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)))
}

/// Simulates `t` steps of the model, drawing the initial state from the
/// prior and adding measurement noise of variance `model.noise_var()`.
pub fn simulate(model: &impl StateSpaceModel, t: usize, rng: &mut impl Rng) -> Result<Simulation> {
    if t == 0 {
        return Err(CliError::Data("simulation horizon must be positive".into()));
    }
    if let Some(max) = model.max_steps() {
        if t > max {
            return Err(CliError::Core(gcv_core::Error::HorizonExhausted {
                step: t,
                max_steps: max,
            }));
        }
    }
    let n = model.state_dim();
    let noise_std = model.noise_var().sqrt();
    let prior_factor = psd_sqrt(&model.prior_cov());

    let mut states = Vec::with_capacity(t);
    let mut noiseless = Vec::with_capacity(t);
    let mut measurements = Vec::with_capacity(t);

    let mut x = model.prior_mean() + &prior_factor * standard_normal_vec(rng, n);
    for k in 1..=t {
        let z = model.observation(k).dot(&x);
        let y = z + noise_std * rng.sample::<f64, _>(StandardNormal);
        noiseless.push(z);
        measurements.push(y);
        states.push(x.clone());
        if k < t {
            let mut next = model.transition(k) * &x;
            if !model.process_cov_is_zero() {
                next += psd_sqrt(&model.process_cov(k)) * standard_normal_vec(rng, n);
            }
            x = next;
        }
    }
    Ok(Simulation {
        states,
        noiseless,
        measurements,
    })
}

/// Simulates with a ChaCha12 generator seeded from `seed` on stream 0.
pub fn simulate_seeded(
    model: &impl StateSpaceModel,
    t: usize,
    seed: u64,
) -> Result<Simulation> {
    simulate(model, t, &mut seeded_rng(seed, 0))
}
