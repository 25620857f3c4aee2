//! Smoothing-spline regression on irregularly sampled data.
//!
//! Each run draws sampling instants uniformly on [0, 1], observes
//! `exp(sin(8 t))` in white noise, and runs one spline filter per grid value
//! of the noise variance. At each evaluation time the run records the
//! score-selected variance and its smoothed fit next to the grid point whose
//! smoothed fit is best in hindsight.

use std::path::Path;

use gcv_core::bank::{gamma_grid, log_grid, Bank, ParamGrid};
use gcv_core::statespace::{make_spline_model, SamplingSchedule};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::Config;
use crate::csvout::{fmt_f64, CsvTable};
use crate::experiments::{median, run_gamma_selection, SelectionTrace};
use crate::sim::{seeded_rng, RNG_NAME};
use crate::{CliError, Result};

/// Parameters of the spline study. [`SplineConfig::new`] gives the defaults;
/// config files override individual keys.
#[derive(Debug, Clone)]
pub struct SplineConfig {
    pub runs: usize,
    pub samples: usize,
    pub noise_std: f64,
    pub order: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_count: usize,
    pub oracle_every: usize,
    pub prior_scale: f64,
    pub seed: u64,
}

impl SplineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            runs: 20,
            samples: 400,
            noise_std: 0.3,
            order: 2,
            gamma_lo: 1e-2,
            gamma_hi: 1e4,
            gamma_count: 100,
            oracle_every: 10,
            prior_scale: 1e4,
            seed,
        }
    }

    pub fn from_config(mut cfg: Config) -> Result<Self> {
        let base = Self::new(cfg.require("seed")?);
        let out = Self {
            runs: cfg.optional("runs", base.runs)?,
            samples: cfg.optional("samples", base.samples)?,
            noise_std: cfg.optional("noise_std", base.noise_std)?,
            order: cfg.optional("order", base.order)?,
            gamma_lo: cfg.optional("gamma_lo", base.gamma_lo)?,
            gamma_hi: cfg.optional("gamma_hi", base.gamma_hi)?,
            gamma_count: cfg.optional("gamma_count", base.gamma_count)?,
            oracle_every: cfg.optional("oracle_every", base.oracle_every)?,
            prior_scale: cfg.optional("prior_scale", base.prior_scale)?,
            seed: base.seed,
        };
        cfg.finish()?;
        out.validate()?;
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        if self.runs == 0 {
            return bad("runs must be positive");
        }
        if self.samples < 2 {
            return bad("samples must be at least 2");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std must be finite and nonnegative");
        }
        if self.order == 0 {
            return bad("order must be at least 1");
        }
        if !(self.prior_scale.is_finite() && self.prior_scale > 0.0) {
            return bad("prior_scale must be finite and positive");
        }
        Ok(())
    }
}

/// Per-run traces plus the medians the acceptance checks look at.
#[derive(Debug, Clone)]
pub struct SplineSummary {
    pub traces: Vec<SelectionTrace>,
    pub final_fit_gcv: Vec<f64>,
    pub final_fit_oracle: Vec<f64>,
    pub median_final_fit_gcv: f64,
    pub median_final_fit_oracle: f64,
}

fn single_run(cfg: &SplineConfig, run: usize) -> Result<SelectionTrace> {
    let mut rng = seeded_rng(cfg.seed, run as u64);
    let instants = loop {
        let mut ts: Vec<f64> = (0..cfg.samples).map(|_| rng.random()).collect();
        ts.sort_by(f64::total_cmp);
        if ts.windows(2).all(|w| w[0] < w[1]) {
            break ts;
        }
    };
    let truth: Vec<f64> = instants.iter().map(|&t| (8.0 * t).sin().exp()).collect();
    let ys: Vec<f64> = truth
        .iter()
        .map(|&z| z + cfg.noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let schedule = SamplingSchedule::new(instants)?;
    let gammas = log_grid(cfg.gamma_lo, cfg.gamma_hi, cfg.gamma_count)?;
    let prior = DMatrix::identity(cfg.order + 1, cfg.order + 1) * cfg.prior_scale;
    let order = cfg.order;
    let grid = ParamGrid::new(gamma_grid(&gammas), move |point| {
        make_spline_model(order, schedule.clone(), point.require("gamma")?, prior.clone())
    })?;
    let mut bank = Bank::init(grid, ys[0])?;
    run_gamma_selection(&mut bank, &ys, &truth, cfg.oracle_every)
}

fn run_comments(cfg: &SplineConfig, run: usize) -> Vec<String> {
    vec![
        "experiment: spline".into(),
        format!("rng: {RNG_NAME}"),
        format!("seed: {}", cfg.seed),
        format!("run: {run}"),
    ]
}

/// Runs the study and, when `out_dir` is given, writes `run_NNN.csv` per run
/// plus `summary.csv`.
pub fn run_spline(cfg: &SplineConfig, out_dir: Option<&Path>) -> Result<SplineSummary> {
    let traces: Vec<SelectionTrace> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| single_run(cfg, run))
        .collect::<Result<_>>()?;

    let mut final_fit_gcv = Vec::with_capacity(cfg.runs);
    let mut final_fit_oracle = Vec::with_capacity(cfg.runs);
    let mut summary = CsvTable::new([
        "run",
        "final_gamma_gcv",
        "final_gamma_oracle",
        "final_fit_gcv",
        "final_fit_oracle",
    ])?;
    for (run, trace) in traces.iter().enumerate() {
        let last = trace.times.len() - 1;
        final_fit_gcv.push(trace.fit_gcv[last]);
        final_fit_oracle.push(trace.fit_oracle[last]);
        summary.push_row(vec![
            run.to_string(),
            fmt_f64(trace.gamma_gcv[last]),
            fmt_f64(trace.gamma_oracle[last]),
            fmt_f64(trace.fit_gcv[last]),
            fmt_f64(trace.fit_oracle[last]),
        ])?;
        if let Some(dir) = out_dir {
            let mut table = CsvTable::new([
                "t",
                "gamma_gcv",
                "gamma_oracle",
                "fit_gcv",
                "fit_oracle",
            ])?;
            for i in 0..trace.times.len() {
                table.push_row(vec![
                    trace.times[i].to_string(),
                    fmt_f64(trace.gamma_gcv[i]),
                    fmt_f64(trace.gamma_oracle[i]),
                    fmt_f64(trace.fit_gcv[i]),
                    fmt_f64(trace.fit_oracle[i]),
                ])?;
            }
            table.save(&dir.join(format!("run_{run:03}.csv")), &run_comments(cfg, run))?;
        }
    }
    if let Some(dir) = out_dir {
        summary.save(
            &dir.join("summary.csv"),
            &[
                "experiment: spline".into(),
                format!("rng: {RNG_NAME}"),
                format!("seed: {}", cfg.seed),
                format!("runs: {}", cfg.runs),
            ],
        )?;
    }
    Ok(SplineSummary {
        median_final_fit_gcv: median(&final_fit_gcv),
        median_final_fit_oracle: median(&final_fit_oracle),
        traces,
        final_fit_gcv,
        final_fit_oracle,
    })
}
