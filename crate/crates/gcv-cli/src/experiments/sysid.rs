//! Impulse-response identification with a bank of FIR filters.
//!
//! Each run draws (or loads) an impulse response, excites it with white
//! noise from rest, and runs one filter per (noise variance, prior decay)
//! grid point. At each evaluation time the run records the score-selected
//! grid point and the fit of its filtered impulse-response estimate.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use gcv_core::bank::{gamma_alpha_grid, log_grid, Bank, ParamGrid};
use gcv_core::statespace::{stable_spline_gram, FirModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::Config;
use crate::csvout::{fmt_f64, CsvTable};
use crate::experiments::{eval_times, fit_metric, mean};
use crate::sim::{seeded_rng, RNG_NAME};
use crate::{CliError, Result};

/// Parameters of the identification study; [`SysidConfig::new`] gives
/// defaults.
#[derive(Debug, Clone)]
pub struct SysidConfig {
    pub runs: usize,
    pub samples: usize,
    pub fir_length: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_count: usize,
    pub alphas: Vec<f64>,
    /// Measurement noise standard deviation is the sample standard
    /// deviation of the noiseless outputs divided by this.
    pub noise_divisor: f64,
    pub eval_every: usize,
    pub seed: u64,
    /// Optional CSV of impulse responses, one row of `fir_length` values per
    /// run, replacing the random surrogate systems.
    pub responses: Option<Vec<Vec<f64>>>,
}

impl SysidConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            runs: 20,
            samples: 200,
            fir_length: 200,
            gamma_lo: 1e-2,
            gamma_hi: 1e3,
            gamma_count: 20,
            alphas: vec![0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
            noise_divisor: 10.0,
            eval_every: 10,
            seed,
            responses: None,
        }
    }

    pub fn from_config(mut cfg: Config) -> Result<Self> {
        let base = Self::new(cfg.require("seed")?);
        let responses_file: Option<String> = cfg.optional_string("responses_file")?;
        let out = Self {
            runs: cfg.optional("runs", base.runs)?,
            samples: cfg.optional("samples", base.samples)?,
            fir_length: cfg.optional("fir_length", base.fir_length)?,
            gamma_lo: cfg.optional("gamma_lo", base.gamma_lo)?,
            gamma_hi: cfg.optional("gamma_hi", base.gamma_hi)?,
            gamma_count: cfg.optional("gamma_count", base.gamma_count)?,
            alphas: cfg.optional_list("alphas", &base.alphas)?,
            noise_divisor: cfg.optional("noise_divisor", base.noise_divisor)?,
            eval_every: cfg.optional("eval_every", base.eval_every)?,
            seed: base.seed,
            responses: None,
        };
        cfg.finish()?;
        let mut out = out;
        if let Some(file) = responses_file {
            out.responses = Some(load_responses(Path::new(&file), out.fir_length)?);
        }
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
        if self.fir_length < 2 {
            return bad("fir_length must be at least 2");
        }
        if self.alphas.is_empty() {
            return bad("alphas must be nonempty");
        }
        if !(self.noise_divisor.is_finite() && self.noise_divisor > 0.0) {
            return bad("noise_divisor must be finite and positive");
        }
        if let Some(rows) = &self.responses {
            if rows.len() < self.runs {
                return bad("responses file has fewer rows than runs");
            }
        }
        Ok(())
    }
}

fn load_responses(path: &Path, fir_length: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Data(format!("responses line {}: {e}", i + 1)))?;
        if row.len() != fir_length {
            return Err(CliError::Data(format!(
                "responses line {}: expected {} values, found {}",
                i + 1,
                fir_length,
                row.len()
            )));
        }
        if !row.iter().all(|g| g.is_finite()) {
            return Err(CliError::Data(format!(
                "responses line {}: non-finite value",
                i + 1
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("responses file has no rows".into()));
    }
    Ok(rows)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Draws a random stable rational system (three conjugate pole pairs inside
/// the 0.95 disk, strictly proper random numerator) and returns its impulse
/// response truncated to `m` taps and normalized to unit norm.
pub fn surrogate_response(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    loop {
        let mut den = vec![1.0];
        for _ in 0..3 {
            let radius = 0.95 * rng.random::<f64>().sqrt();
            let angle = core::f64::consts::PI * rng.random::<f64>();
            den = poly_mul(&den, &[1.0, -2.0 * radius * angle.cos(), radius * radius]);
        }
        let num: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let mut g = vec![0.0; m];
        for k in 0..m {
            let mut acc = if (1..=6).contains(&k) { num[k - 1] } else { 0.0 };
            for j in 1..=k.min(6) {
                acc -= den[j] * g[k - j];
            }
            g[k] = acc;
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for v in &mut g {
                *v /= norm;
            }
            return g;
        }
    }
}

/// Regressor rows for a system at rest: row k holds
/// `(u_k, u_{k-1}, ..., u_{k-m+1})` with entries before the first input zero.
pub fn rest_regressors(input: &[f64], m: usize) -> Vec<DVector<f64>> {
    (1..=input.len())
        .map(|k| {
            DVector::from_fn(m, |i, _| {
                if k > i {
                    input[k - 1 - i]
                } else {
                    0.0
                }
            })
        })
        .collect()
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// One run's selections and fits at each evaluation time.
#[derive(Debug, Clone)]
pub struct SysidTrace {
    pub times: Vec<usize>,
    pub gamma_best: Vec<f64>,
    pub alpha_best: Vec<f64>,
    pub fit_gcv: Vec<f64>,
}

/// Per-run traces plus the fit averaged over runs at each evaluation time.
#[derive(Debug, Clone)]
pub struct SysidSummary {
    pub traces: Vec<SysidTrace>,
    pub times: Vec<usize>,
    pub mean_fit_by_time: Vec<f64>,
}

impl SysidSummary {
    /// Run-averaged fit at evaluation time `t`, if `t` was evaluated.
    pub fn mean_fit_at(&self, t: usize) -> Option<f64> {
        let i = self.times.iter().position(|&k| k == t)?;
        Some(self.mean_fit_by_time[i])
    }

    pub fn mean_final_fit(&self) -> f64 {
        *self.mean_fit_by_time.last().expect("nonempty evaluation times")
    }
}

fn single_run(cfg: &SysidConfig, run: usize) -> Result<SysidTrace> {
    let mut rng = seeded_rng(cfg.seed, run as u64);
    let g = match &cfg.responses {
        Some(rows) => rows[run].clone(),
        None => surrogate_response(&mut rng, cfg.fir_length),
    };
    let gvec = DVector::from_column_slice(&g);

    let input: Vec<f64> = (0..cfg.samples).map(|_| rng.sample(StandardNormal)).collect();
    let rows = Arc::new(rest_regressors(&input, cfg.fir_length));
    let noiseless: Vec<f64> = rows.iter().map(|r| r.dot(&gvec)).collect();
    let noise_std = sample_std(&noiseless) / cfg.noise_divisor;
    if !(noise_std.is_finite() && noise_std > 0.0) {
        return Err(CliError::Data(
            "noiseless outputs are constant; cannot scale noise".into(),
        ));
    }
    let ys: Vec<f64> = noiseless
        .iter()
        .map(|&z| z + noise_std * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let grams: BTreeMap<u64, Arc<DMatrix<f64>>> = cfg
        .alphas
        .iter()
        .map(|&a| Ok((a.to_bits(), Arc::new(stable_spline_gram(a, cfg.fir_length)?))))
        .collect::<Result<_>>()?;
    let gammas = log_grid(cfg.gamma_lo, cfg.gamma_hi, cfg.gamma_count)?;
    let points = gamma_alpha_grid(&gammas, &cfg.alphas);
    let rows_for_factory = Arc::clone(&rows);
    let grid = ParamGrid::new(points, move |point| {
        let gamma = point.require("gamma")?;
        let alpha = point.require("alpha")?;
        let gram = grams
            .get(&alpha.to_bits())
            .expect("alpha grid points come from the alphas list");
        FirModel::from_parts(Arc::clone(&rows_for_factory), Arc::clone(gram), gamma)
    })?;
    let mut bank = Bank::init(grid, ys[0])?;

    let times = eval_times(cfg.samples, cfg.eval_every);
    let mut trace = SysidTrace {
        times: times.clone(),
        gamma_best: Vec::with_capacity(times.len()),
        alpha_best: Vec::with_capacity(times.len()),
        fit_gcv: Vec::with_capacity(times.len()),
    };
    let mut next_eval = times.iter().copied().peekable();
    for k in 2..=cfg.samples {
        bank.step(ys[k - 1])?;
        if next_eval.peek() != Some(&k) {
            continue;
        }
        next_eval.next();
        let (point, state) = bank.best();
        let estimate = state.filtered_state(&bank.models()[bank.best_index()])?;
        trace.gamma_best.push(point.require("gamma")?);
        trace.alpha_best.push(point.require("alpha")?);
        trace.fit_gcv.push(fit_metric(&g, estimate.as_slice())?);
    }
    Ok(trace)
}

/// Runs the study and, when `out_dir` is given, writes `run_NNN.csv` per run
/// plus `summary.csv` holding the run-averaged fit at each evaluation time.
pub fn run_sysid(cfg: &SysidConfig, out_dir: Option<&Path>) -> Result<SysidSummary> {
    let traces: Vec<SysidTrace> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| single_run(cfg, run))
        .collect::<Result<_>>()?;

    let times = traces[0].times.clone();
    let mean_fit_by_time: Vec<f64> = (0..times.len())
        .map(|i| mean(&traces.iter().map(|tr| tr.fit_gcv[i]).collect::<Vec<_>>()))
        .collect();

    if let Some(dir) = out_dir {
        for (run, trace) in traces.iter().enumerate() {
            let mut table = CsvTable::new(["t", "gamma_best", "alpha_best", "fit_gcv"])?;
            for i in 0..trace.times.len() {
                table.push_row(vec![
                    trace.times[i].to_string(),
                    fmt_f64(trace.gamma_best[i]),
                    fmt_f64(trace.alpha_best[i]),
                    fmt_f64(trace.fit_gcv[i]),
                ])?;
            }
            let comments = vec![
                "experiment: sysid".into(),
                format!("rng: {RNG_NAME}"),
                format!("seed: {}", cfg.seed),
                format!("run: {run}"),
            ];
            table.save(&dir.join(format!("run_{run:03}.csv")), &comments)?;
        }
        let mut summary = CsvTable::new(["t", "mean_fit"])?;
        for (i, &t) in times.iter().enumerate() {
            summary.push_row(vec![t.to_string(), fmt_f64(mean_fit_by_time[i])])?;
        }
        summary.save(
            &dir.join("summary.csv"),
            &[
                "experiment: sysid".into(),
                format!("rng: {RNG_NAME}"),
                format!("seed: {}", cfg.seed),
                format!("runs: {}", cfg.runs),
            ],
        )?;
    }
    Ok(SysidSummary {
        traces,
        times,
        mean_fit_by_time,
    })
}
