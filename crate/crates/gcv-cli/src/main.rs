use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use gcv_core::asymptotic::stationary_gains;
use gcv_core::bank::{gamma_alpha_grid, gamma_grid, log_grid, Bank, ParamGrid};
use gcv_core::gcv::gcv_run;
use gcv_core::statespace::{stable_spline_gram, StateSpaceModel, TimeInvariantModel};
use nalgebra::DMatrix;

use gcv_cli::config::Config;
use gcv_cli::csvout::{fmt_f64, CsvTable};
use gcv_cli::experiments::mismatch::{run_mismatch, MismatchConfig};
use gcv_cli::experiments::spline::{run_spline, SplineConfig};
use gcv_cli::experiments::sysid::{run_sysid, SysidConfig};
use gcv_cli::files::{read_data, read_model};
use gcv_cli::{bench, verify, CliError, Result};

/// Recursive generalized cross validation filtering for linear state-space
/// models: single filters, parameter banks, stationary analysis, and the
/// Monte Carlo studies.
#[derive(Parser)]
#[command(name = "gcvfilter", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one GCV filter over a measurement file.
    Filter {
        /// Model file (sections A, C, Q, P0, mu, gamma).
        #[arg(long)]
        model: PathBuf,
        /// Measurement CSV: one value per row, optional leading timestamp
        /// column (ignored for time-invariant models).
        #[arg(long)]
        data: PathBuf,
        /// Override the model file's noise variance.
        #[arg(long)]
        gamma: Option<f64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a bank of filters over a parameter grid, reporting the per-step
    /// best grid point.
    Bank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Noise-variance grid as lo,hi,n (log-spaced).
        #[arg(long, value_name = "LO,HI,N")]
        gamma_grid: String,
        /// Optional comma-separated prior decay values in [0, 1); each
        /// replaces the model's P0 with the stable-spline gram matrix.
        #[arg(long, value_name = "A1,A2,...")]
        alpha_grid: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spline regression study.
    Spline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Disturbance-mismatch study.
    Mismatch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Impulse-response identification study.
    Sysid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the stationary filter quantities of a model.
    Asymptotic {
        #[arg(long)]
        model: PathBuf,
        /// Override the model file's noise variance.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Run the oracle-equivalence and finite-difference self checks.
    Verify {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Time the filter step at N and 2N steps.
    Bench {
        #[arg(long, default_value_t = 100_000)]
        steps: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn override_gamma(model: TimeInvariantModel, gamma: Option<f64>) -> Result<TimeInvariantModel> {
    match gamma {
        None => Ok(model),
        Some(g) if g.is_finite() && g > 0.0 => Ok(model.with_noise_var(g)),
        Some(g) => Err(CliError::Config(format!(
            "noise variance must be finite and positive, got {g}"
        ))),
    }
}

fn parse_grid_arg(arg: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = arg.split(',').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!(
            "grid must be lo,hi,n, got '{arg}'"
        )));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid bound '{}'", parts[0])))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid bound '{}'", parts[1])))?;
    let n: usize = parts[2]
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("bad grid count '{}'", parts[2])))?;
    Ok(log_grid(lo, hi, n)?)
}

fn parse_alpha_list(arg: &str) -> Result<Vec<f64>> {
    arg.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad alpha value '{s}'")))
        })
        .collect()
}

fn run_filter(model: &Path, data: &Path, gamma: Option<f64>, out: &Path) -> Result<()> {
    let model = override_gamma(read_model(model)?, gamma)?;
    let (_, ys) = read_data(data)?;
    let states = gcv_run(&model, &ys)?;

    let n = model.state_dim();
    let mut headers = vec!["k".to_string(), "gcv".into(), "dof".into(), "ssr".into()];
    headers.extend((1..=n).map(|i| format!("xhat_{i}")));
    let mut table = CsvTable::new(headers)?;
    for state in &states {
        let est = state.filtered_state(&model)?;
        let mut row = vec![
            state.k.to_string(),
            fmt_f64(state.gcv),
            fmt_f64(state.dof),
            fmt_f64(state.ssr),
        ];
        row.extend(est.iter().map(|&x| fmt_f64(x)));
        table.push_row(row)?;
    }
    table.save(out, &["estimates: filtered (posterior) state".into()])?;
    Ok(())
}

fn run_bank_cmd(
    model: &Path,
    data: &Path,
    gamma_arg: &str,
    alpha_arg: Option<&str>,
    out: &Path,
) -> Result<()> {
    let base = read_model(model)?;
    let (_, ys) = read_data(data)?;
    let gammas = parse_grid_arg(gamma_arg)?;
    let alphas = alpha_arg.map(parse_alpha_list).transpose()?;

    let points = match &alphas {
        None => gamma_grid(&gammas),
        Some(list) => gamma_alpha_grid(&gammas, list),
    };
    let n = base.state_dim();
    let with_alpha = alphas.is_some();
    let grid = ParamGrid::new(points, move |point| {
        let mut m = base.clone();
        if with_alpha {
            m = m.with_prior_cov(stable_spline_gram(point.require("alpha")?, n)?)?;
        }
        Ok(m.with_noise_var(point.require("gamma")?))
    })?;

    let mut headers = vec!["k".to_string(), "best_gamma".into()];
    if with_alpha {
        headers.push("best_alpha".into());
    }
    headers.push("best_gcv".into());
    let mut table = CsvTable::new(headers)?;

    let (first, rest) = ys
        .split_first()
        .ok_or_else(|| CliError::Data("no measurements".into()))?;
    let mut bank = Bank::init(grid, *first)?;
    let record = |bank: &Bank<TimeInvariantModel>, table: &mut CsvTable| -> Result<()> {
        let (point, state) = bank.best();
        let mut row = vec![state.k.to_string(), fmt_f64(point.require("gamma")?)];
        if with_alpha {
            row.push(fmt_f64(point.require("alpha")?));
        }
        row.push(fmt_f64(state.gcv));
        table.push_row(row)
    };
    record(&bank, &mut table)?;
    for &y in rest {
        bank.step(y)?;
        record(&bank, &mut table)?;
    }
    table.save(out, &[])?;
    Ok(())
}

/// Write to stdout, exiting the process quietly when the reader has closed
/// the pipe (the runtime ignores SIGPIPE, so writes report it as an error).
fn stdout_print(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::io("stdout", e)),
    }
}

fn matrix_lines(name: &str, m: &DMatrix<f64>) -> String {
    let mut out = format!("{name} ({}x{})\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str("  ");
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

fn run_asymptotic(model: &Path, gamma: Option<f64>) -> Result<()> {
    let model = override_gamma(read_model(model)?, gamma)?;
    let sol = stationary_gains(
        &model.transition(1),
        &model.observation(1),
        &model.process_cov(1),
        model.noise_var(),
    )?;
    let kbar: Vec<String> = sol.kbar.iter().map(|&x| fmt_f64(x)).collect();
    let gbar: Vec<String> = sol.gbar.iter().map(|&x| fmt_f64(x)).collect();
    let mut text = matrix_lines("p_bar", &sol.pbar);
    text.push_str(&matrix_lines("sigma_bar", &sol.sigmabar));
    text.push_str(&format!("k_bar {}\n", kbar.join(" ")));
    text.push_str(&format!("g_bar {}\n", gbar.join(" ")));
    text.push_str(&format!("spectral_radius {}\n", fmt_f64(sol.spectral_radius)));
    text.push_str(&format!("smoothing_ratio {}\n", fmt_f64(sol.smoothing_ratio)));
    stdout_print(&text)
}

fn run_verify(trials: usize, seed: u64) -> Result<u8> {
    let report = verify::run_verification(trials, seed)?;
    stdout_print(&format!(
        "oracle battery: {} trials, max rel error gcv {:.3e} dof {:.3e} ssr {:.3e} (tol {:.1e})\n",
        report.oracle_trials,
        report.oracle.gcv,
        report.oracle.dof,
        report.oracle.ssr,
        verify::ORACLE_TOL
    ))?;
    stdout_print(&format!(
        "finite differences: {} trials, max rel error dof {:.3e} ssr {:.3e} sigma {:.3e} zeta {:.3e} (tol {:.1e})\n",
        report.fd_trials,
        report.fd.dof_identity,
        report.fd.ssr_identity,
        report.fd.sigma,
        report.fd.zeta,
        verify::FD_TOL
    ))?;
    if report.passed() {
        stdout_print("verification passed\n")?;
        Ok(0)
    } else {
        eprintln!("verification FAILED");
        Ok(2)
    }
}

fn run_bench_cmd(steps: usize) -> Result<()> {
    let report = bench::run_bench(steps)?;
    stdout_print(&format!(
        "steps {}: {:.1} ns/step\nsteps {}: {:.1} ns/step\ntotal-time ratio time(2N)/time(N): {:.3}\n",
        report.steps,
        report.ns_per_step,
        2 * report.steps,
        report.ns_per_step_double,
        report.ratio
    ))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Filter {
            model,
            data,
            gamma,
            out,
        } => {
            run_filter(&model, &data, gamma, &out)?;
            Ok(0)
        }
        Cmd::Bank {
            model,
            data,
            gamma_grid,
            alpha_grid,
            out,
        } => {
            run_bank_cmd(&model, &data, &gamma_grid, alpha_grid.as_deref(), &out)?;
            Ok(0)
        }
        Cmd::Spline { config, out_dir } => {
            let cfg = SplineConfig::from_config(Config::load(&config)?)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
            run_spline(&cfg, Some(&out_dir))?;
            Ok(0)
        }
        Cmd::Mismatch { config, out_dir } => {
            let cfg = MismatchConfig::from_config(Config::load(&config)?)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
            run_mismatch(&cfg, Some(&out_dir))?;
            Ok(0)
        }
        Cmd::Sysid { config, out_dir } => {
            let cfg = SysidConfig::from_config(Config::load(&config)?)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
            run_sysid(&cfg, Some(&out_dir))?;
            Ok(0)
        }
        Cmd::Asymptotic { model, gamma } => {
            run_asymptotic(&model, gamma)?;
            Ok(0)
        }
        Cmd::Verify { trials, seed } => run_verify(trials, seed),
        Cmd::Bench { steps } => {
            run_bench_cmd(steps)?;
            Ok(0)
        }
    }
}
