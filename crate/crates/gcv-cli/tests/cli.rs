//! End-to-end smoke tests of the gcvfilter binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gcvfilter"))
}

fn tmp() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(format!("cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

const RANDOM_WALK: &str = "\
A
1
C
1
Q
1
P0
1
mu
0
gamma
1
";

fn write_fixtures(dir: &Path) -> (PathBuf, PathBuf) {
    let model = dir.join("model.csv");
    fs::write(&model, RANDOM_WALK).unwrap();
    let data = dir.join("data.csv");
    fs::write(&data, "1\n0\n2\n").unwrap();
    (model, data)
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_exits_zero() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("filter"));
}

#[test]
fn closed_stdout_pipe_exits_quietly() {
    // the test harness inherits an ignored SIGPIPE, so the binary sees the
    // closed pipe as a write error rather than a signal
    let mut child = bin()
        .args(["verify", "--trials", "20", "--seed", "1"])
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdout.take());
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0), "status: {:?}", out.status);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!err.contains("panicked"), "stderr: {err}");
}

#[test]
fn unknown_flag_exits_one() {
    let out = bin().args(["filter", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_model_file_exits_one() {
    let dir = tmp();
    let out = bin()
        .args(["filter", "--model", "/nonexistent/m.csv", "--data"])
        .arg(dir.join("nope.csv"))
        .args(["--out"])
        .arg(dir.join("out.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn filter_round_trip_matches_library() {
    let dir = tmp();
    let (model, data) = write_fixtures(&dir);
    let out_path = dir.join("filter_out.csv");
    let out = bin()
        .args(["filter", "--model"])
        .arg(&model)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next().unwrap(), "k,gcv,dof,ssr,xhat_1");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);

    let model = gcv_cli::files::parse_model(RANDOM_WALK).unwrap();
    let states = gcv_core::gcv::gcv_run(&model, &[1.0, 0.0, 2.0]).unwrap();
    let last: Vec<&str> = rows[2].split(',').collect();
    assert_eq!(last[0], "3");
    let gcv: f64 = last[1].parse().unwrap();
    assert!((gcv - states[2].gcv).abs() < 1e-15, "gcv {gcv}");
}

#[test]
fn filter_gamma_override_changes_output() {
    let dir = tmp();
    let (model, data) = write_fixtures(&dir);
    let base = dir.join("base.csv");
    let scaled = dir.join("scaled.csv");
    for (path, gamma) in [(&base, None), (&scaled, Some("2.5"))] {
        let mut cmd = bin();
        cmd.args(["filter", "--model"])
            .arg(&model)
            .arg("--data")
            .arg(&data)
            .arg("--out")
            .arg(path);
        if let Some(g) = gamma {
            cmd.args(["--gamma", g]);
        }
        assert!(cmd.output().unwrap().status.success());
    }
    assert_ne!(fs::read_to_string(&base).unwrap(), fs::read_to_string(&scaled).unwrap());

    let out = bin()
        .args(["filter", "--model"])
        .arg(&model)
        .arg("--data")
        .arg(&data)
        .arg("--out")
        .arg(dir.join("bad.csv"))
        .args(["--gamma", "-1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bank_reports_grid_minimum_per_step() {
    let dir = tmp();
    let (model, data) = write_fixtures(&dir);
    let out_path = dir.join("bank_out.csv");
    let out = bin()
        .args(["bank", "--model"])
        .arg(&model)
        .arg("--data")
        .arg(&data)
        .args(["--gamma-grid", "0.1,10,5", "--out"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "k,best_gamma,best_gcv");
    assert_eq!(lines.count(), 3);
}

#[test]
fn asymptotic_prints_stationary_quantities() {
    let dir = tmp();
    let (model, _) = write_fixtures(&dir);
    let out = bin()
        .args(["asymptotic", "--model"])
        .arg(&model)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("p_bar"));
    assert!(text.contains("smoothing_ratio"));
    // random walk at gamma = 1: stationary prediction variance is the
    // golden ratio
    let p_line = text.lines().nth(1).unwrap().trim();
    let p: f64 = p_line.parse().unwrap();
    assert!((p - 1.618033988749895).abs() < 1e-9, "p_bar {p}");
}

#[test]
fn verify_small_run_exits_zero() {
    let out = bin()
        .args(["verify", "--trials", "3", "--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout_of(&out).contains("verification passed"));
}

#[test]
fn bench_tiny_run_exits_zero() {
    let out = bin().args(["bench", "--steps", "500"]).output().unwrap();
    assert!(out.status.success());
    assert!(stdout_of(&out).contains("ns/step"));
}

#[test]
fn spline_config_with_unknown_key_exits_one() {
    let dir = tmp();
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "seed = 1\nbogus_key = 5\n").unwrap();
    let out = bin()
        .args(["spline", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn spline_tiny_study_writes_runs_and_summary() {
    let dir = tmp();
    let cfg = dir.join("spline.cfg");
    fs::write(
        &cfg,
        "seed = 5\nruns = 2\nsamples = 40\ngamma_count = 6\noracle_every = 20\n",
    )
    .unwrap();
    let out_dir = dir.join("spline_out");
    let out = bin()
        .args(["spline", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(summary.contains("# seed: 5"));
    assert!(summary.contains("# rng: chacha12"));
    let run0 = fs::read_to_string(out_dir.join("run_000.csv")).unwrap();
    let header = run0.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t,gamma_gcv,gamma_oracle,fit_gcv,fit_oracle");

    // byte-identical on rerun
    let out_dir2 = dir.join("spline_out2");
    let out = bin()
        .args(["spline", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out_dir2)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(run0, fs::read_to_string(out_dir2.join("run_000.csv")).unwrap());
}
