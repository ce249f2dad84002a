use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ksim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksim"))
        .args(args)
        .current_dir(dir)
        .env_remove("KSIM_OUTPUT_DIR")
        .output()
        .expect("spawn ksim")
}

const SMALL: &str = r#"
output_dir = "out"

[grid]
nx = 16
ny = 16

[params]
chi = 2.0
k = 0.5

[initial]
kind = "gaussian_bumps"
centers = [[0.3, 0.4], [0.7, 0.6]]
widths = [0.1]
amplitudes = [5.0]
v_background = 0.1

[control]
t_end = 0.5
dt_max = 0.01

[diagnostics]
sample_interval = 0.05
"#;

#[test]
fn run_writes_outputs_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let out = ksim(&["run", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("Advanced"));
    let series = fs::read_to_string(dir.path().join("out/series.csv")).unwrap();
    assert!(series.starts_with("t,mass,l2_u,"));
    assert_eq!(series.lines().count(), 12);
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/bounds.json")).unwrap()).unwrap();
    for name in ["mass_bound", "windowed_l2_bound", "signal_lower_bound", "no_blowup", "u_ln_u_plateau"] {
        assert!(bounds[name]["pass"].is_boolean(), "{name}");
    }
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_ksim"))
        .args(["run", "run.toml"])
        .current_dir(dir.path())
        .env("KSIM_OUTPUT_DIR", "elsewhere")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(dir.path().join("elsewhere/series.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("typo.toml"), "[params]\nchii = 2.0\n").unwrap();
    let out = ksim(&["run", "typo.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("chii") && err.contains("line 2"), "{err}");

    fs::write(dir.path().join("k.toml"), "[params]\nk = 1.2\n").unwrap();
    let out = ksim(&["run", "k.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k"));
}

#[test]
fn blowup_threshold_gives_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("dt_max = 0.01", "dt_max = 0.01\nblowup_threshold = 4.0");
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let out = ksim(&["run", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bounds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/bounds.json")).unwrap()).unwrap();
    assert_eq!(bounds["no_blowup"]["pass"], false);
}

#[test]
fn restart_from_checkpoint_fields() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    assert!(ksim(&["run", "run.toml"], dir.path()).status.success());
    let restart = SMALL
        .replace("output_dir = \"out\"", "output_dir = \"out2\"")
        .replace(
            "kind = \"gaussian_bumps\"\ncenters = [[0.3, 0.4], [0.7, 0.6]]\nwidths = [0.1]\namplitudes = [5.0]\nv_background = 0.1",
            "kind = \"from_file\"\npath = \"out/checkpoint\"",
        );
    fs::write(dir.path().join("restart.toml"), restart).unwrap();
    let out = ksim(&["run", "restart.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = ksim(&["resume", "out/checkpoint", "--t-end", "0.8", "-o", "resumed"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let series = fs::read_to_string(dir.path().join("resumed/series.csv")).unwrap();
    let first_t: f64 = series.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((first_t - 0.5).abs() < 1e-12);
}

#[test]
fn sweep_runs_every_combination() {
    let dir = tempfile::tempdir().unwrap();
    let base = SMALL
        .replace("output_dir = \"out\"", "")
        .replace("[grid]", "[base.grid]")
        .replace("[params]", "[base.params]")
        .replace("[initial]", "[base.initial]")
        .replace("[control]", "[base.control]")
        .replace("[diagnostics]", "[base.diagnostics]");
    let text = format!(
        "max_parallel = 2\n\n[[axes]]\nname = \"k\"\nvalues = [0.25, 0.75]\n\n[[axes]]\nname = \"mu\"\nvalues = [0.5, 1.0]\n{base}"
    );
    fs::write(dir.path().join("sweep.toml"), text).unwrap();
    let out = ksim(&["sweep", "sweep.toml", "-o", "sw"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sw/sweep.json")).unwrap()).unwrap();
    let entries = summary.as_array().unwrap();
    assert_eq!(entries.len(), 4);
    assert_eq!(entries[1]["axes"][0][1], 0.25);
    assert_eq!(entries[1]["axes"][1][1], 1.0);
    assert!(dir.path().join("sw/run_0003/bounds.json").exists());
}

#[test]
fn plot_emits_scripts_and_rejects_truncated_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    assert!(ksim(&["run", "run.toml"], dir.path()).status.success());
    let out = ksim(&["plot", "out/series.csv", "-o", "plots"], dir.path());
    assert!(out.status.success());
    assert!(fs::read_to_string(dir.path().join("plots/sup_u.gp")).unwrap().contains("logscale y"));
    assert!(dir.path().join("plots/z_func.dat").exists());

    fs::write(dir.path().join("bad.csv"), "t,mass\n0.0,1.0\n").unwrap();
    let out = ksim(&["plot", "bad.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column"));
}
