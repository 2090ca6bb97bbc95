use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use optdiv::config::RunConfig;
use optdiv::io::sidecar_path;
use tempfile::TempDir;

const SMALL: &str = r#"
[grids]
time_steps = 40
space_cells = 80

[mc]
n_paths = 2000
dt = 0.01

[verify]
refinement_study = false
"#;

fn optdiv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optdiv"))
        .args(args)
        .arg("--output")
        .arg(dir.join("out"))
        .current_dir(dir)
        .output()
        .unwrap()
}

fn with_config(text: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("run.toml"), text).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn printed_defaults_load_back() {
    let dir = TempDir::new().unwrap();
    let o = optdiv(dir.path(), &["print-defaults"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[params]") && text.contains("mu = 0.5"));
    fs::write(dir.path().join("run.toml"), &text).unwrap();
    let again = optdiv(dir.path(), &["print-defaults", "--config", "run.toml"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
    let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn malformed_config_exits_2() {
    let dir = with_config("[params\nmu = ");
    let o = optdiv(dir.path(), &["boundary", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn checkpoint_outside_the_domain_exits_2() {
    let dir = with_config("checkpoints = [[1.0, 0.5]]\n");
    let o = optdiv(dir.path(), &["verify", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checkpoint"));
}

#[test]
fn non_positive_drift_boundary_explains_the_trivial_value() {
    let dir = with_config("[params]\nmu = -0.2\n");
    let o = optdiv(dir.path(), &["boundary", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("V(t, x) = x"), "{}", stderr(&o));
}

#[test]
fn simulate_without_a_boundary_exits_3() {
    let dir = with_config(SMALL);
    let o = optdiv(dir.path(), &["simulate", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn boundary_then_simulate_is_reproducible() {
    let dir = with_config(SMALL);
    let out = dir.path().join("out");
    assert!(optdiv(dir.path(), &["boundary", "--config", "run.toml"])
        .status
        .success());
    assert!(out.join("boundary_ie.csv").exists() && out.join("boundary_ie_log.csv").exists());
    assert!(sidecar_path(&out.join("boundary_ie.csv")).exists());

    let o = optdiv(dir.path(), &["simulate", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = fs::read(out.join("mc_estimates.csv")).unwrap();
    assert!(optdiv(dir.path(), &["simulate", "--config", "run.toml"])
        .status
        .success());
    assert_eq!(fs::read(out.join("mc_estimates.csv")).unwrap(), first);

    let text = String::from_utf8(first).unwrap();
    let zero = text
        .lines()
        .find(|l| l.starts_with("suboptimal_0,"))
        .expect("c = 0 row");
    let fields: Vec<&str> = zero.split(',').collect();
    assert_eq!(fields[2], fields[3], "mean equals x: {zero}");
    assert_eq!(fields[4].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn seed_override_is_recorded_in_the_sidecar() {
    let dir = with_config(SMALL);
    assert!(optdiv(dir.path(), &["boundary", "--config", "run.toml"])
        .status
        .success());
    assert!(optdiv(
        dir.path(),
        &["simulate", "--config", "run.toml", "--seed", "99"]
    )
    .status
    .success());
    let out = dir.path().join("out");
    let sidecar = sidecar_path(&out.join("mc_estimates.csv"));
    let meta: toml::Table = toml::from_str(&fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!(meta["config"]["mc"]["seed"].as_integer(), Some(99));
    assert_eq!(meta["artifact"]["command"].as_str(), Some("simulate"));
}

#[test]
fn pde_writes_the_surfaces() {
    let dir = with_config(SMALL);
    let o = optdiv(dir.path(), &["pde", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    for name in ["U.csv", "V.csv", "boundary_pde.csv"] {
        assert!(fs::metadata(out.join(name)).unwrap().len() > 0, "{name}");
    }
}

#[test]
fn small_x_max_fails_verification_with_a_report_row() {
    let dir = with_config(
        "checkpoints = [[0.0, 0.5]]\n[grids]\ntime_steps = 40\nspace_cells = 40\nx_max = 1.0\n\
         [mc]\nn_paths = 200\ndt = 0.01\n[verify]\nrefinement_study = false\nux_points = [[0.0, 0.0]]\n",
    );
    let o = optdiv(dir.path(), &["verify", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let row = report
        .lines()
        .find(|l| l.starts_with("x_max_too_small,"))
        .expect("x_max row");
    assert!(row.ends_with("false"), "{row}");
}

#[test]
fn non_positive_drift_verify_reports_only_the_trivial_check() {
    let dir = with_config("[params]\nmu = 0.0\n");
    let o = optdiv(dir.path(), &["verify", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("trivial_value_equals_x,"));
}
