//! `optdiv`: solve for the optimal dividend barrier and cross-check the routes.
//!
//! Exit codes: 0 success, 1 solver or verification failure, 2 configuration
//! error, 3 missing prerequisite artifact.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optdiv::config::RunConfig;
use optdiv::io::{
    boundary_csv, estimates_csv, fmt_sig, read_boundary, surface_csv, write_sidecar, write_text,
};
use optdiv::verify;
use optdiv::Error;

#[derive(Parser)]
#[command(
    name = "optdiv",
    version,
    about = "Finite-horizon optimal dividend barrier and value function"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Monte Carlo seed (overrides `mc.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the integral equation: boundary_ie.csv and boundary_ie_log.csv.
    Boundary,
    /// Solve the PDE: U.csv, V.csv and boundary_pde.csv.
    Pde,
    /// Monte Carlo estimates at the checkpoints from boundary_ie.csv: mc_estimates.csv.
    Simulate,
    /// Full cross-validation: report.csv; exits 1 unless every check passes.
    Verify,
    /// Print the default configuration.
    PrintDefaults,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Boundary => "boundary",
            Command::Pde => "pde",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::PrintDefaults => "print-defaults",
        }
    }
}

const DEFAULT_FORMULAS: &str = "\
# Keys that default to values derived from [params] when omitted:
#   grids.x_max = 4 sigma sqrt(T)
#   ie.root_tol = 1e-6 sigma sqrt(T)
#   ie.b_max    = max(5 sigma sqrt(T), 10 mu T)
#   mc.dt       = 1e-3 T
";

enum Failure {
    Solver(String),
    Verification,
    Config(String),
    Missing(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Solver(_) | Failure::Verification => 1,
            Failure::Config(_) => 2,
            Failure::Missing(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e.to_string())
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

/// Sidecar: the producing command and the full configuration that reproduces the file.
fn sidecar(
    path: &Path,
    command: Command,
    cfg: &RunConfig,
    extra: toml::Table,
) -> Result<(), Failure> {
    let mut artifact = toml::Table::new();
    artifact.insert(
        "file".into(),
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
            .into(),
    );
    artifact.insert("command".into(), command.name().into());
    artifact.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    artifact.extend(extra);
    let mut meta = toml::Table::new();
    meta.insert("artifact".into(), artifact.into());
    let config: toml::Table =
        toml::from_str(&cfg.to_toml()).expect("config round-trips through toml");
    meta.insert("config".into(), config.into());
    Ok(write_sidecar(path, &meta)?)
}

fn emit(
    cfg: &RunConfig,
    command: Command,
    name: &str,
    text: &str,
    extra: toml::Table,
) -> Result<(), Failure> {
    let path = cfg.output_dir.join(name);
    write_text(&path, text)?;
    sidecar(&path, command, cfg, extra)
}

fn cmd_boundary(cfg: &RunConfig) -> Result<(), Failure> {
    let ie = verify::solve_boundary(cfg)?;
    let mut extra = toml::Table::new();
    extra.insert("root_tol".into(), cfg.ie_config()?.root_tol.into());
    emit(
        cfg,
        Command::Boundary,
        "boundary_ie.csv",
        &boundary_csv(&ie.boundary),
        extra,
    )?;

    let mut log = String::from("t,b,residual,iterations\n");
    for (k, &t) in ie.boundary.grid().nodes().iter().enumerate() {
        log.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig(t),
            fmt_sig(ie.boundary.values()[k]),
            fmt_sig(ie.residuals[k]),
            ie.iterations[k]
        ));
    }
    emit(
        cfg,
        Command::Boundary,
        "boundary_ie_log.csv",
        &log,
        toml::Table::new(),
    )?;
    let worst = ie.residuals.iter().fold(0.0_f64, |a, r| a.max(r.abs()));
    println!(
        "b(0) = {}, max |residual| = {}",
        fmt_sig(ie.boundary.values()[0]),
        fmt_sig(worst)
    );
    Ok(())
}

fn cmd_pde(cfg: &RunConfig) -> Result<(), Failure> {
    let pde = verify::solve_pde(cfg)?;
    let mut extra = toml::Table::new();
    extra.insert(
        "boundary_extract_tol".into(),
        cfg.pde.boundary_extract_tol.into(),
    );
    emit(
        cfg,
        Command::Pde,
        "U.csv",
        &surface_csv(&pde.u),
        extra.clone(),
    )?;
    emit(
        cfg,
        Command::Pde,
        "V.csv",
        &surface_csv(&pde.v),
        extra.clone(),
    )?;
    emit(
        cfg,
        Command::Pde,
        "boundary_pde.csv",
        &boundary_csv(&pde.boundary),
        extra,
    )?;
    println!("b(0) = {}", fmt_sig(pde.boundary.values()[0]));
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let path = cfg.output_dir.join("boundary_ie.csv");
    if !path.exists() {
        return Err(Failure::Missing(format!(
            "{} not found; run `optdiv boundary` first",
            path.display()
        )));
    }
    let b = read_boundary(&path).map_err(|e| Failure::Missing(e.to_string()))?;
    let rows = verify::simulate_all(cfg, &b)?;
    let csv = estimates_csv(
        rows.iter()
            .map(|r| (r.label.as_str(), r.t, r.x, r.estimate)),
    );
    emit(
        cfg,
        Command::Simulate,
        "mc_estimates.csv",
        &csv,
        toml::Table::new(),
    )?;
    println!("{} estimates", rows.len());
    Ok(())
}

fn cmd_verify(cfg: &RunConfig) -> Result<(), Failure> {
    let run = verify::run(cfg).map_err(|e| Failure::Config(e.to_string()))?;
    emit(
        cfg,
        Command::Verify,
        "report.csv",
        &run.report.to_csv(),
        toml::Table::new(),
    )?;
    for e in &run.errors {
        eprintln!("error: {e}");
    }
    let failures: Vec<_> = run.report.failures().collect();
    if failures.is_empty() {
        println!("all {} checks pass", run.report.rows.len());
        return Ok(());
    }
    eprintln!(
        "{} of {} checks failed:",
        failures.len(),
        run.report.rows.len()
    );
    for r in failures {
        eprintln!(
            "  {}: {} vs {}",
            r.check,
            fmt_sig(r.value),
            fmt_sig(r.tolerance)
        );
    }
    Err(Failure::Verification)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::PrintDefaults = cli.command {
        let mut out = std::io::stdout();
        let _ = out.write_all(DEFAULT_FORMULAS.as_bytes());
        let _ = out.write_all(RunConfig::default().to_toml().as_bytes());
        return Ok(());
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Boundary => cmd_boundary(&cfg),
        Command::Pde => cmd_pde(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::PrintDefaults => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Solver(m) => eprintln!("error: {m}"),
                Failure::Config(m) => eprintln!("{m}"),
                Failure::Missing(m) => eprintln!("missing artifact: {m}"),
                Failure::Verification => {}
            }
            ExitCode::from(f.code())
        }
    }
}
