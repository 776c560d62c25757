use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynbc::config::{RunConfig, StudyMode};
use dynbc::experiment::{run_single, run_sweep};
use dynbc::io::fmt_f64;
use dynbc::mesh::{build_unit_square_mesh, validate_mesh};
use dynbc::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "dynbc", version, about = "Cahn-Hilliard simulations with reaction-rate dynamic boundary conditions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single trajectory and write its series, snapshots and restart file.
    Run(ConfigArgs),
    /// Run an L-sweep against its limit model and write EOC tables.
    Sweep(ConfigArgs),
    /// Build the mesh of the configuration and report the structural checks.
    ValidateMesh(ConfigArgs),
    /// Print the effective configuration as TOML.
    PrintConfig(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file; built-in desk defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set model.coupling=inf`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, shorthand for `--set output.dir=...`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut overrides = self.overrides.clone();
        if let Some(out) = &self.out {
            let path = out.to_str().ok_or_else(|| Error::Config("output path is not UTF-8".into()))?;
            overrides.push(format!("output.dir={}", toml_string(path)));
        }
        let cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                RunConfig::from_toml_with_overrides(&text, &overrides)?
            }
            None => RunConfig::default_with_overrides(&overrides)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn toml_string(s: &str) -> String {
    let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
    format!("\"{escaped}\"")
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidMesh(_) => EXIT_CONFIG,
        Error::StepFailed { .. } | Error::NewtonDivergence { .. } | Error::LinearSolve { .. } => EXIT_SOLVER,
        _ => EXIT_FAILURE,
    }
}

fn run(args: &ConfigArgs) -> Result<u8, Error> {
    let cfg = args.load()?;
    let report = run_single(&cfg)?;
    println!("{}", report.summary());
    match report.failure {
        None => Ok(0),
        Some(e) => {
            eprintln!("error: {e}");
            eprintln!("partial output kept in {}", cfg.output.dir.display());
            Ok(EXIT_SOLVER)
        }
    }
}

fn sweep(args: &ConfigArgs) -> Result<u8, Error> {
    let cfg = args.load()?;
    if cfg.study.mode == StudyMode::Single {
        return Err(Error::Config(
            "sweep needs study.mode = \"sweep_to_zero\" or \"sweep_to_infinity\"".into(),
        ));
    }
    let report = run_sweep(&cfg)?;
    report.write(&cfg.output.dir)?;
    let abscissa = if cfg.study.mode == StudyMode::SweepToInfinity { "1/L" } else { "L" };
    for (name, rows) in report.tables()? {
        println!("{name}:");
        for r in rows {
            let x = if cfg.study.mode == StudyMode::SweepToInfinity { 1.0 / r.l } else { r.l };
            let eoc = r.eoc.map(fmt_f64).unwrap_or_else(|| "-".into());
            println!("  {abscissa} = {:<10} err = {:<24} eoc = {eoc}", fmt_f64(x), fmt_f64(r.error));
        }
    }
    if report.is_complete() {
        return Ok(0);
    }
    for (l, e) in &report.failures {
        eprintln!("error: member L = {} failed: {e}", fmt_f64(*l));
    }
    eprintln!("tables above are partial");
    Ok(EXIT_SOLVER)
}

fn check_mesh(args: &ConfigArgs) -> Result<u8, Error> {
    let cfg = args.load()?;
    let mesh = build_unit_square_mesh::<f64>(cfg.mesh.n)?;
    println!(
        "n = {}: {} vertices, {} boundary, {} triangles, h = {}",
        cfg.mesh.n,
        mesh.n_vertices(),
        mesh.n_boundary,
        mesh.triangles.len(),
        fmt_f64(mesh.h)
    );
    let report = validate_mesh(&mesh);
    for c in &report.checks {
        let status = if c.passed { "ok" } else { "FAILED" };
        println!("  {:<30} {status} {}", c.name, c.detail);
    }
    report.into_result()?;
    Ok(0)
}

fn print_config(args: &ConfigArgs) -> Result<u8, Error> {
    print!("{}", args.load()?.to_toml()?);
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::ValidateMesh(a) => check_mesh(a),
        Command::PrintConfig(a) => print_config(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
