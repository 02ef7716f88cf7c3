use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cocycle_harness::config::parse_config;
use cocycle_harness::error::HarnessError;
use cocycle_harness::report::{emit_report, read_result, write_json, ReportFormat, RESULT_FILE};
use cocycle_harness::run::run_experiment;
use serde_json::json;

#[derive(Parser)]
#[command(name = "cocycle-lab", version, about = "Experiments on Lyapunov exponents and spectral radii of matrix cocycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the shift, potential and cocycle and report basic invariants.
    Validate(RunArgs),
    /// Equilibrium measure, cylinder table and optional correlation decay.
    Measure(RunArgs),
    /// Lyapunov spectrum estimate.
    Lyapunov(RunArgs),
    /// Growth of the spectral radius and norm along trajectories.
    RhoGrowth(RunArgs),
    /// Large-deviation tail curves.
    Lde(RunArgs),
    /// Geometric event probabilities and inequality checks.
    Geometry(RunArgs),
    /// Bounded search for a finite invariant subspace family.
    Irreducibility(RunArgs),
    /// Re-emit tables from an existing result.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Args)]
struct ReportArgs {
    /// A result.json, or a directory containing one.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, HarnessError> {
    if workers == Some(0) {
        return Err(HarnessError::Config("--workers: must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("--workers: {e}")))
}

fn run(kind: &str, args: &RunArgs) -> Result<(), HarnessError> {
    let text = fs::read_to_string(&args.config).map_err(|e| HarnessError::io(&args.config, e))?;
    let mut cfg = parse_config(&text)?;
    if cfg.experiment.kind() != kind {
        return Err(HarnessError::Config(format!(
            "experiment.kind: config is '{}' but the subcommand is '{kind}'",
            cfg.experiment.kind()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let started = Instant::now();
    let result = pool(args.workers)?.install(|| run_experiment(&cfg))?;
    let wall = started.elapsed().as_secs_f64();
    emit_report(&result, &out, ReportFormat::Json)?;
    if cfg.output.csv {
        emit_report(&result, &out, ReportFormat::Csv)?;
    }
    // kept apart from result.json so reruns stay byte-identical
    write_json(&out.join("timing.json"), &json!({ "config_hash": result.config_hash, "wall_time_seconds": wall }))?;
    println!("{}", out.join(RESULT_FILE).display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), HarnessError> {
    let input = if args.input.is_dir() { args.input.join(RESULT_FILE) } else { args.input.clone() };
    let result = read_result(&input)?;
    let out = args.out.clone().unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).to_path_buf());
    let formats: &[ReportFormat] = match args.format {
        Format::Csv => &[ReportFormat::Csv],
        Format::Json => &[ReportFormat::Json],
        Format::Both => &[ReportFormat::Json, ReportFormat::Csv],
    };
    for &f in formats {
        for path in emit_report(&result, &out, f)? {
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate(a) => run("validate", a),
        Command::Measure(a) => run("measure", a),
        Command::Lyapunov(a) => run("lyapunov", a),
        Command::RhoGrowth(a) => run("rho-growth", a),
        Command::Lde(a) => run("lde", a),
        Command::Geometry(a) => run("geometry", a),
        Command::Irreducibility(a) => run("irreducibility", a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
