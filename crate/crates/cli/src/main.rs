//! `seebench`: simulate irradiation campaigns, analyze and classify their
//! logs, check the published tables, and render reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

use commands::Failure;

#[derive(Debug, Parser)]
#[command(name = "seebench", version, about = "Single-event-effects test-bench simulator and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign and write telemetry, events and a manifest.
    Simulate(SimulateArgs),
    /// Count events and compute fluence, dose and cross-section for runs.
    Analyze(AnalyzeArgs),
    /// Classify a chip from its reset logs.
    Classify(ClassifyArgs),
    /// Recompute the published numbers from the embedded tables.
    Verify,
    /// Render tables and data series from analysis bundles.
    Report(ReportArgs),
    /// List the bundled campaign presets.
    Presets,
}

#[derive(Debug, Args)]
struct ConfigSource {
    /// Campaign config file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset, e.g. ST01 or S9.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Seed, or an inclusive range `A..=B` / half-open `A..B` run in parallel.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory. A seed range writes one `seed-N` subdirectory per seed.
    #[arg(long)]
    out: PathBuf,
    /// Skip per-tick telemetry.
    #[arg(long)]
    events_only: bool,
    /// Acquisition start written in the telemetry header.
    #[arg(long, default_value = "1970-01-01T00:00:00Z")]
    start: String,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Run directories written by `simulate`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Bundle destination (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    classify: ClassifyParams,
    /// Mission length for orbital extrapolation, years.
    #[arg(long, default_value_t = 3.0)]
    mission_years: f64,
}

#[derive(Debug, Args, Clone, Copy)]
struct ClassifyParams {
    /// Expected interval between resets of a broken chip, s.
    #[arg(long, default_value_t = 7.0)]
    period: f64,
    /// Accepted deviation from the period, s.
    #[arg(long, default_value_t = 1.0)]
    tolerance: f64,
    /// Resets needed for a run to count.
    #[arg(long = "min-run", default_value_t = 5)]
    min_run: usize,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Event log recorded under irradiation.
    #[arg(long)]
    irradiation: PathBuf,
    /// Event log of a later radiation-less test.
    #[arg(long)]
    radiationless: Option<PathBuf>,
    #[command(flatten)]
    params: ClassifyParams,
    /// Print the verdict as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Bundles written by `analyze`.
    bundles: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(commands::SimulateOptions {
            config: a.source.config,
            preset: a.source.preset,
            seed: a.seed,
            out: a.out,
            events_only: a.events_only,
            start: a.start,
        }),
        Command::Analyze(a) => commands::analyze(&a.runs, &a.out, a.classify.into(), a.mission_years),
        Command::Classify(a) => commands::classify(&a.irradiation, a.radiationless.as_deref(), a.params.into(), a.json),
        Command::Verify => commands::verify(),
        Command::Report(a) => commands::report(&a.bundles, &a.out),
        Command::Presets => {
            commands::presets();
            Ok(())
        }
    }
}

impl From<ClassifyParams> for seebench::RunParams {
    fn from(p: ClassifyParams) -> Self {
        seebench::RunParams {
            period: p.period,
            tolerance: p.tolerance,
            min_count: p.min_run,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code as u8)
        }
    }
}
