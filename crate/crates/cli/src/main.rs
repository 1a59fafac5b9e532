mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use spdest::model::ModelKind;

use config::{load, Loaded, Overrides};
use error::CliError;
use output::{to_json_compact, OutputDir};

/// Spatiotemporal SPDE models for gridded monthly data.
#[derive(Parser, Debug)]
#[command(name = "spdest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic dataset (and optional prediction grid) from the
    /// `simulation` section.
    Simulate(Common),
    /// Fit `model` and write the fit, criteria, scores and tables.
    Fit(Common),
    /// Fit every model in `models` on the same split.
    Compare(Common),
    /// Predict on `prediction.grid` from a previous `fit`.
    Predict(Common),
    /// Simulate (if configured), fit, compare, predict and write report.md.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, env = "SPDEST_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "SPDEST_THREADS")]
    threads: Option<usize>,
    #[arg(long)]
    model: Option<ModelKind>,
    /// Comma-separated model list for `compare`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    #[arg(long)]
    train_months: Option<usize>,
    /// Prediction grid CSV.
    #[arg(long)]
    grid: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            data: self.data.clone(),
            output_dir: self.output_dir.clone(),
            threads: self.threads,
            model: self.model,
            models: self.models.clone(),
            train_months: self.train_months,
            grid: self.grid.clone(),
        }
    }
}

fn setup(common: &Common) -> Result<(Loaded, OutputDir), CliError> {
    let run = load(&common.config, &common.overrides())?;
    if run.cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(run.cfg.threads)
            .build_global()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    }
    let out = OutputDir::create(&run.output_dir())?;
    Ok((run, out))
}

fn execute(cmd: &Command) -> Result<(), CliError> {
    let (name, common) = match cmd {
        Command::Simulate(c) => ("simulate", c),
        Command::Fit(c) => ("fit", c),
        Command::Compare(c) => ("compare", c),
        Command::Predict(c) => ("predict", c),
        Command::Report(c) => ("report", c),
    };
    let (run, mut out) = setup(common)?;
    let result = match cmd {
        Command::Simulate(_) => commands::cmd_simulate(&run, &mut out),
        Command::Fit(_) => commands::cmd_fit(&run, &mut out).map(|_| ()),
        Command::Compare(_) => commands::cmd_compare(&run, &mut out).map(|_| ()),
        Command::Predict(_) => commands::cmd_predict(&run, &mut out).map(|_| ()),
        Command::Report(_) => commands::cmd_report(&run, &mut out).map(|_| ()),
    };
    // files of a partially failed compare are still listed
    if !out.written.is_empty() {
        out.write_manifest(&run.hash, name)?;
    }
    result.map_err(|e| e.with("command", name))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = to_json_compact(&e).unwrap_or_else(|_| format!("{{\"code\":\"{}\"}}", e.code));
            eprintln!("{text}");
            ExitCode::from(if e.code == "config" || e.code == "precondition" { 2 } else { 1 })
        }
    }
}
