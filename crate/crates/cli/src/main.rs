//! `wfsep` — phantom corpus generation, conventional fitting, U-Net
//! training and quantitative evaluation from one TOML config.
//!
//! Exit codes: 0 success, 2 config error, 3 data/I-O error, 4 numeric
//! failure.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use wfsep_core::config::RunConfig;
use wfsep_core::error::Error;

#[derive(Parser)]
#[command(name = "wfsep", version, about = "Desk-scale water-fat separation pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Network input mode: complex12, magnitude12, complex1, magnitude1.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Force single-threaded reference execution paths.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Dotted-path config overrides, repeatable: --set train.epochs=20
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic phantom corpus.
    Phantom,
    /// Run the conventional model-based fit over the corpus.
    Fit,
    /// Train the configured U-Net input mode on the corpus.
    Train,
    /// Predict parameter maps for a single series file.
    Predict {
        /// Input echo-series raster.
        #[arg(long)]
        series: PathBuf,
        /// Output maps raster.
        #[arg(long)]
        output: PathBuf,
        /// Checkpoint path (defaults to the run's model directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Normalization stats path (defaults to the model directory).
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Evaluate the trained model on the test split.
    Eval,
    /// Write the human-readable summary and PGM panels.
    Report,
}

fn build_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut sets: Vec<(String, String)> = Vec::new();
    for raw in &cli.sets {
        let (key, value) = raw.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got '{raw}'"))
        })?;
        sets.push((key.to_string(), value.to_string()));
    }
    if let Some(seed) = cli.seed {
        sets.push(("seed".into(), seed.to_string()));
    }
    if let Some(mode) = &cli.mode {
        sets.push(("mode".into(), format!("\"{mode}\"")));
    }
    if cli.deterministic {
        sets.push(("fit.parallel".into(), "false".into()));
        sets.push(("train.parallel".into(), "false".into()));
    }
    RunConfig::load_with_overrides(cli.config.as_deref(), &sets)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::DegenerateFit(_) | Error::ZeroVariance(_) | Error::TooFewSamples(_) => 4,
        _ => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    if cli.deterministic {
        // one worker thread = the sequential reference order everywhere
        let _ = rayon_single_thread();
    }
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let result = match cli.command {
        Command::Phantom => commands::cmd_phantom(&config),
        Command::Fit => commands::cmd_fit(&config),
        Command::Train => commands::cmd_train(&config),
        Command::Predict {
            series,
            output,
            checkpoint,
            stats,
        } => commands::cmd_predict(&config, &series, &output, checkpoint.as_deref(), stats.as_deref()),
        Command::Eval => commands::cmd_eval(&config),
        Command::Report => commands::cmd_report(&config),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn rayon_single_thread() -> Result<(), Box<dyn std::error::Error>> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build_global()?)
}

use wfsep_core::rayon;
