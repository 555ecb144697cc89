use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use veritask::Error;
use veritask_cli::experiment;
use veritask_cli::manifest::{ExperimentManifest, ModelConfig};

/// Experiment runner for news-source classification and check-worthy
/// claim detection.
#[derive(Parser)]
#[command(name = "veritask", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, prune, and outlier-filter an article file; write the
    /// canonical corpus and its statistics table.
    Ingest {
        /// Raw articles (JSON lines).
        input: PathBuf,
        /// Output directory for articles.jsonl and stats.csv.
        #[arg(long)]
        out: PathBuf,
        /// Seed for the per-source article cap.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional key=value config overriding the pruning defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the per-category statistics table of an article file.
    Stats {
        /// Articles (JSON lines).
        input: PathBuf,
    },
    /// Build the manifest's fold plans and write folds.jsonl.
    Split {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the classical model (svm or rdel) named by the manifest.
    TrainBaseline {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the encoder model (single or mtl) named by the manifest.
    TrainMtl {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score the trained checkpoints and write per-fold and aggregate
    /// reports.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Another run directory to test significance against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Combine finished runs into one markdown results grid.
    Report {
        /// Run directories (each holding an aggregate.json).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Write the grid here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_manifest(path: &PathBuf) -> veritask::Result<(ExperimentManifest, ModelConfig)> {
    let manifest = ExperimentManifest::load(path)?;
    let config = manifest.model_config()?;
    Ok((manifest, config))
}

fn run(cli: Cli) -> veritask::Result<()> {
    match cli.command {
        Command::Ingest { input, out, seed, config } => {
            let config = match config {
                Some(path) => ModelConfig::load(&path)?,
                None => ModelConfig::default(),
            };
            let summary = experiment::cmd_ingest(&input, &out, seed, &config)?;
            println!(
                "kept {} of {} articles; wrote {} and {}",
                summary.kept,
                summary.loaded,
                summary.articles_path.display(),
                summary.stats_path.display()
            );
        }
        Command::Stats { input } => {
            print!("{}", experiment::cmd_stats(&input)?);
        }
        Command::Split { manifest } => {
            let (manifest, config) = load_manifest(&manifest)?;
            let (path, folds) = experiment::cmd_split(&manifest, &config)?;
            println!("wrote {folds} fold plan(s) to {}", path.display());
        }
        Command::TrainBaseline { manifest } => {
            let (manifest, config) = load_manifest(&manifest)?;
            for line in experiment::cmd_train_baseline(&manifest, &config)? {
                println!("{line}");
            }
        }
        Command::TrainMtl { manifest } => {
            let (manifest, config) = load_manifest(&manifest)?;
            for line in experiment::cmd_train_mtl(&manifest, &config)? {
                println!("{line}");
            }
        }
        Command::Evaluate { manifest, compare } => {
            let (manifest, config) = load_manifest(&manifest)?;
            let (_, log) = experiment::cmd_evaluate(&manifest, &config, compare.as_deref())?;
            for line in log {
                println!("{line}");
            }
        }
        Command::Report { runs, out } => {
            let grid = experiment::cmd_report(&runs)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &grid)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{grid}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Training(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
