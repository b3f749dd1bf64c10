//! Thin experiment-runner CLI over the `synthteacher` library.
//!
//! Exit codes: 0 success, 1 config error, 2 runtime error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use synthteacher::config::RunConfig;
use synthteacher::runner;
use synthteacher::Error;

#[derive(Parser)]
#[command(name = "synthteacher", version, about = "Curriculum sampling with a trainable adversarial teacher")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Parser)]
struct CommonArgs {
    /// Run configuration file (JSON; all fields optional).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compose a dataset and write it with composition statistics.
    Compose {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run teacher-driven or uniform-baseline training.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score stored predictions against a stored dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Predictions file (line-delimited JSON).
        #[arg(long)]
        predictions: PathBuf,
        /// Ground-truth dataset file (line-delimited JSON).
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Report per-group histograms of a dataset under both groupings.
    GroupStats {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset file (line-delimited JSON).
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, Error> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Compose { common } => {
            let config = load_config(&common)?;
            let outcome = runner::run_compose(&config)?;
            println!(
                "composed {} scenes ({} instances placed, {} dropped) -> {}",
                outcome.stats.scenes,
                outcome.stats.instances_placed,
                outcome.stats.instances_dropped,
                outcome.dataset_path.display()
            );
            println!(
                "mean instances per scene: {:.3}",
                outcome.stats.mean_instances_requested
            );
        }
        Command::Train { common } => {
            let config = load_config(&common)?;
            let outcome = runner::run_train(&config)?;
            let s = &outcome.summary;
            println!(
                "{:?} run finished: {} steps, weighted final loss {:.4}",
                s.mode, s.total_steps, s.weighted_final_loss
            );
            println!(
                "mean sampling distribution over final {} steps: {:?}",
                s.tail_steps,
                s.mean_p_tilde_tail
                    .iter()
                    .map(|p| (p * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>()
            );
            println!("artifacts in {}", outcome.out_dir.display());
        }
        Command::Eval {
            common,
            predictions,
            dataset,
        } => {
            let config = load_config(&common)?;
            let report = runner::run_eval(&config, &predictions, &dataset)?;
            println!(
                "evaluated {} persons, overall mean score {:.4}",
                report.total_persons, report.overall_mean
            );
            for bin in &report.bins {
                println!(
                    "  bin {} [{:.2}, {:.2}): {} persons, score {:.4}",
                    bin.bin, bin.lo, bin.hi, bin.count, bin.mean_score
                );
            }
        }
        Command::GroupStats { common, dataset } => {
            let config = load_config(&common)?;
            let report = runner::run_group_stats(&config, &dataset)?;
            println!(
                "{} persons ({} synthetic, {} real), {} groups",
                report.persons_total,
                report.synthetic_persons,
                report.real_persons,
                report.num_groups
            );
            println!(
                "min-distance [{}, {}): {:?}",
                report.min_distance.lower, report.min_distance.upper, report.min_distance.histogram
            );
            println!(
                "camera-pitch [{:.2}, {:.2}){}: {:?}",
                report.camera_pitch.lower,
                report.camera_pitch.upper,
                if report.camera_pitch.fallback {
                    " (fallback to [min, max))"
                } else {
                    ""
                },
                report.camera_pitch.histogram
            );
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
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
