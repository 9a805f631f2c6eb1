//! Command-line front end: run experiments, sweep a pipeline knob, or
//! rebuild a summary from an existing trials file.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use echolab::harness::{
    rebuild_summary, run_experiment, run_sweep, write_summary_json, ExperimentConfig, RunOptions,
    SweepAxis,
};

#[derive(Parser)]
#[command(
    name = "echolab",
    about = "Data-echoing pipeline experiments: train to a target metric and \
             count the fresh examples it costs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's master_seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Override the config's output_dir.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Pull pipelines inline instead of prefetching on a thread; output
    /// files are byte-reproducible in this mode.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    EchoFactor,
    BatchSize,
    BufferSize,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> SweepAxis {
        match a {
            AxisArg::EchoFactor => SweepAxis::EchoFactor,
            AxisArg::BatchSize => SweepAxis::BatchSize,
            AxisArg::BufferSize => SweepAxis::BufferSize,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm's searches and write trials.csv + summary.json.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Repeat the experiment across values of one pipeline knob.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Which knob to vary.
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values, e.g. --values 1,2,4,8
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Rebuild summary.json from an existing trials.csv.
    Report {
        /// Experiment config the trials were produced with.
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Directory holding trials.csv (defaults to the config's
        /// output_dir); summary.json is rewritten next to it.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn options(config: &ExperimentConfig, common: &CommonArgs) -> RunOptions {
    RunOptions {
        out_dir: common
            .out
            .clone()
            .unwrap_or_else(|| config.output_dir.clone()),
        master_seed: common.seed.unwrap_or(config.master_seed),
        deterministic: common.deterministic,
        progress: true,
    }
}

fn real_main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { common } => {
            let config = ExperimentConfig::load(&common.config)
                .with_context(|| format!("loading {}", common.config.display()))?;
            let opts = options(&config, &common);
            let outcome = run_experiment(&config, &opts)?;
            for arm in &outcome.summary.arms {
                let wins = arm
                    .searches
                    .iter()
                    .filter(|s| s.winner_trial_id.is_some())
                    .count();
                match arm.fresh_mean {
                    Some(mean) => eprintln!(
                        "{}: {wins}/{} searches reached target, mean fresh examples {mean:.0}",
                        arm.name, outcome.summary.n_searches
                    ),
                    None => eprintln!("{}: no search reached the target within budget", arm.name),
                }
            }
            println!("{}", outcome.trials_path.display());
            println!("{}", outcome.summary_path.display());
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let config = ExperimentConfig::load(&common.config)
                .with_context(|| format!("loading {}", common.config.display()))?;
            let opts = options(&config, &common);
            let outcome = run_sweep(&config, axis.into(), &values, &opts)?;
            println!("{}", outcome.sweep_csv_path.display());
        }
        Command::Report { config, out } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            let trials_path = dir.join("trials.csv");
            let summary = rebuild_summary(&trials_path, &cfg)
                .with_context(|| format!("reading {}", trials_path.display()))?;
            let summary_path = dir.join("summary.json");
            write_summary_json(&summary_path, &summary)?;
            println!("{}", summary_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
