//! `ladderq`: synthesise or ingest a corpus, train predictors and an agent,
//! build ladders, and evaluate them against the baselines.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::{BdAxis, BitrateUnit, TimeUnit};
use config::{Overrides, RunConfig};
use ladderq_core::ladder::PenaltyPolicy;
use ladderq_core::{ErrorKind, QualityMetric, RewardWeights};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "ladderq", version, about = "Learned per-segment bitrate ladders")]
struct Cli {
    /// TOML run configuration; flags below override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    metric: Option<QualityMetric>,
    /// Reward weights as `l1,l2,l3`.
    #[arg(long, global = true)]
    weights: Option<RewardWeights>,
    /// `fixed` or `history`.
    #[arg(long, global = true)]
    penalty: Option<PenaltyPolicy>,
    /// Noise levels for the robustness sweep, e.g. `0.1,0.2`.
    #[arg(long, global = true, value_delimiter = ',')]
    noise: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (features and measurement CSVs).
    Synth {
        #[arg(long)]
        segments: Option<usize>,
    },
    /// Convert external feature and measurement CSVs to the canonical form.
    Ingest {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long, value_enum, default_value = "kbps")]
        bitrate_unit: BitrateUnit,
        #[arg(long, value_enum, default_value = "s")]
        time_unit: TimeUnit,
    },
    /// Fit the decoding-time, quality and bitrate predictors.
    TrainPredictors {
        /// Choose ensemble size and depth by cross-validation first.
        #[arg(long)]
        sweep: bool,
    },
    /// Train the Q-network agent.
    TrainAgent {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Build one agent ladder per segment.
    Build,
    /// Compare the agent and the baselines against the HLS template.
    Evaluate,
    /// Sweep prediction noise for the agent and the CDBL-style baseline.
    Robustness,
    /// BD values between two `rate_kbps,value` curves.
    Bd {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_enum, default_value = "quality")]
        axis: BdAxis,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Bd { reference, test, axis } = &cli.command {
        return commands::bd(reference, test, *axis);
    }
    let overrides = Overrides {
        seed: cli.seed,
        metric: cli.metric,
        weights: cli.weights,
        penalty: cli.penalty,
        noise: cli.noise,
        out: cli.out,
    };
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Synth { segments } => {
            if let Some(n) = segments {
                cfg.segments = n;
            }
            commands::synth(&cfg)
        }
        Command::Ingest {
            features,
            measurements,
            bitrate_unit,
            time_unit,
        } => commands::ingest(&cfg, &features, &measurements, bitrate_unit, time_unit),
        Command::TrainPredictors { sweep } => commands::train_predictors_cmd(&cfg, sweep),
        Command::TrainAgent { episodes } => {
            if let Some(e) = episodes {
                cfg.dqn.episodes = e;
                cfg.dqn.validate()?;
            }
            commands::train_agent_cmd(&cfg)
        }
        Command::Build => commands::build(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Robustness => commands::robustness_cmd(&cfg),
        Command::Bd { .. } => unreachable!("handled above"),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|c| c.downcast_ref::<ladderq_core::Error>())
        .map_or(EXIT_INTERNAL, |e| match e.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Internal => EXIT_INTERNAL,
        })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
