use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sim2real", version, about = "ConvCNP Sim2Real pre-training, fine-tuning and experiments")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Overrides the seed of the config or spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic data in the station-record and gridded formats.
    #[command(subcommand)]
    GenData(GenData),
    /// Train a model from scratch on simulator data.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt a pre-trained checkpoint to real data.
    Finetune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArg,
    },
    /// Test NLL and MAE of a checkpoint.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArg,
    },
    /// Exact GP posterior NLL on fresh tasks.
    Oracle {
        /// `l=<lengthscale>,noise=<noise std>`
        #[arg(long)]
        kernel: String,
        #[arg(long, default_value_t = 512)]
        tasks: usize,
        #[arg(long, default_value = "oracle.csv")]
        out: PathBuf,
    },
    /// Run or list experiment grids.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Mean second-difference roughness of predicted means around context points.
    DiagnoseArtefacts {
        /// Checkpoint to score (repeatable).
        #[arg(long, required = true)]
        ckpt: Vec<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        tasks: usize,
        /// Probe spacing in data units.
        #[arg(long, default_value_t = 0.01)]
        probe_spacing: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        split: SplitArg,
    },
}

#[derive(Debug, Args)]
pub struct SplitArg {
    /// Replay a saved station/time split instead of building one.
    #[arg(long)]
    pub split_plan: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GenData {
    /// Independent 1D GP draws.
    Gp {
        #[arg(long)]
        kernel: String,
        #[arg(long)]
        tasks: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// A synthetic station world: records, simulator grid, aux grid and split plan.
    World {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Run a grid from a spec file or a preset name (`shrink_l`, `shrink_l.preset`).
    Run {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the presets; with `--out`, also write them as `<name>.preset`.
    Presets {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}
