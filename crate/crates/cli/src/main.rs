//! Command-line driver: limit-process construction, gradient-descent runs,
//! trained-vs-predicted comparisons, scaling sweeps, and Monte-Carlo checks.
//!
//! Every command is deterministic given its configuration and seeds;
//! re-running writes byte-identical artifacts.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use commands::SweepMode;
use config::RunConfig;
use saddleflow_core::{BiasLabels, SplitOrdering};

#[derive(Parser)]
#[command(
    name = "saddleflow",
    version,
    about = "Saddle-to-saddle limit process and training dynamics of two-layer ReLU networks on orthonormal data"
)]
struct Cli {
    /// JSON run configuration; defaults to the built-in 64-point experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (or $SADDLEFLOW_OUT, or the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the dataset and init seeds (and the Monte-Carlo stream seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Fail on zero labels and tied jump selections.
    #[arg(long, global = true)]
    strict: bool,

    /// Override any config key through its dotted path, e.g. trainer.lr=0.5.
    #[arg(long = "set", global = true, value_name = "KEY.PATH=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderingArg {
    Fixed,
    Algorithmic,
}

impl From<OrderingArg> for SplitOrdering {
    fn from(value: OrderingArg) -> Self {
        match value {
            OrderingArg::Fixed => SplitOrdering::Fixed,
            OrderingArg::Algorithmic => SplitOrdering::Algorithmic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BiasLabelsArg {
    Unit,
    AbsGaussian,
}

impl From<BiasLabelsArg> for BiasLabels {
    fn from(value: BiasLabelsArg) -> Self {
        match value {
            BiasLabelsArg::Unit => BiasLabels::Unit,
            BiasLabelsArg::AbsGaussian => BiasLabels::AbsGaussian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Construct the limit process (no training) and write limit.json.
    Limit,
    /// Train and write trajectory.csv plus final.json.
    Train,
    /// Train, construct the limit process, and write comparison.json.
    Compare,
    /// Norm scaling in n with the preset width rule; writes sweep_n.csv.
    SweepN {
        /// Values of n to sweep.
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128,256")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// Fast limit-process evaluation or an actual training run per point.
        #[arg(long, value_enum, default_value_t = SweepMode::Alg)]
        mode: SweepMode,
    },
    /// Width sweep at fixed n contrasting small and He init; writes sweep_m.csv.
    SweepM {
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        m: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
    /// Monte-Carlo estimate of the mask-assumption probability vs its bound.
    VerifyAssumptions {
        /// Positive-label count (omit for the default grid).
        #[arg(long)]
        n_plus: Option<usize>,
        /// Negative-label count (defaults to n_plus).
        #[arg(long)]
        n_minus: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
    },
    /// Monte-Carlo check of the near-halving of the unfitted set.
    VerifySplit {
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 0.025)]
        delta: f64,
        #[arg(long, default_value_t = 0.25)]
        rho: f64,
        #[arg(long, value_enum, default_value_t = OrderingArg::Fixed)]
        ordering: OrderingArg,
    },
    /// Monte-Carlo frequency of the learned-norm bound over fresh instances.
    VerifyBias {
        #[arg(long, default_value_t = 64)]
        n_plus: usize,
        #[arg(long, default_value_t = 0)]
        n_minus: usize,
        #[arg(long, default_value_t = 40)]
        m: usize,
        #[arg(long, value_enum, default_value_t = BiasLabelsArg::Unit)]
        labels: BiasLabelsArg,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
    },
    /// Emit the CSV/JSON data behind the five reference experiments.
    Figures,
}

fn main() {
    // die quietly when stdout is closed early (e.g. piped into head)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let out = commands::resolve_out_dir(cli.out)?;
    let load_config = || -> Result<RunConfig> {
        let base = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let base = base.with_overrides(&cli.overrides)?;
        Ok(commands::apply_global_flags(base, cli.seed, cli.strict))
    };
    let mc_seed = cli.seed.unwrap_or(0);

    match cli.command {
        Command::Limit => commands::cmd_limit(&load_config()?, &out),
        Command::Train => commands::cmd_train(&load_config()?, &out),
        Command::Compare => commands::cmd_compare(&load_config()?, &out),
        Command::SweepN { n, seeds, mode } => {
            commands::cmd_sweep_n(&n, seeds, mode, mc_seed, &out)
        }
        Command::SweepM { n, m, seeds } => commands::cmd_sweep_m(n, &m, seeds, mc_seed, &out),
        Command::VerifyAssumptions {
            n_plus,
            n_minus,
            m,
            trials,
        } => {
            let point = match (n_plus, m) {
                (Some(np), Some(m)) => Some((np, n_minus.unwrap_or(np), m)),
                (None, None) => None,
                _ => anyhow::bail!("--n-plus and --m must be given together"),
            };
            commands::cmd_verify_assumptions(point, trials, mc_seed, &out)
        }
        Command::VerifySplit {
            n,
            m,
            trials,
            delta,
            rho,
            ordering,
        } => commands::cmd_verify_split(n, m, trials, delta, rho, ordering.into(), mc_seed, &out),
        Command::VerifyBias {
            n_plus,
            n_minus,
            m,
            labels,
            trials,
        } => commands::cmd_verify_bias(n_plus, n_minus, m, labels.into(), trials, mc_seed, &out),
        Command::Figures => commands::cmd_figures(&out),
    }
}
