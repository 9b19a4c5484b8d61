//! Command-line front end: training, evaluation, oracles, and experiment
//! reproduction.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 divergence abort,
//! 4 resource/budget rejection.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "advil",
    version,
    about = "Black-box inference and learning for Markov random fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model per a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Resume from a checkpoint written by a previous run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Dataset root (else ADVIL_DATA_DIR).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Write an intermediate checkpoint every N iterations (0 = only final).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: u64,
    },
    /// Annealed-importance evaluation of a finished run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 100)]
        ais_chains: usize,
        #[arg(long, default_value_t = 10_000)]
        ais_temps: usize,
        /// Data split to score: test, valid, or train.
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Encoder samples per datum for bound-based scoring (DBM).
        #[arg(long, default_value_t = 100)]
        eval_samples: usize,
        /// AIS base model: data (base-rate biases) or uniform.
        #[arg(long, default_value = "data")]
        ais_base: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Exact-oracle bound report for a run or a fresh configuration.
    Oracle {
        #[arg(long, conflicts_with = "config")]
        run: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Output JSON path (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient-condition trace on a desk-scale adversarial run.
    Lemma {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Probe cadence in outer iterations.
        #[arg(long, default_value_t = 100)]
        every: u64,
        #[arg(long, default_value_t = 2_000)]
        z_samples: usize,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic categorical dataset with its ground truth.
    Synth {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "10000,1000,1000")]
        sizes: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a sample grid from a trained run.
    Sample {
        #[arg(long)]
        run: PathBuf,
        /// model-gibbs or decoder.
        #[arg(long)]
        source: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        burnin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output basename; writes <out>.pgm and <out>.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        img_h: Option<usize>,
        #[arg(long)]
        img_w: Option<usize>,
    },
    /// Render metric curves from a metrics CSV to SVG.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        /// Comma-separated metric names.
        #[arg(long)]
        names: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train {
            config,
            out,
            seed,
            resume,
            data_dir,
            checkpoint_every,
        } => commands::train(
            &config,
            &out,
            seed,
            resume.as_deref(),
            data_dir.as_deref(),
            checkpoint_every,
        ),
        Command::Eval {
            run,
            ais_chains,
            ais_temps,
            split,
            seed,
            threads,
            eval_samples,
            ais_base,
            data_dir,
        } => commands::eval(
            &run,
            ais_chains,
            ais_temps,
            &split,
            seed,
            threads,
            eval_samples,
            &ais_base,
            data_dir.as_deref(),
        ),
        Command::Oracle {
            run,
            config,
            seed,
            samples,
            data_dir,
            out,
        } => commands::oracle(
            run.as_deref(),
            config.as_deref(),
            seed,
            samples,
            data_dir.as_deref(),
            out.as_deref(),
        ),
        Command::Lemma {
            config,
            out,
            every,
            z_samples,
            data_dir,
            seed,
        } => commands::lemma(&config, &out, every, z_samples, data_dir.as_deref(), seed),
        Command::Synth {
            d,
            alpha,
            seed,
            sizes,
            out,
        } => commands::synth(d, alpha, seed, &sizes, &out),
        Command::Sample {
            run,
            source,
            count,
            burnin,
            seed,
            out,
            img_h,
            img_w,
        } => commands::sample(
            &run,
            &source,
            count,
            burnin,
            seed,
            out.as_deref(),
            img_h,
            img_w,
        ),
        Command::Plot {
            metrics,
            names,
            out,
        } => commands::plot(&metrics, &names, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<advil::Error>() {
        Some(advil::Error::Config { .. }) | Some(advil::Error::Parse { .. }) => 2,
        Some(advil::Error::Diverged { .. }) => 3,
        Some(advil::Error::BudgetExceeded(_)) => 4,
        Some(advil::Error::Incompatible { .. }) => 2,
        _ => 1,
    }
}
