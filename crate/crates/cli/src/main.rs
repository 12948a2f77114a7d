//! `tse`: train and evaluate smoothing/entropy networks from the shell.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error,
//! 3 numerical abort.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tse_core::checkpoint::Checkpoint;
use tse_core::config::{ExperimentConfig, ExperimentKind};
use tse_core::datagen::MnistDataset;
use tse_core::experiments::{
    clock_report, dump_weights, gen_preview, load_mnist_dir, mnist_report, split_mnist,
    write_clock_report, write_mnist_report,
};
use tse_core::train::{run, RunOptions, Trainer};
use tse_core::Error;

#[derive(Parser, Debug)]
#[command(
    name = "tse",
    version,
    about = "Temporal-smoothing / entropy network training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network, writing metrics.csv and checkpoint_*.tse.
    Train(TrainArgs),
    /// Clock readout and volatility evaluation of a checkpoint.
    EvalClock(EvalArgs),
    /// MNIST nearest-neighbour accuracy sweep of a checkpoint.
    EvalMnist(EvalArgs),
    /// Write input weights of randomly chosen units as PGM images.
    DumpWeights(DumpArgs),
    /// Write sample training frames as PGM images.
    GenPreview(PreviewArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file (flat `key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the init, data and evaluation seeds.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Directory with the MNIST IDX files; overrides data.mnist_dir.
    #[arg(long, value_name = "DIR")]
    mnist_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Continue from a checkpoint; its stored configuration is used.
    #[arg(long, value_name = "CHECKPOINT", conflicts_with = "config")]
    resume: Option<PathBuf>,
    /// Total iterations to reach.
    #[arg(long, value_name = "N")]
    iterations: Option<u64>,
    /// Wall-clock budget for this session.
    #[arg(long, value_name = "H")]
    hours: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "CHECKPOINT")]
    checkpoint: PathBuf,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_name = "CHECKPOINT")]
    checkpoint: PathBuf,
    /// Layer whose input weights are drawn (1 = first hidden layer).
    #[arg(long, default_value_t = 1)]
    layer: usize,
    /// Number of units.
    #[arg(long, default_value_t = 6)]
    count: usize,
}

#[derive(Args, Debug)]
struct PreviewArgs {
    #[command(flatten)]
    common: Common,
    /// Number of frames.
    #[arg(long, default_value_t = 16)]
    frames: usize,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        Error::Data(_) | Error::Checkpoint(_) | Error::Io(_) => 2,
        Error::TrainingAborted { .. }
        | Error::DegenerateCovariance { .. }
        | Error::NotPositiveDefinite { .. } => 3,
        _ => 1,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::clock_default(),
    };
    if let Some(s) = common.seed {
        cfg.set_seed(s);
    }
    if let Some(d) = &common.mnist_dir {
        cfg.mnist_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn mnist_dir(cfg: &ExperimentConfig) -> Result<&Path, Error> {
    cfg.mnist_dir
        .as_deref()
        .ok_or_else(|| Error::Config("data.mnist_dir is not set".into()))
}

/// The movie half of the MNIST training set, for MNIST configs.
fn movie_images(cfg: &ExperimentConfig) -> Result<Option<MnistDataset>, Error> {
    if cfg.experiment != ExperimentKind::Mnist {
        return Ok(None);
    }
    let (train, _) = load_mnist_dir(mnist_dir(cfg)?)?;
    Ok(Some(split_mnist(&train, cfg.mnist_movie_images)?.0))
}

/// A checkpoint with the command line's seed and data-path overrides.
fn load_checkpoint(path: &Path, common: &Common) -> Result<Checkpoint, Error> {
    let mut ck = Checkpoint::load(path)?;
    if let Some(s) = common.seed {
        ck.config.seed_eval = s;
    }
    if let Some(d) = &common.mnist_dir {
        ck.config.mnist_dir = Some(d.clone());
    }
    Ok(ck)
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let mut trainer = match &args.resume {
        Some(path) => {
            let mut ck = Checkpoint::load(path)?;
            if let Some(d) = &args.common.mnist_dir {
                ck.config.mnist_dir = Some(d.clone());
            }
            if args.common.seed.is_some() {
                return Err(Error::Config(
                    "--seed cannot change the seeds of a resumed run".into(),
                ));
            }
            let movie = movie_images(&ck.config)?;
            Trainer::from_checkpoint(ck, movie)?
        }
        None => {
            let cfg = load_config(&args.common)?;
            let movie = movie_images(&cfg)?;
            Trainer::new(cfg, movie)?
        }
    };
    if let Some(n) = args.iterations {
        trainer.config.iterations = n;
    }
    if let Some(h) = args.hours {
        if h.is_nan() || h <= 0.0 {
            return Err(Error::Config("--hours must be positive".into()));
        }
        trainer.config.hours = Some(h);
    }
    let opts = RunOptions {
        out_dir: args.common.out.clone(),
        iterations: trainer.config.iterations,
        hours: trainer.config.hours,
    };
    let summary = run(&mut trainer, &opts)?;
    match &summary.last {
        Some(v) => println!(
            "iteration {}: f_ts {:.6} f_e {:.6} f_total {:.6}",
            summary.iterations, v.f_ts, v.f_e, v.f_total
        ),
        None => println!("iteration {}: no steps taken", summary.iterations),
    }
    println!("checkpoint {}", summary.final_checkpoint.display());
    Ok(())
}

fn eval_clock(args: EvalArgs) -> Result<(), Error> {
    let ck = load_checkpoint(&args.checkpoint, &args.common)?;
    let report = clock_report(&ck.params, &ck.config)?;
    write_clock_report(&report, &args.common.out)?;
    for m in &report.methods {
        println!("{:<10} rms {:.4}", m.method, m.rms);
    }
    for (l, v) in report.volatility.iter().enumerate() {
        println!("layer {l} volatility {v:.5}");
    }
    Ok(())
}

fn eval_mnist(args: EvalArgs) -> Result<(), Error> {
    let ck = load_checkpoint(&args.checkpoint, &args.common)?;
    if ck.config.experiment != ExperimentKind::Mnist {
        return Err(Error::Config(
            "checkpoint is from a clock experiment, eval-mnist needs mnist".into(),
        ));
    }
    let (train, test) = load_mnist_dir(mnist_dir(&ck.config)?)?;
    let report = mnist_report(&ck.params, &ck.config, &train, &test)?;
    write_mnist_report(&report, &args.common.out)?;
    for (method, sweep) in &report.sweeps {
        let row: Vec<String> = sweep
            .iter()
            .map(|p| format!("{}:{:.4}", p.size, p.accuracy))
            .collect();
        println!("{method:<10} {}", row.join(" "));
    }
    Ok(())
}

fn dump(args: DumpArgs) -> Result<(), Error> {
    let ck = load_checkpoint(&args.checkpoint, &args.common)?;
    let seed = args.common.seed.unwrap_or(ck.config.seed_eval);
    let files = dump_weights(&ck.params, args.layer, args.count, seed, &args.common.out)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn preview(args: PreviewArgs) -> Result<(), Error> {
    let cfg = load_config(&args.common)?;
    let mnist = match cfg.experiment {
        ExperimentKind::Mnist => Some(load_mnist_dir(mnist_dir(&cfg)?)?.0),
        ExperimentKind::Clock => None,
    };
    let files = gen_preview(&cfg, mnist.as_ref(), args.frames, &args.common.out)?;
    println!(
        "{} frames in {}",
        files.len(),
        args.common.out.join("frames").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::EvalClock(a) => eval_clock(a),
        Command::EvalMnist(a) => eval_mnist(a),
        Command::DumpWeights(a) => dump(a),
        Command::GenPreview(a) => preview(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
