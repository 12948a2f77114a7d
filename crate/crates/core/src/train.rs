//! The training loop: fresh movie batches every iteration, one ADAM step on
//! the smoothing-minus-entropy objective, CSV metrics and checkpoints.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::datagen::{
    derive_seed, make_mnist_clip, stack_clips, ClockMovie, ClockState, MnistDataset, MovieClip,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::network::{init_params, Gradients, NetworkParams};
use crate::numerics::Matrix;
use crate::objective::{tse_step_gradient, ObjectiveValue};
use crate::optimizer::AdamState;

/// Frames of one training batch and the start index of each clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub frames: Matrix,
    pub boundaries: Vec<usize>,
}

impl Batch {
    fn from_clips(clips: &[MovieClip]) -> Result<Self> {
        let (frames, boundaries) = stack_clips(clips)?;
        Ok(Self { frames, boundaries })
    }
}

/// Where training batches come from.
#[derive(Debug, Clone)]
pub enum BatchSource {
    /// One continuing clock movie, cut into consecutive segments.
    Clock(ClockMovie),
    /// Shaky-camera clips of randomly drawn still images.
    Mnist(MnistDataset),
}

impl BatchSource {
    pub fn for_config(config: &ExperimentConfig, mnist: Option<MnistDataset>) -> Result<Self> {
        match config.experiment {
            ExperimentKind::Clock => Ok(Self::Clock(ClockMovie::new(
                ClockState::default(),
                config.walk,
                config.input_side,
                config.input_side,
                config.seed_data,
            ))),
            ExperimentKind::Mnist => {
                let data = mnist.ok_or_else(|| {
                    Error::Data("MNIST training needs the training images".into())
                })?;
                if data.rows != config.input_side || data.cols != config.input_side {
                    return Err(Error::Config(format!(
                        "images are {}x{} but network.input_side_px is {}",
                        data.rows, data.cols, config.input_side
                    )));
                }
                if data.len() < config.clips_per_batch {
                    return Err(Error::Data(format!(
                        "{} movie images cannot fill a batch of {} distinct clips",
                        data.len(),
                        config.clips_per_batch
                    )));
                }
                Ok(Self::Mnist(data))
            }
        }
    }

    /// State that, restored, regenerates the same future batches.
    pub fn state(&self) -> Vec<f64> {
        match self {
            Self::Clock(movie) => movie.state_vector(),
            Self::Mnist(_) => Vec::new(),
        }
    }

    pub fn restore(&mut self, state: &[f64]) -> Result<()> {
        match self {
            Self::Clock(movie) => movie.restore_state(state),
            Self::Mnist(_) if state.is_empty() => Ok(()),
            Self::Mnist(_) => Err(Error::Checkpoint(
                "MNIST training keeps no generator state".into(),
            )),
        }
    }

    /// The batch for `iteration` (1-based).
    pub fn generate(&mut self, config: &ExperimentConfig, iteration: u64) -> Result<Batch> {
        let seed = derive_seed(config.seed_data, iteration);
        match self {
            Self::Clock(movie) => {
                let clips: Vec<MovieClip> = (0..config.clips_per_batch)
                    .map(|j| movie.next_segment(config.clip_frames, derive_seed(seed, j as u64)))
                    .collect();
                Batch::from_clips(&clips)
            }
            Self::Mnist(data) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let picks = rand::seq::index::sample(&mut rng, data.len(), config.clips_per_batch)
                    .into_vec();
                let clips = exec::map_indices(picks.len(), |j| {
                    let i = picks[j];
                    make_mnist_clip(
                        &data.frame(i),
                        data.labels[i],
                        &config.walk,
                        config.clip_frames,
                        derive_seed(seed, j as u64 + 1),
                        Some(i),
                    )
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                Batch::from_clips(&clips)
            }
        }
    }
}

/// One completed iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: u64,
    /// Objective on the batch, before the update.
    pub value: ObjectiveValue,
    /// Jitter that was finally used.
    pub jitter: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: ExperimentConfig,
    pub params: NetworkParams,
    pub adam: AdamState,
    /// Completed iterations.
    pub iteration: u64,
    pub source: BatchSource,
    /// Seconds spent in earlier sessions of this run.
    pub elapsed_before: f64,
    pub best_total: f64,
}

impl Trainer {
    pub fn new(config: ExperimentConfig, mnist: Option<MnistDataset>) -> Result<Self> {
        config.validate()?;
        let params = init_params(config.input_dim(), &config.layer_specs(), config.seed_init)?;
        let adam = AdamState::for_params(config.adam, &params);
        let source = BatchSource::for_config(&config, mnist)?;
        Ok(Self {
            config,
            params,
            adam,
            iteration: 0,
            source,
            elapsed_before: 0.0,
            best_total: f64::INFINITY,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, mnist: Option<MnistDataset>) -> Result<Self> {
        ck.config.validate()?;
        if ck.params.layer_sizes() != ck.config.layers
            || ck.params.input_dim != ck.config.input_dim()
        {
            return Err(Error::Checkpoint(
                "network shape disagrees with the stored configuration".into(),
            ));
        }
        let mut source = BatchSource::for_config(&ck.config, mnist)?;
        source.restore(&ck.generator_state)?;
        Ok(Self {
            config: ck.config,
            params: ck.params,
            adam: ck.adam,
            iteration: ck.iteration,
            source,
            elapsed_before: ck.summary.get(4).copied().unwrap_or(0.0),
            best_total: ck.summary.get(3).copied().unwrap_or(f64::INFINITY),
        })
    }

    /// Generates the next batch and trains on it.
    pub fn step(&mut self) -> Result<StepReport> {
        let batch = self.source.generate(&self.config, self.iteration + 1)?;
        self.train_on(&batch)
    }

    /// One ADAM step on a given batch.
    pub fn train_on(&mut self, batch: &Batch) -> Result<StepReport> {
        let iteration = self.iteration + 1;
        let (value, grads, jitter) =
            gradient_with_escalation(&self.config, &self.params, batch, iteration)?;
        self.apply(iteration, value, &grads, jitter)
    }

    fn apply(
        &mut self,
        iteration: u64,
        value: ObjectiveValue,
        grads: &Gradients,
        jitter: f64,
    ) -> Result<StepReport> {
        self.adam.step(&mut self.params, grads)?;
        if !self.params.is_finite() {
            return Err(Error::TrainingAborted {
                iteration,
                reason: "parameters became non-finite".into(),
            });
        }
        self.iteration = iteration;
        self.best_total = self.best_total.min(value.f_total);
        Ok(StepReport {
            iteration,
            value,
            jitter,
        })
    }

    /// A checkpoint whose generator continues from `generator_state`.
    pub fn checkpoint_with(
        &self,
        generator_state: Vec<f64>,
        last: Option<&ObjectiveValue>,
        elapsed: f64,
    ) -> Checkpoint {
        let (ts, e, total) = last.map_or((f64::NAN, f64::NAN, f64::NAN), |v| {
            (v.f_ts, v.f_e, v.f_total)
        });
        Checkpoint {
            config: self.config.clone(),
            iteration: self.iteration,
            params: self.params.clone(),
            adam: self.adam.clone(),
            generator_state,
            summary: vec![ts, e, total, self.best_total, elapsed],
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_with(self.source.state(), None, self.elapsed_before)
    }
}

/// Gradient on `batch`, raising the jitter ×10 on a degenerate covariance
/// up to `jitter_retries` times.
fn gradient_with_escalation(
    config: &ExperimentConfig,
    params: &NetworkParams,
    batch: &Batch,
    iteration: u64,
) -> Result<(ObjectiveValue, Gradients, f64)> {
    let mut objective = config.objective.clone();
    let mut attempt = 0;
    loop {
        match tse_step_gradient(params, &batch.frames, &batch.boundaries, &objective) {
            Ok((value, grads)) => {
                if !value.f_total.is_finite() || !grads.norm().is_finite() {
                    return Err(Error::TrainingAborted {
                        iteration,
                        reason: "objective or gradient is not finite".into(),
                    });
                }
                return Ok((value, grads, objective.jitter));
            }
            Err(Error::DegenerateCovariance { layer, pivot }) => {
                if attempt >= config.jitter_retries {
                    return Err(Error::TrainingAborted {
                        iteration,
                        reason: format!(
                            "layer {layer} covariance is degenerate (pivot {pivot}) \
                             with jitter {:e}",
                            objective.jitter
                        ),
                    });
                }
                attempt += 1;
                objective.jitter *= 10.0;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Header of `metrics.csv` for a network of `depth` layers.
pub fn metrics_header(depth: usize, wall_time: bool) -> String {
    let mut h = String::from("iteration,f_ts,f_e,f_total");
    for l in 1..=depth {
        write!(h, ",logdet_{l}").unwrap();
    }
    if wall_time {
        h.push_str(",wall_seconds");
    }
    h
}

pub fn metrics_row(report: &StepReport, wall_seconds: Option<f64>) -> String {
    let v = &report.value;
    let mut row = format!("{},{},{},{}", report.iteration, v.f_ts, v.f_e, v.f_total);
    for ld in &v.per_layer_logdet {
        write!(row, ",{ld}").unwrap();
    }
    if let Some(s) = wall_seconds {
        write!(row, ",{s:.3}").unwrap();
    }
    row
}

/// Stopping rule and output location for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Stop once this many iterations are complete.
    pub iterations: u64,
    /// Stop once this session has run this long.
    pub hours: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub iterations: u64,
    pub last: Option<ObjectiveValue>,
    pub final_checkpoint: PathBuf,
}

fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint_{iteration:08}.tse"))
}

/// Opens `metrics.csv`, keeping rows up to `iteration` when resuming.
fn open_metrics(path: &Path, header: &str, iteration: u64) -> Result<fs::File> {
    let mut kept = String::new();
    if iteration > 0 {
        if let Ok(old) = fs::read_to_string(path) {
            let mut lines = old.lines();
            if lines.next() == Some(header) {
                for line in lines {
                    let it: Option<u64> = line.split(',').next().and_then(|s| s.parse().ok());
                    if it.is_some_and(|i| i <= iteration) {
                        kept.push_str(line);
                        kept.push('\n');
                    }
                }
            }
        }
    }
    let mut f = fs::File::create(path)?;
    writeln!(f, "{header}")?;
    f.write_all(kept.as_bytes())?;
    Ok(f)
}

/// Trains until the iteration or time budget runs out, writing
/// `config.txt`, `metrics.csv` and checkpoints into `opts.out_dir`.
///
/// The batch for the next iteration is synthesised while the current
/// gradient is computed.
pub fn run(trainer: &mut Trainer, opts: &RunOptions) -> Result<RunSummary> {
    fs::create_dir_all(&opts.out_dir)?;
    fs::write(opts.out_dir.join("config.txt"), trainer.config.to_text())?;
    let cfg = trainer.config.clone();
    let header = metrics_header(cfg.layers.len(), cfg.log_wall_time);
    let mut metrics = open_metrics(
        &opts.out_dir.join("metrics.csv"),
        &header,
        trainer.iteration,
    )?;

    let start = Instant::now();
    let before = trainer.elapsed_before;
    let elapsed = || before + start.elapsed().as_secs_f64();
    let out_of_time = || {
        opts.hours
            .is_some_and(|h| start.elapsed().as_secs_f64() >= h * 3600.0)
    };

    let mut resume_state = trainer.source.state();
    let mut pending: Option<Batch> = None;
    let mut last: Option<ObjectiveValue> = None;
    let mut last_logged = trainer.iteration;
    while trainer.iteration < opts.iterations && !out_of_time() {
        let it = trainer.iteration + 1;
        let batch = match pending.take() {
            Some(b) => b,
            None => trainer.source.generate(&cfg, it)?,
        };
        resume_state = trainer.source.state();
        let want_next = it < opts.iterations;
        let (grad, next) = {
            let Trainer { params, source, .. } = &mut *trainer;
            let params: &NetworkParams = params;
            exec::join(
                || gradient_with_escalation(&cfg, params, &batch, it),
                || want_next.then(|| source.generate(&cfg, it + 1)),
            )
        };
        let (value, grads, jitter) = grad?;
        pending = next.transpose()?;
        let report = trainer.apply(it, value, &grads, jitter)?;

        if it == 1 || it.is_multiple_of(cfg.log_every) || it == opts.iterations {
            let wall = cfg.log_wall_time.then(elapsed);
            writeln!(metrics, "{}", metrics_row(&report, wall))?;
            last_logged = it;
        }
        if cfg.checkpoint_every > 0 && it.is_multiple_of(cfg.checkpoint_every) {
            trainer
                .checkpoint_with(resume_state.clone(), Some(&report.value), elapsed())
                .save(&checkpoint_path(&opts.out_dir, it))?;
        }
        last = Some(report.value);
    }
    if let (Some(v), true) = (&last, last_logged < trainer.iteration) {
        let report = StepReport {
            iteration: trainer.iteration,
            value: v.clone(),
            jitter: f64::NAN,
        };
        writeln!(
            metrics,
            "{}",
            metrics_row(&report, cfg.log_wall_time.then(elapsed))
        )?;
    }
    metrics.flush()?;
    // A batch synthesised ahead but never used is dropped; the saved state
    // regenerates it on resume.
    if pending.is_some() {
        trainer.source.restore(&resume_state)?;
    }
    trainer.elapsed_before = elapsed();
    let final_checkpoint = opts.out_dir.join("checkpoint_final.tse");
    trainer
        .checkpoint_with(resume_state, last.as_ref(), trainer.elapsed_before)
        .save(&final_checkpoint)?;
    Ok(RunSummary {
        iterations: trainer.iteration,
        last,
        final_checkpoint,
    })
}
