//! Experiment configuration as flat `key = value` text.
//!
//! Keys carry their units (`walk.rotation.std_radians`,
//! `walk.position.time_constant_frames`). Lists are comma separated, `#`
//! starts a comment. Any key left out takes the experiment's default, and
//! [`ExperimentConfig::to_text`] writes every key so a run's output
//! directory records exactly what was used.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::datagen::CameraWalkParams;
use crate::error::{Error, Result};
use crate::network::LayerSpec;
use crate::objective::ObjectiveConfig;
use crate::optimizer::AdamSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Clock,
    Mnist,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Clock => "clock",
            ExperimentKind::Mnist => "mnist",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clock" => Ok(ExperimentKind::Clock),
            "mnist" => Ok(ExperimentKind::Mnist),
            other => Err(Error::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

/// Which frames the MNIST PCA baseline is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaSource {
    Clean,
    Distorted,
}

impl PcaSource {
    fn as_str(self) -> &'static str {
        match self {
            PcaSource::Clean => "clean",
            PcaSource::Distorted => "distorted",
        }
    }
}

impl FromStr for PcaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(PcaSource::Clean),
            "distorted" => Ok(PcaSource::Distorted),
            other => Err(Error::Config(format!("unknown pca source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Frames are `input_side × input_side` pixels.
    pub input_side: usize,
    pub layers: Vec<usize>,
    pub objective: ObjectiveConfig,
    /// Times the jitter is raised ×10 on a degenerate batch before aborting.
    pub jitter_retries: u32,
    pub adam: AdamSettings,
    pub walk: CameraWalkParams,
    pub clip_frames: usize,
    pub clips_per_batch: usize,
    pub mnist_dir: Option<PathBuf>,
    /// Leading training images used for movies; the rest form the labelled pool.
    pub mnist_movie_images: usize,
    pub iterations: u64,
    /// Wall-clock budget; `None` means iterations only.
    pub hours: Option<f64>,
    pub log_every: u64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub log_wall_time: bool,
    pub seed_init: u64,
    pub seed_data: u64,
    pub seed_eval: u64,
    pub eval_movie_frames: usize,
    pub eval_readout_frames: usize,
    pub eval_readout_min_gap: usize,
    pub eval_pca_components: usize,
    pub eval_pca_source: PcaSource,
    pub eval_sweep_sizes: Vec<usize>,
    pub eval_traced_units: usize,
}

pub const DEFAULT_CLOCK_LAYERS: [usize; 9] = [144, 121, 100, 81, 64, 49, 36, 25, 16];
pub const DEFAULT_SWEEP_SIZES: [usize; 8] = [18, 30, 100, 300, 1000, 3000, 10000, 30000];

impl ExperimentConfig {
    pub fn clock_default() -> Self {
        let layers = DEFAULT_CLOCK_LAYERS.to_vec();
        Self {
            experiment: ExperimentKind::Clock,
            input_side: 28,
            objective: ObjectiveConfig::doubling(layers.len()),
            layers,
            jitter_retries: 3,
            adam: AdamSettings::default(),
            walk: CameraWalkParams::clock_default(),
            clip_frames: 2000,
            clips_per_batch: 1,
            mnist_dir: None,
            mnist_movie_images: 30000,
            iterations: 20000,
            hours: None,
            log_every: 10,
            checkpoint_every: 1000,
            log_wall_time: true,
            seed_init: 1,
            seed_data: 2,
            seed_eval: 3,
            eval_movie_frames: 6000,
            eval_readout_frames: 100,
            eval_readout_min_gap: 50,
            eval_pca_components: 16,
            eval_pca_source: PcaSource::Clean,
            eval_sweep_sizes: DEFAULT_SWEEP_SIZES.to_vec(),
            eval_traced_units: 3,
        }
    }

    pub fn mnist_default() -> Self {
        Self {
            experiment: ExperimentKind::Mnist,
            walk: CameraWalkParams::mnist_default(),
            clip_frames: 240,
            clips_per_batch: 1000,
            mnist_dir: Some(PathBuf::from("data/mnist")),
            iterations: 2000,
            checkpoint_every: 100,
            ..Self::clock_default()
        }
    }

    pub fn default_for(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::Clock => Self::clock_default(),
            ExperimentKind::Mnist => Self::mnist_default(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_side * self.input_side
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|&n| LayerSpec::tanh(n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.layers.is_empty() || self.layers.contains(&0) || self.input_side == 0 {
            return bad("layer sizes and input side must be positive".into());
        }
        self.objective
            .validate(self.layers.len())
            .map_err(|e| Error::Config(e.to_string()))?;
        self.adam
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.walk
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.clip_frames < 2 || self.clips_per_batch == 0 {
            return bad("need at least 2 frames per clip and 1 clip per batch".into());
        }
        if self.log_every == 0 {
            return bad("train.log_every must be positive".into());
        }
        if self.hours.is_some_and(|h| !(h > 0.0)) {
            return bad("train.hours must be positive".into());
        }
        if self.input_side < 8 && self.experiment == ExperimentKind::Clock {
            return bad("clock frames must be at least 8x8".into());
        }
        if self.eval_sweep_sizes.windows(2).any(|w| w[0] > w[1]) {
            return bad("eval.sweep_sizes must be nondecreasing".into());
        }
        if self.eval_pca_components == 0 || self.eval_pca_components > self.input_dim() {
            return bad("eval.pca_components must lie in 1..=input pixels".into());
        }
        Ok(())
    }

    /// Parses config text on top of the defaults for its `experiment` key
    /// (clock when absent).
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let kind = entries
            .iter()
            .find(|(k, _, _)| k == "experiment")
            .map(|(_, v, _)| v.parse())
            .transpose()?
            .unwrap_or(ExperimentKind::Clock);
        let mut cfg = Self::default_for(kind);
        let mut set_c = false;
        let mut set_d = false;
        for (key, value, line) in &entries {
            cfg.apply(key, value)
                .map_err(|e| Error::Config(format!("line {line}: {key}: {e}")))?;
            set_c |= key == "objective.c";
            set_d |= key == "objective.d";
        }
        let depth = cfg.layers.len();
        if !set_c {
            cfg.objective.c = ObjectiveConfig::doubling(depth).c;
        }
        if !set_d {
            cfg.objective.d = ObjectiveConfig::doubling(depth).d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let w = &mut self.walk;
        match key {
            "experiment" => self.experiment = value.parse()?,
            "network.input_side_px" => self.input_side = num(value)?,
            "network.layers" => self.layers = list(value)?,
            "objective.c" => self.objective.c = list(value)?,
            "objective.d" => self.objective.d = list(value)?,
            "objective.jitter" => self.objective.jitter = num(value)?,
            "objective.jitter_retries" => self.jitter_retries = num(value)?,
            "adam.rate" => self.adam.rate = num(value)?,
            "adam.beta1" => self.adam.beta1 = num(value)?,
            "adam.beta2" => self.adam.beta2 = num(value)?,
            "adam.epsilon" => self.adam.epsilon = num(value)?,
            "adam.clip_norm" => {
                let c: f64 = num(value)?;
                self.adam.clip_norm = (c > 0.0).then_some(c);
            }
            "walk.position.std_px" => w.position.stationary_std = num(value)?,
            "walk.position.time_constant_frames" => w.position.time_constant = num(value)?,
            "walk.log_scale.std" => w.log_scale.stationary_std = num(value)?,
            "walk.log_scale.time_constant_frames" => w.log_scale.time_constant = num(value)?,
            "walk.rotation.std_radians" => w.rotation.stationary_std = num(value)?,
            "walk.rotation.time_constant_frames" => w.rotation.time_constant = num(value)?,
            "walk.shear.std" => w.shear.stationary_std = num(value)?,
            "walk.shear.time_constant_frames" => w.shear.time_constant = num(value)?,
            "walk.log_aspect.std" => w.log_aspect.stationary_std = num(value)?,
            "walk.log_aspect.time_constant_frames" => w.log_aspect.time_constant = num(value)?,
            "walk.pixel_noise_std" => w.pixel_noise_std = num(value)?,
            "data.clip_frames" => self.clip_frames = num(value)?,
            "data.clips_per_batch" => self.clips_per_batch = num(value)?,
            "data.mnist_dir" => {
                self.mnist_dir = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "data.mnist_movie_images" => self.mnist_movie_images = num(value)?,
            "train.iterations" => self.iterations = num(value)?,
            "train.hours" => {
                let h: f64 = num(value)?;
                self.hours = (h > 0.0).then_some(h);
            }
            "train.log_every" => self.log_every = num(value)?,
            "train.checkpoint_every" => self.checkpoint_every = num(value)?,
            "train.log_wall_time" => self.log_wall_time = boolean(value)?,
            "seed.init" => self.seed_init = num(value)?,
            "seed.data" => self.seed_data = num(value)?,
            "seed.eval" => self.seed_eval = num(value)?,
            "eval.movie_frames" => self.eval_movie_frames = num(value)?,
            "eval.readout_frames" => self.eval_readout_frames = num(value)?,
            "eval.readout_min_gap_frames" => self.eval_readout_min_gap = num(value)?,
            "eval.pca_components" => self.eval_pca_components = num(value)?,
            "eval.pca_source" => self.eval_pca_source = value.parse()?,
            "eval.sweep_sizes" => self.eval_sweep_sizes = list(value)?,
            "eval.traced_units_per_layer" => self.eval_traced_units = num(value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Sets all three seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed_init = seed;
        self.seed_data = seed;
        self.seed_eval = seed;
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        }
        let w = &self.walk;
        let entries: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.as_str().into()),
            ("network.input_side_px", self.input_side.to_string()),
            ("network.layers", join(&self.layers)),
            ("objective.c", join(&self.objective.c)),
            ("objective.d", join(&self.objective.d)),
            ("objective.jitter", self.objective.jitter.to_string()),
            ("objective.jitter_retries", self.jitter_retries.to_string()),
            ("adam.rate", self.adam.rate.to_string()),
            ("adam.beta1", self.adam.beta1.to_string()),
            ("adam.beta2", self.adam.beta2.to_string()),
            ("adam.epsilon", self.adam.epsilon.to_string()),
            (
                "adam.clip_norm",
                self.adam.clip_norm.unwrap_or(0.0).to_string(),
            ),
            (
                "walk.position.std_px",
                w.position.stationary_std.to_string(),
            ),
            (
                "walk.position.time_constant_frames",
                w.position.time_constant.to_string(),
            ),
            ("walk.log_scale.std", w.log_scale.stationary_std.to_string()),
            (
                "walk.log_scale.time_constant_frames",
                w.log_scale.time_constant.to_string(),
            ),
            (
                "walk.rotation.std_radians",
                w.rotation.stationary_std.to_string(),
            ),
            (
                "walk.rotation.time_constant_frames",
                w.rotation.time_constant.to_string(),
            ),
            ("walk.shear.std", w.shear.stationary_std.to_string()),
            (
                "walk.shear.time_constant_frames",
                w.shear.time_constant.to_string(),
            ),
            (
                "walk.log_aspect.std",
                w.log_aspect.stationary_std.to_string(),
            ),
            (
                "walk.log_aspect.time_constant_frames",
                w.log_aspect.time_constant.to_string(),
            ),
            ("walk.pixel_noise_std", w.pixel_noise_std.to_string()),
            ("data.clip_frames", self.clip_frames.to_string()),
            ("data.clips_per_batch", self.clips_per_batch.to_string()),
            (
                "data.mnist_dir",
                self.mnist_dir
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            (
                "data.mnist_movie_images",
                self.mnist_movie_images.to_string(),
            ),
            ("train.iterations", self.iterations.to_string()),
            ("train.hours", self.hours.unwrap_or(0.0).to_string()),
            ("train.log_every", self.log_every.to_string()),
            ("train.checkpoint_every", self.checkpoint_every.to_string()),
            ("train.log_wall_time", self.log_wall_time.to_string()),
            ("seed.init", self.seed_init.to_string()),
            ("seed.data", self.seed_data.to_string()),
            ("seed.eval", self.seed_eval.to_string()),
            ("eval.movie_frames", self.eval_movie_frames.to_string()),
            ("eval.readout_frames", self.eval_readout_frames.to_string()),
            (
                "eval.readout_min_gap_frames",
                self.eval_readout_min_gap.to_string(),
            ),
            ("eval.pca_components", self.eval_pca_components.to_string()),
            ("eval.pca_source", self.eval_pca_source.as_str().into()),
            ("eval.sweep_sizes", join(&self.eval_sweep_sizes)),
            (
                "eval.traced_units_per_layer",
                self.eval_traced_units.to_string(),
            ),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn parse_entries(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

fn num<T: FromStr>(v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse '{v}' as a number")))
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| num(s.trim())).collect()
}

fn boolean(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse '{v}' as a boolean"))),
    }
}
