//! Evaluation and export commands over trained networks.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, ExperimentKind, PcaSource};
use crate::datagen::{
    derive_seed, load_mnist, make_mnist_clip, write_pgm, ClockMovie, ClockState, Frame,
    MnistDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_sweep, angle_targets, fit_affine_readout, layer_volatility, prediction_rms,
    sample_spaced_indices, sample_units, Downsample, LabeledSet, NetworkOutput, PcaProjection,
    RawPixels, Representation, SweepPoint,
};
use crate::exec;
use crate::network::{forward, NetworkParams};
use crate::numerics::{pca_fit, Matrix, Pca};

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Training and test sets from `dir`, which holds the four standard
/// uncompressed IDX files.
pub fn load_mnist_dir(dir: &Path) -> Result<(MnistDataset, MnistDataset)> {
    let load = |images: &str, labels: &str| {
        let (ip, lp) = (dir.join(images), dir.join(labels));
        for p in [&ip, &lp] {
            if !p.is_file() {
                return Err(Error::Data(format!("missing MNIST file {}", p.display())));
            }
        }
        load_mnist(&ip, &lp).map_err(|e| match e {
            Error::Io(io) => Error::Data(format!("{}: {io}", ip.display())),
            other => other,
        })
    };
    Ok((
        load(MNIST_TRAIN_IMAGES, MNIST_TRAIN_LABELS)?,
        load(MNIST_TEST_IMAGES, MNIST_TEST_LABELS)?,
    ))
}

/// Splits training images into the movie half and the labelled pool.
pub fn split_mnist(
    train: &MnistDataset,
    movie_images: usize,
) -> Result<(MnistDataset, MnistDataset)> {
    if movie_images == 0 || movie_images >= train.len() {
        return Err(Error::Config(format!(
            "data.mnist_movie_images = {movie_images} must lie strictly inside the {} training images",
            train.len()
        )));
    }
    Ok((
        train.slice(0..movie_images),
        train.slice(movie_images..train.len()),
    ))
}

fn require(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment == kind {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "checkpoint is from a {} experiment, this command needs {}",
            config.experiment.as_str(),
            kind.as_str()
        )))
    }
}

/// A fresh clock movie for evaluation, started at random hand angles.
pub fn clock_eval_movie(
    config: &ExperimentConfig,
    stream: u64,
    frames: usize,
) -> (Matrix, Vec<f64>) {
    let seed = derive_seed(config.seed_eval, stream);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let start = ClockState::new(rng.random_range(0.0..tau), rng.random_range(0.0..tau));
    let side = config.input_side;
    let mut movie = ClockMovie::new(start, config.walk, side, side, seed);
    let clip = movie.next_segment(frames, derive_seed(seed, 1));
    let alphas = clip.angles().expect("clock clip");
    (clip.frames, alphas)
}

#[derive(Debug, Clone)]
pub struct MethodReadout {
    pub method: String,
    /// Predicted `(cos α, sin α)` for every evaluation frame.
    pub predictions: Matrix,
    pub rms: f64,
}

#[derive(Debug, Clone)]
pub struct ClockReport {
    pub alphas: Vec<f64>,
    /// Frames whose labels were used to fit the readouts.
    pub labelled_frames: Vec<usize>,
    pub methods: Vec<MethodReadout>,
    /// Mean volatility ratio of the input pixels, then of each layer.
    pub volatility: Vec<f64>,
    /// `(layer, unit, activation per frame)` for the traced units.
    pub traces: Vec<(usize, usize, Vec<f64>)>,
}

impl ClockReport {
    pub fn rms(&self, method: &str) -> Option<f64> {
        self.methods
            .iter()
            .find(|m| m.method == method)
            .map(|m| m.rms)
    }
}

/// Affine readout of `(cos α, sin α)` from the network output, a PCA
/// projection and 4×4 block means, fitted on a few spaced frames of an
/// unseen movie and scored on all of its frames.
pub fn clock_report(params: &NetworkParams, config: &ExperimentConfig) -> Result<ClockReport> {
    require(config, ExperimentKind::Clock)?;
    let side = config.input_side;
    let (frames, alphas) = clock_eval_movie(config, 1, config.eval_movie_frames);
    let (pca_frames, _) = clock_eval_movie(config, 2, config.eval_movie_frames);
    let pca = pca_fit(&pca_frames, config.eval_pca_components)?;
    let labelled = sample_spaced_indices(
        frames.rows(),
        config.eval_readout_frames,
        config.eval_readout_min_gap,
        derive_seed(config.seed_eval, 3),
    )?;
    let truth = angle_targets(&alphas);
    let label_truth = truth.select_rows(&labelled);

    let trace = forward(params, &frames, &[0])?;
    let reps: Vec<(&str, Matrix)> = vec![
        (
            "tse",
            trace.layers.last().expect("nonempty network").clone(),
        ),
        ("pca", PcaProjection { pca: &pca }.transform(&frames)?),
        (
            "downsample",
            Downsample {
                height: side,
                width: side,
            }
            .transform(&frames)?,
        ),
    ];
    let methods = reps
        .into_iter()
        .map(|(name, z)| {
            let model = fit_affine_readout(&z.select_rows(&labelled), &label_truth)?;
            let predictions = model.predict(&z)?;
            Ok(MethodReadout {
                method: name.to_string(),
                rms: prediction_rms(&predictions, &truth),
                predictions,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut volatility = vec![layer_volatility(&frames, &[0])];
    volatility.extend(trace.layers.iter().map(|a| layer_volatility(a, &[0])));
    let mut traces = Vec::new();
    for (l, a) in trace.layers.iter().enumerate() {
        let seed = derive_seed(config.seed_eval, 100 + l as u64);
        for u in sample_units(a.cols(), config.eval_traced_units, seed) {
            traces.push((l + 1, u, a.column(u)));
        }
    }
    Ok(ClockReport {
        alphas,
        labelled_frames: labelled,
        methods,
        volatility,
        traces,
    })
}

/// Writes `fig3_readout.csv`, `volatility.csv` and `unit_traces.csv`.
pub fn write_clock_report(report: &ClockReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = String::from("frame,truth_cos,truth_sin,pred_cos,pred_sin,method\n");
    for m in &report.methods {
        for (t, alpha) in report.alphas.iter().enumerate() {
            let p = m.predictions.row(t);
            writeln!(
                s,
                "{t},{},{},{},{},{}",
                alpha.cos(),
                alpha.sin(),
                p[0],
                p[1],
                m.method
            )
            .unwrap();
        }
    }
    fs::write(dir.join("fig3_readout.csv"), s)?;

    let mut s = String::from("layer,volatility_ratio\n");
    for (l, v) in report.volatility.iter().enumerate() {
        writeln!(s, "{l},{v}").unwrap();
    }
    fs::write(dir.join("volatility.csv"), s)?;

    let mut s = String::from("frame");
    for (l, u, _) in &report.traces {
        write!(s, ",layer{l}_unit{u}").unwrap();
    }
    s.push('\n');
    for t in 0..report.alphas.len() {
        write!(s, "{t}").unwrap();
        for (_, _, v) in &report.traces {
            write!(s, ",{}", v[t]).unwrap();
        }
        s.push('\n');
    }
    fs::write(dir.join("unit_traces.csv"), s)?;

    let mut s = String::from("method,rms\n");
    for m in &report.methods {
        writeln!(s, "{},{}", m.method, m.rms).unwrap();
    }
    fs::write(dir.join("readout_rms.csv"), s)?;
    Ok(())
}

/// PCA basis for the MNIST baseline: clean movie images, or one shaky
/// frame of each.
fn mnist_pca(config: &ExperimentConfig, movie_images: &MnistDataset) -> Result<Pca> {
    let n = movie_images.len().min(10_000);
    let sample = movie_images.slice(0..n);
    let frames = match config.eval_pca_source {
        PcaSource::Clean => sample.images,
        PcaSource::Distorted => {
            let rows = exec::map_indices(n, |i| {
                let clip = make_mnist_clip(
                    &sample.frame(i),
                    sample.labels[i],
                    &config.walk,
                    config.clip_frames,
                    derive_seed(config.seed_eval, i as u64),
                    Some(i),
                )?;
                Ok(clip.frames.row(config.clip_frames - 1).to_vec())
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Matrix::from_rows(&rows)?
        }
    };
    pca_fit(&frames, config.eval_pca_components)
}

#[derive(Debug, Clone)]
pub struct MnistReport {
    /// `(method, sweep)` for tse, pca, downsample, raw.
    pub sweeps: Vec<(String, Vec<SweepPoint>)>,
}

impl MnistReport {
    pub fn accuracy(&self, method: &str, size: usize) -> Option<f64> {
        self.sweeps
            .iter()
            .find(|(m, _)| m == method)?
            .1
            .iter()
            .find(|p| p.size == size)
            .map(|p| p.accuracy)
    }
}

/// 1-NN accuracy sweeps over labelled-prefix sizes for the network output
/// and the three pixel-space baselines, on undistorted images.
pub fn mnist_report(
    params: &NetworkParams,
    config: &ExperimentConfig,
    train: &MnistDataset,
    test: &MnistDataset,
) -> Result<MnistReport> {
    require(config, ExperimentKind::Mnist)?;
    let (movie, pool) = split_mnist(train, config.mnist_movie_images)?;
    let sizes: Vec<usize> = config
        .eval_sweep_sizes
        .iter()
        .copied()
        .filter(|&n| n <= pool.len())
        .collect();
    let max = sizes.last().copied().unwrap_or(0);
    let labels = |d: &MnistDataset| d.labels.iter().map(|&l| l as usize).collect::<Vec<_>>();
    let pool = pool.slice(0..max.max(1).min(pool.len()));
    let pool_set = LabeledSet::new(pool.images.clone(), labels(&pool))?;
    let test_set = LabeledSet::new(test.images.clone(), labels(test))?;
    let pca = mnist_pca(config, &movie)?;
    let reprs: Vec<Box<dyn Representation + '_>> = vec![
        Box::new(NetworkOutput { params }),
        Box::new(PcaProjection { pca: &pca }),
        Box::new(Downsample {
            height: train.rows,
            width: train.cols,
        }),
        Box::new(RawPixels),
    ];
    let sweeps = reprs
        .iter()
        .map(|r| {
            Ok((
                r.name().to_string(),
                accuracy_sweep(r.as_ref(), &pool_set, &sizes, &test_set)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MnistReport { sweeps })
}

pub fn write_mnist_report(report: &MnistReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut s = String::from("size,accuracy,method\n");
    for (method, sweep) in &report.sweeps {
        for p in sweep {
            writeln!(s, "{},{},{method}", p.size, p.accuracy).unwrap();
        }
    }
    fs::write(dir.join("fig5_sweep.csv"), s)?;
    Ok(())
}

/// Normalises `weights` to `[0, 1]`; a constant vector maps to 0.5.
pub fn normalize_unit(weights: &[f64]) -> Vec<f64> {
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; weights.len()];
    }
    weights.iter().map(|w| (w - lo) / (hi - lo)).collect()
}

/// Image shape for a fan-in of `n`: square when `n` is a perfect square,
/// otherwise a `1 × n` strip.
pub fn weight_image_shape(n: usize) -> (usize, usize) {
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n {
        (side, side)
    } else {
        (1, n)
    }
}

/// Writes the input weights of `count` seeded-random units of `layer`
/// (1-based) as `weights/layer{l}_unit{k}.pgm`.
pub fn dump_weights(
    params: &NetworkParams,
    layer: usize,
    count: usize,
    seed: u64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if layer == 0 || layer > params.depth() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} does not exist; the network has layers 1..={}",
            params.depth()
        )));
    }
    let w = &params.layers[layer - 1].weights;
    let (h, wd) = weight_image_shape(w.cols());
    let out = dir.join("weights");
    fs::create_dir_all(&out)?;
    sample_units(w.rows(), count, seed)
        .into_iter()
        .map(|k| {
            let path = out.join(format!("layer{layer}_unit{k:03}.pgm"));
            write_pgm(&path, &Frame::new(h, wd, normalize_unit(w.row(k)))?)?;
            Ok(path)
        })
        .collect()
}

/// Writes `count` consecutive training-distribution frames as
/// `frames/*.pgm`: a clock movie, or one shaky-camera clip per digit image.
pub fn gen_preview(
    config: &ExperimentConfig,
    mnist: Option<&MnistDataset>,
    count: usize,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let out = dir.join("frames");
    fs::create_dir_all(&out)?;
    let side = config.input_side;
    let frames: Vec<(String, Frame)> = match config.experiment {
        ExperimentKind::Clock => {
            let mut movie = ClockMovie::new(
                ClockState::default(),
                config.walk,
                side,
                side,
                config.seed_data,
            );
            let clip = movie.next_segment(count, derive_seed(config.seed_data, 1));
            (0..count)
                .map(|t| (format!("clock_{t:05}.pgm"), clip.frame(t)))
                .collect()
        }
        ExperimentKind::Mnist => {
            let data = mnist.ok_or_else(|| Error::Data("preview needs MNIST images".into()))?;
            let frames = count.min(config.clip_frames).max(2);
            let clip = make_mnist_clip(
                &data.frame(0),
                data.labels[0],
                &config.walk,
                frames,
                derive_seed(config.seed_data, 1),
                Some(0),
            )?;
            (0..count.min(frames))
                .map(|t| (format!("mnist_{t:05}.pgm"), clip.frame(t)))
                .collect()
        }
    };
    frames
        .into_iter()
        .map(|(name, f)| {
            let p = out.join(name);
            write_pgm(&p, &f)?;
            Ok(p)
        })
        .collect()
}
