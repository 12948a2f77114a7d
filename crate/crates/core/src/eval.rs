//! Evaluation protocols: least-squares affine readout of `(cos α, sin α)`
//! scored by rms error, and 1-nearest-neighbour classification accuracy as
//! a function of the number of labelled examples. Both run on any
//! [`Representation`] of the raw frames.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::downsample_rows;
use crate::error::{Error, Result};
use crate::exec;
use crate::network::{forward_output, NetworkParams};
use crate::numerics::{CholeskyFactor, Matrix, Pca};

/// Ridge on the normal equations of the readout fit.
pub const READOUT_RIDGE: f64 = 1e-8;

/// Affine map `y = W z + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    /// `outputs × K`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl ReadoutModel {
    pub fn predict(&self, reps: &Matrix) -> Result<Matrix> {
        let mut out = reps.matmul_bt(&self.weights)?;
        for t in 0..out.rows() {
            for (v, b) in out.row_mut(t).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// Least-squares affine fit of `targets` (n × m) on `reps` (n × K) through
/// the normal equations of `[reps | 1]`, ridged by [`READOUT_RIDGE`].
pub fn fit_affine_readout(reps: &Matrix, targets: &Matrix) -> Result<ReadoutModel> {
    let (n, k) = reps.shape();
    if n == 0 || targets.rows() != n {
        return Err(Error::dims(format!(
            "readout: {n} representations but {} targets",
            targets.rows()
        )));
    }
    let mut design = Matrix::zeros(n, k + 1);
    for t in 0..n {
        design.row_mut(t)[..k].copy_from_slice(reps.row(t));
        design[(t, k)] = 1.0;
    }
    let gram = design.matmul_at(&design)?;
    let rhs = design.matmul_at(targets)?;
    let factor = CholeskyFactor::new(&gram, READOUT_RIDGE)?;
    let m = targets.cols();
    let mut weights = Matrix::zeros(m, k);
    let mut bias = vec![0.0; m];
    for (j, b) in bias.iter_mut().enumerate() {
        let beta = factor.solve(&rhs.column(j))?;
        weights.row_mut(j).copy_from_slice(&beta[..k]);
        *b = beta[k];
    }
    Ok(ReadoutModel { weights, bias })
}

/// Rows `(cos α, sin α)`.
pub fn angle_targets(alphas: &[f64]) -> Matrix {
    let rows: Vec<[f64; 2]> = alphas.iter().map(|a| [a.cos(), a.sin()]).collect();
    Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::zeros(0, 2))
}

/// Root-mean-square error over both components and all frames.
pub fn readout_rms(model: &ReadoutModel, reps: &Matrix, alphas: &[f64]) -> Result<f64> {
    if reps.rows() != alphas.len() {
        return Err(Error::dims("readout_rms: frame count mismatch"));
    }
    let pred = model.predict(reps)?;
    Ok(prediction_rms(&pred, &angle_targets(alphas)))
}

pub fn prediction_rms(pred: &Matrix, truth: &Matrix) -> f64 {
    let n = pred.as_slice().len().max(1) as f64;
    let sq: f64 = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    (sq / n).sqrt()
}

/// `count` frame indices in `0..total`, uniformly random subject to
/// consecutive picks being at least `min_gap` apart; sorted.
pub fn sample_spaced_indices(
    total: usize,
    count: usize,
    min_gap: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let span = (count - 1) * min_gap;
    if total == 0 || span >= total {
        return Err(Error::InvalidArgument(format!(
            "cannot place {count} frames {min_gap} apart in {total} frames"
        )));
    }
    let slack = total - 1 - span;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<usize> = (0..count).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    Ok(offsets
        .into_iter()
        .enumerate()
        .map(|(i, o)| o + i * min_gap)
        .collect())
}

/// Representations with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub reps: Matrix,
    pub labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(reps: Matrix, labels: Vec<usize>) -> Result<Self> {
        if reps.rows() != labels.len() {
            return Err(Error::dims(format!(
                "{} representations but {} labels",
                reps.rows(),
                labels.len()
            )));
        }
        Ok(Self { reps, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn prefix(&self, n: usize) -> LabeledSet {
        let idx: Vec<usize> = (0..n).collect();
        LabeledSet {
            reps: self.reps.select_rows(&idx),
            labels: self.labels[..n].to_vec(),
        }
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 1-NN under Euclidean distance; ties go to the lowest labelled index.
pub fn knn_classify(labeled: &LabeledSet, queries: &Matrix) -> Result<Vec<usize>> {
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("empty labelled set".into()));
    }
    if queries.cols() != labeled.reps.cols() {
        return Err(Error::dims(format!(
            "queries have {} dims, labelled set {}",
            queries.cols(),
            labeled.reps.cols()
        )));
    }
    Ok(exec::map_indices(queries.rows(), |q| {
        let query = queries.row(q);
        let mut best = (f64::INFINITY, 0usize);
        for (i, r) in labeled.reps.row_iter().enumerate() {
            let d = squared_distance(query, r);
            if d < best.0 {
                best = (d, i);
            }
        }
        labeled.labels[best.1]
    }))
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}

/// A map from raw frames (one per row) to feature vectors.
pub trait Representation: Sync {
    fn name(&self) -> &str;
    fn transform(&self, frames: &Matrix) -> Result<Matrix>;
}

/// Output layer of a trained network.
pub struct NetworkOutput<'a> {
    pub params: &'a NetworkParams,
}

impl Representation for NetworkOutput<'_> {
    fn name(&self) -> &str {
        "tse"
    }

    fn transform(&self, frames: &Matrix) -> Result<Matrix> {
        forward_output(self.params, frames)
    }
}

pub struct PcaProjection<'a> {
    pub pca: &'a Pca,
}

impl Representation for PcaProjection<'_> {
    fn name(&self) -> &str {
        "pca"
    }

    fn transform(&self, frames: &Matrix) -> Result<Matrix> {
        self.pca.project(frames)
    }
}

/// Means of 4×4 pixel blocks.
pub struct Downsample {
    pub height: usize,
    pub width: usize,
}

impl Representation for Downsample {
    fn name(&self) -> &str {
        "downsample"
    }

    fn transform(&self, frames: &Matrix) -> Result<Matrix> {
        downsample_rows(frames, self.height, self.width)
    }
}

pub struct RawPixels;

impl Representation for RawPixels {
    fn name(&self) -> &str {
        "raw"
    }

    fn transform(&self, frames: &Matrix) -> Result<Matrix> {
        Ok(frames.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub size: usize,
    pub accuracy: f64,
}

/// 1-NN accuracy on `test` using the first `n` items of `pool` as the
/// labelled set, for each `n` in `sizes`. `pool` and `test` hold raw frames.
pub fn accuracy_sweep(
    repr: &dyn Representation,
    pool: &LabeledSet,
    sizes: &[usize],
    test: &LabeledSet,
) -> Result<Vec<SweepPoint>> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument(
            "sweep sizes must be nondecreasing".into(),
        ));
    }
    let max = sizes.last().copied().unwrap_or(0);
    if max > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "sweep size {max} exceeds the labelled pool of {}",
            pool.len()
        )));
    }
    let pool_reps = LabeledSet::new(
        repr.transform(&pool.prefix(max).reps)?,
        pool.labels[..max].to_vec(),
    )?;
    let test_reps = repr.transform(&test.reps)?;
    sizes
        .iter()
        .map(|&n| {
            let pred = knn_classify(&pool_reps.prefix(n), &test_reps)?;
            Ok(SweepPoint {
                size: n,
                accuracy: accuracy(&pred, &test.labels),
            })
        })
        .collect()
}

/// Per-unit `mean squared within-clip frame difference / variance` of one
/// layer's activations (`T × N`). Units with zero variance are skipped.
pub fn unit_volatility(activations: &Matrix, clip_boundaries: &[usize]) -> Vec<f64> {
    let t = activations.rows();
    if t < 2 {
        return Vec::new();
    }
    let ranges = crate::network::clip_ranges(clip_boundaries, t);
    let cov_mean = activations.column_means();
    (0..activations.cols())
        .filter_map(|k| {
            let var = activations
                .row_iter()
                .map(|r| (r[k] - cov_mean[k]).powi(2))
                .sum::<f64>()
                / (t - 1) as f64;
            let (mut sq, mut count) = (0.0, 0usize);
            for r in &ranges {
                for i in r.start + 1..r.end {
                    let d = activations[(i, k)] - activations[(i - 1, k)];
                    sq += d * d;
                    count += 1;
                }
            }
            (var > 0.0 && count > 0).then(|| sq / count as f64 / var)
        })
        .collect()
}

/// Mean unit volatility ratio of a layer.
pub fn layer_volatility(activations: &Matrix, clip_boundaries: &[usize]) -> f64 {
    let v = unit_volatility(activations, clip_boundaries);
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// `count` distinct unit indices out of `units`, chosen by `seed`.
pub fn sample_units(units: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..units).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(count.min(units));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn realizable_readout_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reps = random_matrix(&mut rng, 50, 4);
        let w = Matrix::from_rows(&[[0.5, -1.0, 2.0, 0.0], [1.0, 1.0, -0.5, 0.25]]).unwrap();
        let mut y = reps.matmul_bt(&w).unwrap();
        for t in 0..50 {
            y[(t, 0)] += 0.3;
            y[(t, 1)] -= 0.7;
        }
        let model = fit_affine_readout(&reps, &y).unwrap();
        let pred = model.predict(&reps).unwrap();
        assert!(prediction_rms(&pred, &y) < 1e-8);
    }

    #[test]
    fn two_point_line() {
        let reps = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let y = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let m = fit_affine_readout(&reps, &y).unwrap();
        assert!((m.weights[(0, 0)] - 2.0).abs() < 1e-6);
        assert!(m.bias[0].abs() < 1e-6);
    }

    #[test]
    fn residual_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reps = random_matrix(&mut rng, 80, 5);
        let y = random_matrix(&mut rng, 80, 2);
        let m = fit_affine_readout(&reps, &y).unwrap();
        let resid = m.predict(&reps).unwrap().sub(&y).unwrap();
        let proj = reps.matmul_at(&resid).unwrap();
        assert!(proj.as_slice().iter().all(|v| v.abs() < 1e-6));
        for s in resid.column_means() {
            assert!(s.abs() < 1e-6);
        }
    }

    #[test]
    fn rms_of_perfect_and_zero_predictors() {
        let alphas: Vec<f64> = (0..1000)
            .map(|i| i as f64 * std::f64::consts::TAU / 1000.0)
            .collect();
        let truth = angle_targets(&alphas);
        assert_eq!(prediction_rms(&truth, &truth), 0.0);
        let zero = Matrix::zeros(1000, 2);
        assert!((prediction_rms(&zero, &truth) - 0.5f64.sqrt()).abs() < 1e-12);
        let model = ReadoutModel {
            weights: Matrix::zeros(2, 3),
            bias: vec![0.0, 0.0],
        };
        let r = readout_rms(&model, &Matrix::zeros(1000, 3), &alphas).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn knn_basics() {
        let set =
            LabeledSet::new(Matrix::from_rows(&[[0.0], [10.0]]).unwrap(), vec![0, 1]).unwrap();
        assert_eq!(
            knn_classify(&set, &Matrix::from_rows(&[[1.0], [10.0], [5.0]]).unwrap()).unwrap(),
            vec![0, 1, 0]
        );
        assert!(knn_classify(&set, &Matrix::zeros(1, 2)).is_err());
        let empty = LabeledSet::new(Matrix::zeros(0, 1), vec![]).unwrap();
        assert!(knn_classify(&empty, &Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn knn_is_isometry_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = random_matrix(&mut rng, 60, 2);
        let labels: Vec<usize> = (0..60).map(|i| i % 4).collect();
        let queries = random_matrix(&mut rng, 30, 2);
        let (s, c) = 0.9f64.sin_cos();
        let iso = |m: &Matrix| {
            let rows: Vec<[f64; 2]> = m
                .row_iter()
                .map(|r| [c * r[0] - s * r[1] + 3.0, s * r[0] + c * r[1] - 1.0])
                .collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let a = knn_classify(
            &LabeledSet::new(reps.clone(), labels.clone()).unwrap(),
            &queries,
        )
        .unwrap();
        let b = knn_classify(
            &LabeledSet::new(iso(&reps), labels).unwrap(),
            &iso(&queries),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn self_classification_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool = LabeledSet::new(
            random_matrix(&mut rng, 40, 3),
            (0..40).map(|i| i % 3).collect(),
        )
        .unwrap();
        let sweep = accuracy_sweep(&RawPixels, &pool, &[10, 40], &pool).unwrap();
        assert_eq!(
            sweep[1],
            SweepPoint {
                size: 40,
                accuracy: 1.0
            }
        );
        assert!(accuracy_sweep(&RawPixels, &pool, &[41], &pool).is_err());
        assert!(accuracy_sweep(&RawPixels, &pool, &[20, 10], &pool).is_err());
        let again = accuracy_sweep(&RawPixels, &pool, &[10, 40], &pool).unwrap();
        assert_eq!(sweep, again);
    }

    #[test]
    fn spaced_indices() {
        let idx = sample_spaced_indices(6000, 100, 50, 7).unwrap();
        assert_eq!(idx.len(), 100);
        assert!(idx.windows(2).all(|w| w[1] - w[0] >= 50));
        assert!(*idx.last().unwrap() < 6000);
        assert_eq!(idx, sample_spaced_indices(6000, 100, 50, 7).unwrap());
        assert!(sample_spaced_indices(100, 10, 50, 0).is_err());
    }

    #[test]
    fn volatility_of_white_noise_and_slow_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = 20_000;
        let noise = random_matrix(&mut rng, t, 1);
        let slow =
            Matrix::from_vec(t, 1, (0..t).map(|i| (i as f64 / 500.0).sin()).collect()).unwrap();
        let vn = layer_volatility(&noise, &[0]);
        let vs = layer_volatility(&slow, &[0]);
        assert!((vn - 2.0).abs() < 0.1, "{vn}");
        assert!(vs < 1e-3, "{vs}");
        // constant unit skipped
        assert!(unit_volatility(&Matrix::zeros(10, 1), &[0]).is_empty());
    }

    #[test]
    fn unit_sampling_is_seeded() {
        assert_eq!(sample_units(144, 6, 3), sample_units(144, 6, 3));
        assert_eq!(sample_units(4, 6, 3).len(), 4);
    }
}
