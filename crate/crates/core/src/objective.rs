//! Temporal-smoothing and entropy objectives over an [`ActivationTrace`],
//! with analytic adjoints `∂f/∂a` for every unit at every frame.
//!
//! The smoothing term penalises squared frame-to-frame changes inside each
//! clip. The entropy term is the log-determinant of each layer's sample
//! covariance (frames of all clips pooled), ridged by `jitter·I`. The
//! trained quantity is `f_total = f_ts − f_e`.

use crate::error::{Error, Result};
use crate::network::{backward, forward, ActivationTrace, Gradients, NetworkParams};
use crate::numerics::{center_rows, covariance_of_rows, CholeskyFactor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    /// Temporal-smoothing weight per layer.
    pub c: Vec<f64>,
    /// Entropy weight per layer.
    pub d: Vec<f64>,
    /// Ridge added to every covariance before factorisation.
    pub jitter: f64,
}

pub const DEFAULT_JITTER: f64 = 1e-6;

impl ObjectiveConfig {
    /// `c_l = 2^{l-1}`, `d_l = 10` over `depth` layers.
    pub fn doubling(depth: usize) -> Self {
        Self {
            c: (0..depth).map(|l| 2f64.powi(l as i32)).collect(),
            d: vec![10.0; depth],
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.c.len() != depth || self.d.len() != depth {
            return Err(Error::InvalidArgument(format!(
                "objective has {} smoothing and {} entropy weights for {depth} layers",
                self.c.len(),
                self.d.len()
            )));
        }
        if self
            .c
            .iter()
            .chain(&self.d)
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidArgument(
                "objective weights must be finite and nonnegative".into(),
            ));
        }
        if !(self.jitter > 0.0) || !self.jitter.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "jitter must be positive, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c: self.c.iter().map(|x| x * factor).collect(),
            d: self.d.iter().map(|x| x * factor).collect(),
            jitter: self.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub f_ts: f64,
    pub f_e: f64,
    pub f_total: f64,
    /// Unweighted sum of squared within-clip differences, per layer.
    pub per_layer_ts: Vec<f64>,
    /// `log det(Cov + jitter·I)`, per layer (unweighted).
    pub per_layer_logdet: Vec<f64>,
}

/// A weighted objective term with its per-layer breakdown and adjoints.
#[derive(Debug, Clone)]
pub struct TermEvaluation {
    pub value: f64,
    pub per_layer: Vec<f64>,
    pub adjoints: Vec<Matrix>,
}

fn check_clips(trace: &ActivationTrace) -> Result<()> {
    for r in trace.clip_ranges() {
        if r.len() < 2 {
            return Err(Error::ClipTooShort {
                start: r.start,
                len: r.len(),
            });
        }
    }
    Ok(())
}

/// `f_ts = Σ_l c_l Σ_clips Σ_t Σ_k (a_{l,k,t} − a_{l,k,t−1})²`, differences
/// taken only between frames of the same clip.
pub fn ts_value_and_adjoints(trace: &ActivationTrace, c: &[f64]) -> Result<TermEvaluation> {
    if c.len() != trace.layers.len() {
        return Err(Error::dims(format!(
            "{} smoothing weights for {} layers",
            c.len(),
            trace.layers.len()
        )));
    }
    check_clips(trace)?;
    let ranges = trace.clip_ranges();
    let mut value = 0.0;
    let mut per_layer = Vec::with_capacity(c.len());
    let mut adjoints = Vec::with_capacity(c.len());
    for (a, &cl) in trace.layers.iter().zip(c) {
        let n = a.cols();
        let mut adj = Matrix::zeros(a.rows(), n);
        let mut raw = 0.0;
        for r in &ranges {
            for t in r.start + 1..r.end {
                let (prev, cur) = (a.row(t - 1), a.row(t));
                for k in 0..n {
                    let diff = cur[k] - prev[k];
                    raw += diff * diff;
                    let g = 2.0 * cl * diff;
                    adj[(t, k)] += g;
                    adj[(t - 1, k)] -= g;
                }
            }
        }
        per_layer.push(raw);
        value += cl * raw;
        adjoints.push(adj);
    }
    Ok(TermEvaluation {
        value,
        per_layer,
        adjoints,
    })
}

/// `f_e = Σ_l d_l · log det(Cov(A_l) + jitter·I)`.
///
/// With `C` the jittered covariance (divisor `T − 1`) and `ā` the batch
/// mean, the adjoint of frame `a_t` is `d_l · 2/(T−1) · C⁻¹ (a_t − ā)`; the
/// terms through `ā` vanish because the centred frames sum to zero.
/// Log-determinants are reported for every layer, adjoints are only formed
/// where `d_l ≠ 0`.
pub fn entropy_value_and_adjoints(
    trace: &ActivationTrace,
    d: &[f64],
    jitter: f64,
) -> Result<TermEvaluation> {
    if d.len() != trace.layers.len() {
        return Err(Error::dims(format!(
            "{} entropy weights for {} layers",
            d.len(),
            trace.layers.len()
        )));
    }
    let frames = trace.frames();
    if frames < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: frames,
        });
    }
    let mut value = 0.0;
    let mut per_layer = Vec::with_capacity(d.len());
    let mut adjoints = Vec::with_capacity(d.len());
    for (l, (a, &dl)) in trace.layers.iter().zip(d).enumerate() {
        let cov = covariance_of_rows(a)?;
        let factor = CholeskyFactor::new(&cov.matrix, jitter).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot } => Error::DegenerateCovariance {
                layer: l + 1,
                pivot,
            },
            other => other,
        })?;
        let logdet = factor.logdet();
        per_layer.push(logdet);
        value += dl * logdet;
        if dl == 0.0 {
            adjoints.push(Matrix::zeros(a.rows(), a.cols()));
            continue;
        }
        let inv = factor.inverse();
        let centred = center_rows(a, &cov.mean);
        let mut adj = centred.matmul(&inv)?;
        adj.scale(dl * 2.0 / (frames - 1) as f64);
        adjoints.push(adj);
    }
    Ok(TermEvaluation {
        value,
        per_layer,
        adjoints,
    })
}

/// Value of the combined objective and its per-activation adjoints.
pub fn tse_value_and_adjoints(
    trace: &ActivationTrace,
    config: &ObjectiveConfig,
) -> Result<(ObjectiveValue, Vec<Matrix>)> {
    config.validate(trace.layers.len())?;
    let ts = ts_value_and_adjoints(trace, &config.c)?;
    let e = entropy_value_and_adjoints(trace, &config.d, config.jitter)?;
    let adjoints = ts
        .adjoints
        .into_iter()
        .zip(e.adjoints)
        .map(|(t, en)| t.sub(&en))
        .collect::<Result<Vec<_>>>()?;
    let value = ObjectiveValue {
        f_ts: ts.value,
        f_e: e.value,
        f_total: ts.value - e.value,
        per_layer_ts: ts.per_layer,
        per_layer_logdet: e.per_layer,
    };
    Ok((value, adjoints))
}

/// Objective value only.
pub fn tse_value(
    params: &NetworkParams,
    inputs: &Matrix,
    clip_boundaries: &[usize],
    config: &ObjectiveConfig,
) -> Result<ObjectiveValue> {
    config.validate(params.depth())?;
    let trace = forward(params, inputs, clip_boundaries)?;
    let ts = ts_value_and_adjoints(&trace, &config.c)?;
    let e = entropy_value_and_adjoints(&trace, &vec![0.0; config.d.len()], config.jitter)?;
    let f_e: f64 = e
        .per_layer
        .iter()
        .zip(&config.d)
        .map(|(ld, d)| d * ld)
        .sum();
    Ok(ObjectiveValue {
        f_ts: ts.value,
        f_e,
        f_total: ts.value - f_e,
        per_layer_ts: ts.per_layer,
        per_layer_logdet: e.per_layer,
    })
}

/// Forward, both objectives, backward: `(value, ∂f_total/∂θ)`.
pub fn tse_step_gradient(
    params: &NetworkParams,
    inputs: &Matrix,
    clip_boundaries: &[usize],
    config: &ObjectiveConfig,
) -> Result<(ObjectiveValue, Gradients)> {
    config.validate(params.depth())?;
    let trace = forward(params, inputs, clip_boundaries)?;
    let (value, adjoints) = tse_value_and_adjoints(&trace, config)?;
    let grads = backward(params, &trace, &adjoints)?;
    Ok((value, grads))
}
