//! Dense feedforward network whose forward pass keeps every layer's
//! activations, and whose backward pass accepts an adjoint on each of them.
//!
//! Frames are independent: the network has no state across time, so a batch
//! of `T` frames is just a `T × N` matrix pushed through one matrix product
//! per layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value `a`.
    #[inline]
    fn slope_at_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub unit_count: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn tanh(unit_count: usize) -> Self {
        Self {
            unit_count,
            activation: Activation::Tanh,
        }
    }

    pub fn linear(unit_count: usize) -> Self {
        Self {
            unit_count,
            activation: Activation::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `N_l × N_{l-1}`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn units(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    /// Builds parameters from explicit layers, checking the dimension chain.
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        let mut prev = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.fan_in() != prev {
                return Err(Error::dims(format!(
                    "layer {} expects {} inputs, previous layer has {prev}",
                    l + 1,
                    layer.fan_in()
                )));
            }
            if layer.bias.len() != layer.units() || layer.units() == 0 {
                return Err(Error::dims(format!("layer {} bias length", l + 1)));
            }
            prev = layer.units();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::units)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::units).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }

    /// Every scalar parameter: per layer, weights row-major then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.units(), l.fan_in()))
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.units()]).collect(),
        }
    }
}

impl Gradients {
    /// Flattened in the same order as [`NetworkParams::values`].
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.as_slice().iter().chain(b.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.as_mut_slice().iter_mut().chain(b.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.values_mut().for_each(|g| *g *= s);
    }

    fn same_layout(&self, params: &NetworkParams) -> bool {
        self.weights.len() == params.depth()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&params.layers)
                .all(|((w, b), l)| w.shape() == l.weights.shape() && b.len() == l.bias.len())
    }

    pub fn check_layout(&self, params: &NetworkParams) -> Result<()> {
        if self.same_layout(params) {
            Ok(())
        } else {
            Err(Error::dims("gradient layout does not match parameters"))
        }
    }
}

/// Glorot-uniform weights (bound `√(6 / (fan_in + fan_out))`), zero biases.
pub fn init_params(input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<NetworkParams> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument(
            "network needs at least one layer".into(),
        ));
    }
    if input_dim == 0 || specs.iter().any(|s| s.unit_count == 0) {
        return Err(Error::InvalidArgument(
            "layer sizes must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prev = input_dim;
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let bound = (6.0 / (prev + spec.unit_count) as f64).sqrt();
        let data = (0..spec.unit_count * prev)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        layers.push(Layer {
            weights: Matrix::from_vec(spec.unit_count, prev, data)?,
            bias: vec![0.0; spec.unit_count],
            activation: spec.activation,
        });
        prev = spec.unit_count;
    }
    NetworkParams::new(input_dim, layers)
}

/// All activations of all layers over a batch of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    /// `T × N_0`.
    pub inputs: Matrix,
    /// `layers[l]` is `T × N_{l+1}`.
    pub layers: Vec<Matrix>,
    /// Frame indices where a new clip starts; begins with 0.
    pub clip_boundaries: Vec<usize>,
}

impl ActivationTrace {
    pub fn frames(&self) -> usize {
        self.inputs.rows()
    }

    /// Half-open frame ranges of each clip.
    pub fn clip_ranges(&self) -> Vec<std::ops::Range<usize>> {
        clip_ranges(&self.clip_boundaries, self.frames())
    }
}

pub(crate) fn clip_ranges(boundaries: &[usize], frames: usize) -> Vec<std::ops::Range<usize>> {
    boundaries
        .iter()
        .enumerate()
        .map(|(i, &s)| s..boundaries.get(i + 1).copied().unwrap_or(frames))
        .collect()
}

pub fn validate_boundaries(boundaries: &[usize], frames: usize) -> Result<()> {
    if boundaries.first() != Some(&0) {
        return Err(Error::InvalidArgument(
            "clip boundaries must start with frame 0".into(),
        ));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "clip boundaries must be strictly increasing".into(),
        ));
    }
    if boundaries.last().is_some_and(|&b| b >= frames) {
        return Err(Error::InvalidArgument(format!(
            "clip boundary beyond the {frames} frames of the batch"
        )));
    }
    Ok(())
}

fn layer_forward(layer: &Layer, input: &Matrix) -> Result<Matrix> {
    let mut z = input.matmul_bt(&layer.weights)?;
    let n = layer.units();
    crate::exec::for_each_chunk_mut(z.as_mut_slice(), n, |_, row| {
        for (v, b) in row.iter_mut().zip(&layer.bias) {
            *v = layer.activation.apply(*v + b);
        }
    });
    Ok(z)
}

fn check_inputs(params: &NetworkParams, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != params.input_dim {
        return Err(Error::dims(format!(
            "input width {} does not match network input dimension {}",
            inputs.cols(),
            params.input_dim
        )));
    }
    if inputs.rows() == 0 {
        return Err(Error::dims("empty input batch"));
    }
    Ok(())
}

/// Forward pass recording every layer.
pub fn forward(
    params: &NetworkParams,
    inputs: &Matrix,
    clip_boundaries: &[usize],
) -> Result<ActivationTrace> {
    check_inputs(params, inputs)?;
    validate_boundaries(clip_boundaries, inputs.rows())?;
    let mut layers: Vec<Matrix> = Vec::with_capacity(params.depth());
    for layer in &params.layers {
        let prev = layers.last().unwrap_or(inputs);
        let a = layer_forward(layer, prev)?;
        layers.push(a);
    }
    Ok(ActivationTrace {
        inputs: inputs.clone(),
        layers,
        clip_boundaries: clip_boundaries.to_vec(),
    })
}

/// Output-layer activations only.
pub fn forward_output(params: &NetworkParams, inputs: &Matrix) -> Result<Matrix> {
    check_inputs(params, inputs)?;
    let mut a = layer_forward(&params.layers[0], inputs)?;
    for layer in &params.layers[1..] {
        a = layer_forward(layer, &a)?;
    }
    Ok(a)
}

/// Gradient of `Σ_l Σ_{t,k} adjoint[l][t,k] · a[l][t,k]` with respect to
/// the parameters, by reverse accumulation.
pub fn backward(
    params: &NetworkParams,
    trace: &ActivationTrace,
    adjoints: &[Matrix],
) -> Result<Gradients> {
    let depth = params.depth();
    if adjoints.len() != depth || trace.layers.len() != depth {
        return Err(Error::dims(format!(
            "backward: {} adjoints and {} traced layers for a {depth}-layer network",
            adjoints.len(),
            trace.layers.len()
        )));
    }
    for (l, (adj, act)) in adjoints.iter().zip(&trace.layers).enumerate() {
        if adj.shape() != act.shape() {
            return Err(Error::dims(format!(
                "adjoint for layer {} is {:?}, activations are {:?}",
                l + 1,
                adj.shape(),
                act.shape()
            )));
        }
    }

    let mut weights = vec![Matrix::zeros(0, 0); depth];
    let mut biases = vec![Vec::new(); depth];
    let mut from_above: Option<Matrix> = None;
    for l in (0..depth).rev() {
        let layer = &params.layers[l];
        let act = &trace.layers[l];
        let mut delta = adjoints[l].clone();
        if let Some(up) = from_above.take() {
            for (d, u) in delta.as_mut_slice().iter_mut().zip(up.as_slice()) {
                *d += u;
            }
        }
        for (d, a) in delta.as_mut_slice().iter_mut().zip(act.as_slice()) {
            *d *= layer.activation.slope_at_output(*a);
        }
        let below = if l == 0 {
            &trace.inputs
        } else {
            &trace.layers[l - 1]
        };
        weights[l] = delta.matmul_at(below)?;
        let mut b = vec![0.0; layer.units()];
        for row in delta.row_iter() {
            for (bi, d) in b.iter_mut().zip(row) {
                *bi += d;
            }
        }
        biases[l] = b;
        if l > 0 {
            from_above = Some(delta.matmul(&layer.weights)?);
        }
    }
    Ok(Gradients { weights, biases })
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

    fn weighted_sum(params: &NetworkParams, inputs: &Matrix, adjoints: &[Matrix]) -> f64 {
        let trace = forward(params, inputs, &[0]).unwrap();
        trace
            .layers
            .iter()
            .zip(adjoints)
            .map(|(a, w)| crate::numerics::dot(a.as_slice(), w.as_slice()))
            .sum()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = init_params(3, &[LayerSpec::tanh(4), LayerSpec::tanh(2)], 1).unwrap();
        p.values_mut().for_each(|v| *v = 0.0);
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        let trace = forward(&p, &x, &[0]).unwrap();
        for a in &trace.layers {
            assert!(a.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identity_linear_layer() {
        let layer = Layer {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
            activation: Activation::Linear,
        };
        let p = NetworkParams::new(3, vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.25, 0.5, 0.75]]).unwrap();
        assert_eq!(forward(&p, &x, &[0]).unwrap().layers[0], x);
    }

    #[test]
    fn two_layer_hand_evaluation() {
        // 2 -> 2 (tanh) -> 1 (tanh)
        let l1 = Layer {
            weights: Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap(),
            bias: vec![0.1, -0.2],
            activation: Activation::Tanh,
        };
        let l2 = Layer {
            weights: Matrix::from_rows(&[[1.5, -0.75]]).unwrap(),
            bias: vec![0.3],
            activation: Activation::Tanh,
        };
        let p = NetworkParams::new(2, vec![l1, l2]).unwrap();
        let (x0, x1) = (0.8, -0.4);
        let h0 = (0.5 * x0 - 1.0 * x1 + 0.1f64).tanh();
        let h1 = (2.0 * x0 + 0.25 * x1 - 0.2f64).tanh();
        let y = (1.5 * h0 - 0.75 * h1 + 0.3f64).tanh();
        let trace = forward(&p, &Matrix::from_rows(&[[x0, x1]]).unwrap(), &[0]).unwrap();
        assert!((trace.layers[0][(0, 0)] - h0).abs() < 1e-12);
        assert!((trace.layers[0][(0, 1)] - h1).abs() < 1e-12);
        assert!((trace.layers[1][(0, 0)] - y).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let p = init_params(3, &[LayerSpec::tanh(2)], 0).unwrap();
        assert!(forward(&p, &Matrix::zeros(4, 2), &[0]).is_err());
        let trace = forward(&p, &Matrix::zeros(4, 3), &[0]).unwrap();
        assert!(backward(&p, &trace, &[Matrix::zeros(4, 3)]).is_err());
        assert!(backward(&p, &trace, &[]).is_err());
    }

    #[test]
    fn bad_boundaries_rejected() {
        let p = init_params(2, &[LayerSpec::tanh(2)], 0).unwrap();
        let x = Matrix::zeros(5, 2);
        assert!(forward(&p, &x, &[1]).is_err());
        assert!(forward(&p, &x, &[0, 3, 3]).is_err());
        assert!(forward(&p, &x, &[0, 5]).is_err());
        assert!(forward(&p, &x, &[0, 2, 4]).is_ok());
    }

    #[test]
    fn zero_adjoints_give_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = init_params(4, &[LayerSpec::tanh(3), LayerSpec::tanh(2)], 3).unwrap();
        let x = random_matrix(&mut rng, 6, 4);
        let trace = forward(&p, &x, &[0]).unwrap();
        let adj = vec![Matrix::zeros(6, 3), Matrix::zeros(6, 2)];
        let g = backward(&p, &trace, &adj).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_outer_product_rule() {
        let layer = Layer {
            weights: Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap(),
            bias: vec![0.0, 0.0],
            activation: Activation::Linear,
        };
        let p = NetworkParams::new(2, vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let adj = Matrix::from_rows(&[[0.5, -1.0], [2.0, 1.0]]).unwrap();
        let trace = forward(&p, &x, &[0]).unwrap();
        let g = backward(&p, &trace, std::slice::from_ref(&adj)).unwrap();
        // dW[i][j] = Σ_t adj[t][i] x[t][j]
        let expected = Matrix::from_rows(&[
            [0.5 * 1.0 + 2.0 * 3.0, 0.5 * 2.0 - 2.0],
            [-1.0 + 3.0, -2.0 - 1.0],
        ])
        .unwrap();
        assert_eq!(g.weights[0], expected);
        assert_eq!(g.biases[0], vec![2.5, 0.0]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = init_params(5, &[LayerSpec::tanh(4), LayerSpec::tanh(3)], 7).unwrap();
        let x = random_matrix(&mut rng, 7, 5);
        let adj = vec![random_matrix(&mut rng, 7, 4), random_matrix(&mut rng, 7, 3)];
        let trace = forward(&p, &x, &[0]).unwrap();
        let analytic = backward(&p, &trace, &adj).unwrap().to_flat();

        let h = 1e-5;
        let mut probe = p.clone();
        for (i, &g) in analytic.iter().enumerate() {
            let orig = p.to_flat()[i];
            *probe.values_mut().nth(i).unwrap() = orig + h;
            let up = weighted_sum(&probe, &x, &adj);
            *probe.values_mut().nth(i).unwrap() = orig - h;
            let down = weighted_sum(&probe, &x, &adj);
            *probe.values_mut().nth(i).unwrap() = orig;
            let fd = (up - down) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6, "param {i}: analytic {g}, fd {fd}, rel {rel}");
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let specs = [LayerSpec::tanh(10)];
        let a = init_params(10, &specs, 99).unwrap();
        let b = init_params(10, &specs, 99).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(a.values().all(|w| w.abs() <= bound));
        assert_ne!(a, init_params(10, &specs, 100).unwrap());
    }

    #[test]
    fn initialized_layers_have_usable_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let specs = [LayerSpec::tanh(12), LayerSpec::tanh(8), LayerSpec::tanh(4)];
        let p = init_params(20, &specs, 5).unwrap();
        let x = random_matrix(&mut rng, 200, 20);
        let trace = forward(&p, &x, &[0]).unwrap();
        for a in &trace.layers {
            let c = crate::numerics::covariance_of_rows(a).unwrap();
            assert!(crate::numerics::cholesky(&c.matrix, 1e-6).is_ok());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn forward_is_frame_local(seed in any::<u64>(), t in 2usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = init_params(4, &[LayerSpec::tanh(3), LayerSpec::tanh(2)], seed).unwrap();
                let x = random_matrix(&mut rng, t, 4);
                let mut perm: Vec<usize> = (0..t).collect();
                perm.reverse();
                perm.rotate_left(seed as usize % t);
                let a = forward(&p, &x, &[0]).unwrap();
                let b = forward(&p, &x.select_rows(&perm), &[0]).unwrap();
                for (la, lb) in a.layers.iter().zip(&b.layers) {
                    prop_assert_eq!(la.select_rows(&perm), lb.clone());
                }
            }

            #[test]
            fn tanh_outputs_strictly_inside_unit_interval(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = init_params(6, &[LayerSpec::tanh(5), LayerSpec::tanh(3)], seed).unwrap();
                let x = random_matrix(&mut rng, 10, 6);
                let trace = forward(&p, &x, &[0]).unwrap();
                for a in &trace.layers {
                    prop_assert!(a.as_slice().iter().all(|v| v.abs() < 1.0));
                }
            }
        }
    }
}
