//! Multilayer perceptron with hand-written reverse-mode gradients.
//!
//! Hidden layers are tanh, the output layer is affine. Matrices are
//! stored out x in; batches are row-major (one sample per row). ndarray
//! supplies storage and the batched matrix product; the network logic,
//! backpropagation and optimizers live here.

pub mod csv_io;
pub mod optim;
pub mod policy;

use ndarray::{Array1, Array2, Axis};

use crate::error::{BounderError, Result};
use crate::rng::Stream;

pub use optim::{optimizer_step, OptimizerKind, OptimizerState};

/// Layer sizes from input to output, e.g. [34, 128, 128, 12].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Self {
        MlpSpec { layer_sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Configured networks need at least one hidden layer.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(BounderError::Config(
                "network needs at least one hidden layer".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(BounderError::Config("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// One affine layer: weights (out x in) and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros_like(other: &Layer) -> Layer {
        Layer {
            weights: Array2::zeros(other.weights.raw_dim()),
            bias: Array1::zeros(other.bias.raw_dim()),
        }
    }
}

/// Full parameter set of one network. The actor additionally carries a
/// state-independent log standard deviation per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<Layer>,
    pub log_std: Option<Array1<f64>>,
}

impl NetworkWeights {
    /// Uniform fan-in/fan-out initialization.
    pub fn init(spec: &MlpSpec, stream: &mut Stream) -> Self {
        let mut layers = Vec::with_capacity(spec.layer_sizes.len() - 1);
        for w in spec.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                Array2::from_shape_fn((fan_out, fan_in), |_| stream.uniform_in(-bound, bound));
            layers.push(Layer {
                weights,
                bias: Array1::zeros(fan_out),
            });
        }
        NetworkWeights {
            layers,
            log_std: None,
        }
    }

    /// Attach an actor log-std vector initialized to ln(std).
    pub fn with_action_std(mut self, std: f64) -> Self {
        let dim = self.output_dim();
        self.log_std = Some(Array1::from_elem(dim, std.ln()));
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn spec(&self) -> MlpSpec {
        let mut sizes = vec![self.input_dim()];
        for l in &self.layers {
            sizes.push(l.weights.nrows());
        }
        MlpSpec::new(sizes)
    }

    /// Check that every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        }) && self
            .log_std
            .as_ref()
            .map(|s| s.iter().all(|v| v.is_finite()))
            .unwrap_or(true)
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(BounderError::Dimension {
                expected: self.input_dim(),
                got: input.len(),
                context: "forward input".into(),
            });
        }
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).unwrap();
        let y = self.forward_batch(&x);
        Ok(y.row(0).to_vec())
    }

    /// Batched forward pass: rows are samples.
    pub fn forward_batch(&self, input: &Array2<f64>) -> Array2<f64> {
        let mut a = input.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            a = if i < last { z.mapv(f64::tanh) } else { z };
        }
        a
    }

    /// Forward pass retaining per-layer activations for backprop.
    /// `activations[0]` is the input; `activations[i+1]` is the output of
    /// layer i after its activation.
    pub fn forward_cached(&self, input: &Array2<f64>) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = activations[i].dot(&layer.weights.t());
            z += &layer.bias;
            activations.push(if i < last { z.mapv(f64::tanh) } else { z });
        }
        ForwardCache { activations }
    }

    /// Total scalar parameter count (including log_std).
    pub fn num_params(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += l.weights.len() + l.bias.len();
        }
        if let Some(s) = &self.log_std {
            n += s.len();
        }
        n
    }

    /// Flatten all parameters (layer weights row-major, then bias, layer
    /// by layer, then log_std). Used by finite-difference checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        if let Some(s) = &self.log_std {
            out.extend(s.iter());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = flat[i];
                i += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[i];
                i += 1;
            }
        }
        if let Some(s) = &mut self.log_std {
            for v in s.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        debug_assert_eq!(i, flat.len());
    }
}

/// Activations retained by [`NetworkWeights::forward_cached`].
pub struct ForwardCache {
    pub activations: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().unwrap()
    }
}

/// Parameter-shaped gradients.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    pub log_std: Option<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(weights: &NetworkWeights) -> Gradients {
        Gradients {
            layers: weights.layers.iter().map(Layer::zeros_like).collect(),
            log_std: weights.log_std.as_ref().map(|s| Array1::zeros(s.raw_dim())),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
        if let (Some(a), Some(b)) = (self.log_std.as_mut(), other.log_std.as_ref()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights *= factor;
            l.bias *= factor;
        }
        if let Some(s) = &mut self.log_std {
            *s *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        }) && self
            .log_std
            .as_ref()
            .map(|s| s.iter().all(|v| v.is_finite()))
            .unwrap_or(true)
    }
}

/// Reverse-mode gradients of a scalar loss given d(loss)/d(output) for
/// every row of the cached batch. Returns parameter gradients; log_std
/// gradients (when present) are left at zero for the caller to fill.
pub fn backprop(
    weights: &NetworkWeights,
    cache: &ForwardCache,
    output_grad: &Array2<f64>,
) -> Gradients {
    let mut grads = Gradients::zeros_like(weights);
    let mut delta = output_grad.clone();
    for (i, layer) in weights.layers.iter().enumerate().rev() {
        let a_prev = &cache.activations[i];
        grads.layers[i].weights = delta.t().dot(a_prev);
        grads.layers[i].bias = delta.sum_axis(Axis(0));
        if i > 0 {
            // Through the previous layer's tanh.
            let da = delta.dot(&layer.weights);
            let a = &cache.activations[i];
            delta = &da * &a.mapv(|v| 1.0 - v * v);
        }
    }
    grads
}

/// Mean squared error over a batch: mean over rows of the mean squared
/// per-output error.
pub fn mse_loss(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let diff = pred - target;
    diff.mapv(|v| v * v).sum() / (pred.nrows() * pred.ncols()) as f64
}

/// Gradient of [`mse_loss`] with respect to the predictions.
pub fn mse_output_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let scale = 2.0 / (pred.nrows() * pred.ncols()) as f64;
    (pred - target) * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn single_affine(weights: Array2<f64>, bias: Array1<f64>) -> NetworkWeights {
        NetworkWeights {
            layers: vec![Layer { weights, bias }],
            log_std: None,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = single_affine(Array2::eye(2), Array1::zeros(2));
        let y = net.forward(&[0.3, -0.3]).unwrap();
        assert_eq!(y, vec![0.3, -0.3]);
    }

    #[test]
    fn zero_weights_output_bias() {
        let net = single_affine(Array2::zeros((3, 2)), array![5.0, -1.0, 0.25]);
        for input in [[0.0, 0.0], [100.0, -3.0], [0.5, 0.5]] {
            assert_eq!(net.forward(&input).unwrap(), vec![5.0, -1.0, 0.25]);
        }
    }

    #[test]
    fn forward_matches_hand_rolled_oracle() {
        // Independent evaluation with nested loops, no ndarray products.
        let spec = MlpSpec::new(vec![34, 16, 12]);
        let mut stream = Stream::seeded(9);
        let net = NetworkWeights::init(&spec, &mut stream);
        let input: Vec<f64> = (0..34).map(|i| ((i as f64) * 0.37).sin()).collect();

        let mut a = input.clone();
        for (li, layer) in net.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.weights.nrows()];
            for (o, val) in next.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                for (i, x) in a.iter().enumerate() {
                    acc += layer.weights[(o, i)] * x;
                }
                *val = if li + 1 < net.layers.len() { acc.tanh() } else { acc };
            }
            a = next;
        }

        let y = net.forward(&input).unwrap();
        for (got, want) in y.iter().zip(&a) {
            assert_abs_diff_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = single_affine(Array2::eye(2), Array1::zeros(2));
        assert!(matches!(
            net.forward(&[1.0, 2.0, 3.0]),
            Err(BounderError::Dimension { .. })
        ));
    }

    /// Central finite differences of an arbitrary scalar loss.
    fn finite_difference_grad(
        net: &NetworkWeights,
        loss: impl Fn(&NetworkWeights) -> f64,
    ) -> Vec<f64> {
        let h = 1e-6;
        let base = net.flatten();
        let mut grad = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let mut np = net.clone();
            np.assign_flat(&plus);
            let mut nm = net.clone();
            nm.assign_flat(&minus);
            grad[i] = (loss(&np) - loss(&nm)) / (2.0 * h);
        }
        grad
    }

    fn flatten_grads(g: &Gradients) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &g.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        if let Some(s) = &g.log_std {
            out.extend(s.iter());
        }
        out
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let spec = MlpSpec::new(vec![3, 5, 2]);
            let mut stream = Stream::seeded(seed);
            let net = NetworkWeights::init(&spec, &mut stream);
            let x = Array2::from_shape_fn((7, 3), |(r, c)| ((r * 3 + c) as f64 * 0.29).sin());
            let y = Array2::from_shape_fn((7, 2), |(r, c)| ((r * 2 + c) as f64 * 0.13).cos());

            let cache = net.forward_cached(&x);
            let analytic = backprop(&net, &cache, &mse_output_grad(cache.output(), &y));
            let fd = finite_difference_grad(&net, |n| mse_loss(&n.forward_batch(&x), &y));

            let flat = flatten_grads(&analytic);
            for (a, f) in flat.iter().zip(&fd) {
                let denom = f.abs().max(1e-6);
                assert!(
                    (a - f).abs() / denom < 1e-5,
                    "analytic {a} vs fd {f} (seed {seed})"
                );
            }
        }
    }

    #[test]
    fn zero_residual_batch_has_zero_gradient() {
        let spec = MlpSpec::new(vec![2, 4, 2]);
        let mut stream = Stream::seeded(3);
        let net = NetworkWeights::init(&spec, &mut stream);
        let x = array![[0.1, -0.2], [0.4, 0.3]];
        let y = net.forward_batch(&x);
        let cache = net.forward_cached(&x);
        let grads = backprop(&net, &cache, &mse_output_grad(cache.output(), &y));
        for l in &grads.layers {
            assert!(l.weights.iter().all(|v| *v == 0.0));
            assert!(l.bias.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let spec = MlpSpec::new(vec![2, 4, 1]);
        let mut stream = Stream::seeded(4);
        let net = NetworkWeights::init(&spec, &mut stream);
        let x1 = array![[0.3, 0.7], [-0.2, 0.5]];
        let y1 = array![[1.0], [-1.0]];
        let x2 = ndarray::concatenate(Axis(0), &[x1.view(), x1.view()]).unwrap();
        let y2 = ndarray::concatenate(Axis(0), &[y1.view(), y1.view()]).unwrap();

        let c1 = net.forward_cached(&x1);
        let g1 = backprop(&net, &c1, &mse_output_grad(c1.output(), &y1));
        let c2 = net.forward_cached(&x2);
        let g2 = backprop(&net, &c2, &mse_output_grad(c2.output(), &y2));
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            for (x, y) in a.weights.iter().zip(b.weights.iter()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let spec = MlpSpec::new(vec![4, 6, 3]);
        let mut stream = Stream::seeded(5);
        let net = NetworkWeights::init(&spec, &mut stream).with_action_std(0.1);
        let flat = net.flatten();
        assert_eq!(flat.len(), net.num_params());
        let mut other = net.clone();
        other.assign_flat(&flat);
        assert_eq!(net, other);
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![34, 12]).validate().is_err());
        assert!(MlpSpec::new(vec![34, 128, 12]).validate().is_ok());
        assert!(MlpSpec::new(vec![34, 0, 12]).validate().is_err());
    }
}
