//! Dense feed-forward networks with exact backpropagation.
//!
//! A [`DenseNetwork`] is an ordered list of affine layers, each followed by
//! an element-wise activation. Training-mode forward passes cache the
//! per-layer activations (and dropout masks) that [`DenseNetwork::backward`]
//! consumes; inference never touches the cache.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par;

/// Element-wise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's own output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sigmoid" => Some(Activation::Sigmoid),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer plus activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    /// Builds a layer from explicit parameters.
    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be nonzero".into()));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "weights hold {} values, expected {out_dim}x{in_dim}",
                weights.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "bias length {} != out_dim {out_dim}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and bias.
    pub fn uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = || rng.gen_range(-bound..=bound);
        let weights = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, b)| {
            let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
            self.activation.apply(z)
        }));
    }
}

/// Gradients for a single layer, shaped like the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub d_weights: Vec<f64>,
    pub d_bias: Vec<f64>,
}

/// Per-layer gradients mirroring a [`DenseNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    d_weights: vec![0.0; l.weights.len()],
                    d_bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn check_same_shape(&self, other: &GradientSet) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.d_weights.len() == b.d_weights.len() && a.d_bias.len() == b.d_bias.len()
            });
        if same {
            Ok(())
        } else {
            Err(Error::Shape("gradient sets have different shapes".into()))
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.d_weights.iter_mut().zip(&b.d_weights).for_each(|(x, y)| *x += y);
            a.d_bias.iter_mut().zip(&b.d_bias).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.d_weights.iter().chain(&l.d_bias).copied())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.d_weights.iter_mut().chain(l.d_bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }
}

/// Stochastic-gradient-descent settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout_ratio: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 512,
            dropout_ratio: 0.2,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_ratio) {
            return Err(Error::Argument(format!(
                "dropout_ratio must lie in [0, 1), got {}",
                self.dropout_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct ForwardCache {
    /// Input to each layer (post-dropout output of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Activation output of each layer before dropout.
    outputs: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers for each layer's output, if any.
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    fn activation_count(&self) -> usize {
        self.inputs.len() + usize::from(!self.outputs.is_empty())
    }
}

/// Result of backpropagating through a network.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub grads: GradientSet,
    /// Gradient with respect to the network input.
    pub input_grad: Vec<f64>,
}

/// An ordered stack of dense layers.
#[derive(Debug, Clone)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
    cache: Option<ForwardCache>,
}

impl PartialEq for DenseNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl DenseNetwork {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(Self {
            layers,
            cache: None,
        })
    }

    /// Seeded network with sizes `dims[0] -> dims[1] -> ... -> dims[k]`.
    pub fn uniform<R: Rng + ?Sized>(dims: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::uniform(w[0], w[1], activation, rng))
            .collect();
        Self::from_layers(layers)
    }

    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Shape(format!("invalid layer sizes {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1], activation))
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Layer sizes, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter, layer by layer, weights before bias.
    pub fn parameters(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }

    /// Mutable access by flat index, in [`parameters`](Self::parameters)
    /// order. Panics when out of range.
    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        let mut idx = index;
        for layer in &mut self.layers {
            if idx < layer.weights.len() {
                return &mut layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.bias.len() {
                return &mut layer.bias[idx];
            }
            idx -= layer.bias.len();
        }
        panic!("parameter index {index} out of range");
    }

    /// Number of cached activation vectors (input included), if any.
    pub fn cached_activation_count(&self) -> Option<usize> {
        self.cache.as_ref().map(ForwardCache::activation_count)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.in_dim()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!("input contains {v}")));
        }
        Ok(())
    }

    /// Pure inference pass.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.apply(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Inference over a row-major batch; rows are evaluated independently.
    pub fn infer_batch(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let d = self.in_dim();
        if !rows.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "batch of {} values is not a multiple of input width {d}",
                rows.len()
            )));
        }
        let outputs = par::map_rows(rows, d, |row| self.infer(row));
        let mut flat = Vec::with_capacity(rows.len() / d * self.out_dim());
        for out in outputs {
            flat.extend(out?);
        }
        Ok(flat)
    }

    /// Forward pass. With `training` set the activations are cached for
    /// [`backward`](Self::backward); otherwise this is [`infer`](Self::infer).
    pub fn forward(&mut self, x: &[f64], training: bool) -> Result<Vec<f64>> {
        if training {
            self.forward_train(x, 0.0, &mut NoRng)
        } else {
            self.infer(x)
        }
    }

    /// Training-mode forward pass with inverted dropout on hidden-layer
    /// outputs (every layer except the last).
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x: &[f64],
        dropout_ratio: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut cache = self.cache.take().unwrap_or_default();
        cache.inputs.clear();
        cache.outputs.clear();
        cache.masks.clear();

        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.apply(&cur, &mut out);
            cache.inputs.push(cur);
            let hidden = i + 1 < n_layers;
            if hidden && dropout_ratio > 0.0 {
                let keep = 1.0 - dropout_ratio;
                let mask: Vec<f64> = (0..out.len())
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                cur = out.iter().zip(&mask).map(|(a, m)| a * m).collect();
                cache.masks.push(Some(mask));
            } else {
                cur = out.clone();
                cache.masks.push(None);
            }
            cache.outputs.push(out);
        }
        self.cache = Some(cache);
        Ok(cur)
    }

    /// Backpropagates `output_grad` (dLoss/dOutput) through the cached pass.
    pub fn backward(&self, output_grad: &[f64]) -> Result<Backprop> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a training forward pass".into()))?;
        if output_grad.len() != self.out_dim() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, network outputs {}",
                output_grad.len(),
                self.out_dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = output_grad.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Some(mask) = &cache.masks[i] {
                upstream.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&cache.outputs[i])
                .map(|(g, a)| g * layer.activation.derivative_from_output(*a))
                .collect();
            let input = &cache.inputs[i];
            let mut d_weights = Vec::with_capacity(layer.weights.len());
            for d in &delta {
                d_weights.extend(input.iter().map(|x| d * x));
            }
            let mut down = vec![0.0; layer.in_dim];
            for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                down.iter_mut().zip(row).for_each(|(acc, w)| *acc += w * d);
            }
            grads.push(LayerGradient {
                d_weights,
                d_bias: delta,
            });
            upstream = down;
        }
        grads.reverse();
        Ok(Backprop {
            grads: GradientSet { layers: grads },
            input_grad: upstream,
        })
    }

    /// In-place update `p -= learning_rate * dp`.
    pub fn sgd_step(&mut self, grads: &GradientSet, cfg: &SgdConfig) -> Result<()> {
        let shapes_match = grads.layers.len() == self.layers.len()
            && self.layers.iter().zip(&grads.layers).all(|(l, g)| {
                l.weights.len() == g.d_weights.len() && l.bias.len() == g.d_bias.len()
            });
        if !shapes_match {
            return Err(Error::Shape("gradient set does not match network".into()));
        }
        let lr = cfg.learning_rate;
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.iter_mut().zip(&g.d_weights).for_each(|(p, d)| *p -= lr * d);
            layer.bias.iter_mut().zip(&g.d_bias).for_each(|(p, d)| *p -= lr * d);
        }
        Ok(())
    }
}

/// Gradient reversal: identity forward, `-lambda * g` backward.
pub fn grl_backward(output_grad: &[f64], lambda: f64) -> Vec<f64> {
    debug_assert!(lambda >= 0.0, "lambda must be nonnegative");
    output_grad.iter().map(|g| -lambda * g).collect()
}

/// Never consulted: only used when the dropout ratio is zero.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("dropout disabled")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("dropout disabled")
    }
    fn fill_bytes(&mut self, _: &mut [u8]) {
        unreachable!("dropout disabled")
    }
    fn try_fill_bytes(&mut self, _: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("dropout disabled")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(w: f64, b: f64, act: Activation) -> DenseNetwork {
        DenseNetwork::from_layers(vec![DenseLayer::from_parts(1, 1, vec![w], vec![b], act).unwrap()])
            .unwrap()
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = DenseNetwork::zeros(&[4, 3, 2], Activation::Sigmoid).unwrap();
        assert_eq!(net.infer(&[1.0, -3.0, 7.0, 0.2]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn scalar_logistic() {
        let net = single(0.5, 0.5, Activation::Sigmoid);
        let out = net.infer(&[1.0]).unwrap();
        assert!((out[0] - 0.731_058_578_63).abs() < 1e-11);
    }

    #[test]
    fn feature_extractor_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNetwork::uniform(&[39, 10, 10, 10], Activation::Sigmoid, &mut rng).unwrap();
        let out = net.infer(&[0.3; 39]).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn shape_and_numeric_errors() {
        let net = DenseNetwork::zeros(&[2, 1], Activation::Sigmoid).unwrap();
        assert!(matches!(net.infer(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(net.infer(&[1.0, f64::NAN]), Err(Error::NumericInput(_))));
        let bad = DenseNetwork::from_layers(vec![
            DenseLayer::zeros(2, 3, Activation::Sigmoid),
            DenseLayer::zeros(4, 1, Activation::Sigmoid),
        ]);
        assert!(matches!(bad, Err(Error::Shape(_))));
        assert!(DenseLayer::from_parts(1, 1, vec![f64::INFINITY], vec![0.0], Activation::Sigmoid).is_err());
    }

    #[test]
    fn cache_holds_every_activation() {
        let mut net = DenseNetwork::zeros(&[3, 4, 2], Activation::Sigmoid).unwrap();
        assert_eq!(net.cached_activation_count(), None);
        net.forward(&[0.0; 3], false).unwrap();
        assert_eq!(net.cached_activation_count(), None);
        net.forward(&[0.0; 3], true).unwrap();
        assert_eq!(net.cached_activation_count(), Some(3));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let net = DenseNetwork::zeros(&[2, 2], Activation::Sigmoid).unwrap();
        assert!(matches!(net.backward(&[1.0, 1.0]), Err(Error::State(_))));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = DenseNetwork::uniform(&[3, 5, 2], Activation::Sigmoid, &mut rng).unwrap();
        net.forward(&[0.1, 0.2, 0.3], true).unwrap();
        let bp = net.backward(&[0.0, 0.0]).unwrap();
        assert!(bp.grads.values().all(|v| v == 0.0));
        assert!(bp.input_grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer_gradient() {
        let mut net = single(0.7, -0.1, Activation::Identity);
        net.forward(&[2.0], true).unwrap();
        let bp = net.backward(&[1.0]).unwrap();
        assert_eq!(bp.grads.layers[0].d_weights, vec![2.0]);
        assert_eq!(bp.grads.layers[0].d_bias, vec![1.0]);
        assert_eq!(bp.input_grad, vec![0.7]);
    }

    #[test]
    fn grl_examples() {
        assert_eq!(grl_backward(&[1.0, -2.0], 1.0), vec![-1.0, 2.0]);
        assert!(grl_backward(&[3.0, -5.0], 0.0).iter().all(|v| *v == 0.0));
        assert_eq!(grl_backward(&[4.0], 0.5), vec![-2.0]);
    }

    #[test]
    fn sgd_step_examples() {
        let cfg = SgdConfig::default();
        let mut net = single(1.0, 0.0, Activation::Sigmoid);
        let before = net.clone();
        net.sgd_step(&GradientSet::zeros_like(&before), &cfg).unwrap();
        assert_eq!(net, before);

        let grads = GradientSet {
            layers: vec![LayerGradient {
                d_weights: vec![10.0],
                d_bias: vec![0.0],
            }],
        };
        net.sgd_step(&grads, &cfg).unwrap();
        assert!((net.layers()[0].weights()[0] - 0.999).abs() < 1e-15);

        let wrong = GradientSet::zeros_like(&DenseNetwork::zeros(&[2, 1], Activation::Sigmoid).unwrap());
        assert!(matches!(net.sgd_step(&wrong, &cfg), Err(Error::Shape(_))));
    }

    #[test]
    fn seeded_steps_are_bitwise_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut net = DenseNetwork::uniform(&[4, 6, 2], Activation::Sigmoid, &mut rng).unwrap();
            let cfg = SgdConfig {
                learning_rate: 0.1,
                ..SgdConfig::default()
            };
            for step in 0..2 {
                let x = [0.1 * step as f64, 0.4, -0.2, 0.9];
                net.forward_train(&x, 0.2, &mut rng).unwrap();
                let bp = net.backward(&[1.0, -1.0]).unwrap();
                net.sgd_step(&bp.grads, &cfg).unwrap();
            }
            net.parameters().map(f64::to_bits).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sgd_config_validation() {
        assert!(SgdConfig::default().validate().is_ok());
        let bad_lr = SgdConfig {
            learning_rate: 0.0,
            ..SgdConfig::default()
        };
        assert!(bad_lr.validate().is_err());
        let bad_dropout = SgdConfig {
            dropout_ratio: 1.0,
            ..SgdConfig::default()
        };
        assert!(bad_dropout.validate().is_err());
    }

    #[test]
    fn batch_inference_matches_rowwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseNetwork::uniform(&[3, 4, 2], Activation::Sigmoid, &mut rng).unwrap();
        let rows: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let batch = net.infer_batch(&rows).unwrap();
        for (row, out) in rows.chunks(3).zip(batch.chunks(2)) {
            assert_eq!(net.infer(row).unwrap(), out);
        }
    }
}
