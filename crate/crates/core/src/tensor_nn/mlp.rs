use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Real, Tensor2};
use crate::error::{ensure, Result};

/// Fully connected layer: `y = x Wᵀ + b` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub weight: Tensor2<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor2::zeros(output, input),
            bias: vec![T::zero(); output],
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &Tensor2<T>) -> Tensor2<T> {
        let mut y = Tensor2::zeros(x.rows(), self.out_dim());
        for i in 0..x.rows() {
            let xr = x.row(i);
            let yr = y.row_mut(i);
            for (o, out) in yr.iter_mut().enumerate() {
                let w = self.weight.row(o);
                let mut acc = self.bias[o];
                for (a, b) in xr.iter().zip(w) {
                    acc += *a * *b;
                }
                *out = acc;
            }
        }
        y
    }
}

/// Feedforward network `input -> hidden (ReLU)* -> feature (identity) -> logits`.
///
/// `layer_dims` is `[d_in, hidden.., d_feature, classes]`, so there are
/// `layer_dims.len() - 1` dense layers. The last one is the classifier head;
/// the one before it produces the feature vector `F(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T = f32> {
    layers: Vec<Dense<T>>,
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub weights: Vec<Tensor2<T>>,
    pub biases: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &MlpModel<T>) -> Self {
        Self {
            weights: model
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: model
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.out_dim()])
                .collect(),
        }
    }

    pub fn matches(&self, model: &MlpModel<T>) -> bool {
        self.weights.len() == model.layers.len()
            && self.biases.len() == model.layers.len()
            && model.layers.iter().enumerate().all(|(i, l)| {
                self.weights[i].shape() == l.weight.shape() && self.biases[i].len() == l.bias.len()
            })
    }

    /// Flattened values in the same order as [`MlpModel::parameters`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Tensor2::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

/// Activations recorded during a forward pass: `acts[0]` is the input and
/// `acts[l + 1]` is the (post-activation) output of layer `l`.
pub(crate) struct ForwardCache<T> {
    pub acts: Vec<Tensor2<T>>,
}

impl<T: Real> MlpModel<T> {
    /// Randomly initialised model. Hidden layers use He-uniform, the feature
    /// layer and head Glorot-uniform; biases start at zero.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = layer_dims.len() - 3;
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = if l < hidden {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                let mut layer = Dense::zeros(fan_in, fan_out);
                for v in layer.weight.data_mut() {
                    *v = T::from_f64_lossy(rng.random_range(-limit..limit));
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        Self::check_dims(layer_dims)?;
        Ok(Self {
            layers: layer_dims
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// Assembles a model from explicit layers; consecutive widths must chain.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        ensure!(layers.len() >= 2, "need a feature layer and a head, got {} layers", layers.len());
        for (i, l) in layers.iter().enumerate() {
            ensure!(l.bias.len() == l.out_dim(), "layer {i}: bias length {} != {}", l.bias.len(), l.out_dim());
        }
        for (i, pair) in layers.windows(2).enumerate() {
            ensure!(
                pair[0].out_dim() == pair[1].in_dim(),
                "layer {i} outputs {} but layer {} expects {}",
                pair[0].out_dim(),
                i + 1,
                pair[1].in_dim()
            );
        }
        Ok(Self { layers })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        ensure!(
            dims.len() >= 3,
            "layer_dims needs at least [input, feature, classes], got {dims:?}"
        );
        ensure!(dims.iter().all(|&d| d > 0), "layer widths must be positive: {dims:?}");
        Ok(())
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 2].out_dim()
    }

    pub fn num_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn parameters(&self) -> impl Iterator<Item = &T> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.iter()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.layers.iter_mut().flat_map(|l| {
            let Dense { weight, bias } = l;
            weight.data_mut().iter_mut().chain(bias.iter_mut())
        })
    }

    fn check_batch(&self, batch: &Tensor2<T>) -> Result<()> {
        ensure!(
            batch.cols() == self.input_dim(),
            "batch has {} columns but the model expects {}",
            batch.cols(),
            self.input_dim()
        );
        Ok(())
    }

    pub(crate) fn forward_cached(&self, batch: &Tensor2<T>) -> Result<ForwardCache<T>> {
        self.check_batch(batch)?;
        let relu_layers = self.layers.len() - 2;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&acts[l]);
            if l < relu_layers {
                relu_in_place(&mut y);
            }
            acts.push(y);
        }
        Ok(ForwardCache { acts })
    }

    /// Feature vectors `F(x)`, one row per input row.
    pub fn forward_features(&self, batch: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.check_batch(batch)?;
        let relu_layers = self.layers.len() - 2;
        let mut x = batch.clone();
        for (l, layer) in self.layers[..self.layers.len() - 1].iter().enumerate() {
            x = layer.forward(&x);
            if l < relu_layers {
                relu_in_place(&mut x);
            }
        }
        Ok(x)
    }

    /// Classifier logits, one row per input row.
    pub fn forward_logits(&self, batch: &Tensor2<T>) -> Result<Tensor2<T>> {
        let features = self.forward_features(batch)?;
        Ok(self.layers[self.layers.len() - 1].forward(&features))
    }

    /// Widens the classifier head by `new_classes` zero-initialised units.
    /// Existing parameters are left untouched.
    pub fn expand_outputs(&mut self, new_classes: usize) -> Result<()> {
        ensure!(new_classes >= 1, "expand_outputs needs at least one new class");
        let head = self.layers.last_mut().expect("model has layers");
        head.weight.push_zero_rows(new_classes);
        head.bias.extend(std::iter::repeat_n(T::zero(), new_classes));
        Ok(())
    }

    /// Backpropagates `d_logits` (n × classes) through the cached pass.
    pub(crate) fn backward(&self, cache: &ForwardCache<T>, d_logits: Tensor2<T>) -> Gradients<T> {
        let mut grads = Gradients::zeros_like(self);
        let relu_layers = self.layers.len() - 2;
        let mut delta = d_logits;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x = &cache.acts[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for i in 0..x.rows() {
                let xr = x.row(i);
                let dr = delta.row(i);
                for (o, &d) in dr.iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &xv) in gw.row_mut(o).iter_mut().zip(xr) {
                        *g += d * xv;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = Tensor2::zeros(x.rows(), layer.in_dim());
            for i in 0..x.rows() {
                let pr = prev.row_mut(i);
                for (o, &d) in delta.row(i).iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    for (p, &w) in pr.iter_mut().zip(layer.weight.row(o)) {
                        *p += d * w;
                    }
                }
            }
            // layer l-1 is ReLU-activated iff it is a hidden layer
            if l - 1 < relu_layers {
                for (p, &a) in prev.data_mut().iter_mut().zip(x.data()) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
            }
            delta = prev;
        }
        grads
    }

    pub fn cast<U: Real>(&self) -> MlpModel<U> {
        MlpModel {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.cast(),
                    bias: l.bias.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

fn relu_in_place<T: Real>(t: &mut Tensor2<T>) {
    for v in t.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}
