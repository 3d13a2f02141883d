use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::layer::{BatchNormLayer, DenseLayer, Layer};
use super::loss::{add_l2_gradient, augment, output_delta, softmax_rows, strip_bias_column};
use super::Activation;

/// Feedforward classifier: a chain of layers whose last member is a dense
/// layer with identity activation, followed by softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Whether batch-norm layers use batch statistics or running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Intermediate values of one forward pass, consumed by [`backward`] and by
/// Fisher estimation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub logits: Matrix,
    pub probabilities: Matrix,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense {
        /// Augmented input `[x | 1]`, batch × (d_in + 1).
        input: Matrix,
        pre_activation: Matrix,
        /// `f′(z)` samples.
        derivative: Matrix,
    },
    BatchNorm {
        normalized: Matrix,
        pre_activation: Matrix,
        derivative: Matrix,
        mean: Vec<f64>,
        var: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.probabilities.rows()
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        };
        match last {
            Layer::Dense(d) if d.activation() == Activation::Identity => {}
            _ => {
                return Err(Error::InvalidNetwork(
                    "the last layer must be dense with identity activation".into(),
                ))
            }
        }
        let mut width = match &layers[0] {
            Layer::Dense(d) => d.d_in(),
            Layer::BatchNorm(_) => {
                return Err(Error::InvalidNetwork(
                    "the first layer must be dense".into(),
                ))
            }
        };
        for (k, layer) in layers.iter().enumerate() {
            width = match layer {
                Layer::Dense(d) if d.d_in() == width => d.d_out(),
                Layer::BatchNorm(b) if b.features() == width => width,
                _ => {
                    return Err(Error::InvalidNetwork(format!(
                        "layer {k} does not accept {width} inputs"
                    )))
                }
            };
        }
        Ok(Self { layers })
    }

    /// Multilayer perceptron with `sizes = [d_in, h_1, …, classes]`.
    ///
    /// With `batch_norm`, each hidden block is `Dense(identity) → BatchNorm(hidden)`.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        batch_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidNetwork(format!(
                "layer sizes must list at least input and output widths, all positive: {sizes:?}"
            )));
        }
        let mut layers = Vec::new();
        let last = sizes.len() - 2;
        for (k, pair) in sizes.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            if k == last {
                layers.push(Layer::Dense(DenseLayer::init_uniform(
                    d_in,
                    d_out,
                    Activation::Identity,
                    rng,
                )));
            } else if batch_norm {
                layers.push(Layer::Dense(DenseLayer::init_uniform(
                    d_in,
                    d_out,
                    Activation::Identity,
                    rng,
                )));
                layers.push(Layer::BatchNorm(BatchNormLayer::new(d_out, hidden)));
            } else {
                layers.push(Layer::Dense(DenseLayer::init_uniform(
                    d_in, d_out, hidden, rng,
                )));
            }
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Layer> {
        self.layers
    }

    pub fn input_dim(&self) -> usize {
        match &self.layers[0] {
            Layer::Dense(d) => d.d_in(),
            Layer::BatchNorm(b) => b.features(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.d_out(),
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    pub fn dense_weights(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d.weights()),
            Layer::BatchNorm(_) => None,
        })
    }

    /// Trainable matrices in a fixed order: dense weights; batch-norm gamma
    /// then beta.
    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => out.push(d.weights()),
                Layer::BatchNorm(b) => {
                    out.push(&b.gamma);
                    out.push(&b.beta);
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => out.push(d.weights_mut()),
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.rows() * p.cols()).sum()
    }

    /// Folds the batch statistics of a training-mode cache into the running
    /// estimates of every batch-norm layer.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::CacheMismatch(format!(
                "{} cached layers for {} network layers",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        if cache.mode != Mode::Train {
            return Ok(());
        }
        let batch = cache.batch();
        for (layer, entry) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Layer::BatchNorm(bn), LayerCache::BatchNorm { mean, var, .. }) = (layer, entry)
            {
                bn.absorb(mean, var, batch);
            }
        }
        Ok(())
    }
}

fn check_finite(m: &Matrix, what: impl FnOnce() -> String) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what()))
    }
}

/// Runs the network on a batch (rows of `inputs`) and caches what
/// [`backward`] needs.
pub fn forward(net: &Network, inputs: &Matrix, mode: Mode) -> Result<ForwardCache> {
    if inputs.cols() != net.input_dim() {
        return Err(Error::Shape {
            context: "network input",
            expected: (inputs.rows(), net.input_dim()),
            actual: inputs.shape(),
        });
    }
    if inputs.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    check_finite(inputs, || "network input".into())?;

    let mut caches = Vec::with_capacity(net.layers.len());
    let mut current = inputs.clone();
    for (k, layer) in net.layers.iter().enumerate() {
        match layer {
            Layer::Dense(dense) => {
                let input = augment(&current);
                let z = dense.pre_activation(&input)?;
                check_finite(&z, || format!("pre-activation of layer {k}"))?;
                let act = dense.activation();
                current = act.apply_matrix(&z);
                caches.push(LayerCache::Dense {
                    input,
                    derivative: act.derivative_matrix(&z),
                    pre_activation: z,
                });
            }
            Layer::BatchNorm(bn) => {
                let (normalized, mean, var, inv_std) = normalize(bn, &current, mode);
                let mut y = normalized.clone();
                for i in 0..y.rows() {
                    let row = y.row_mut(i);
                    let (gamma, beta) = (bn.gamma.row(0), bn.beta.row(0));
                    for ((v, g), b) in row.iter_mut().zip(gamma).zip(beta) {
                        *v = g * *v + b;
                    }
                }
                check_finite(&y, || format!("batch-norm output of layer {k}"))?;
                let act = bn.activation();
                current = act.apply_matrix(&y);
                caches.push(LayerCache::BatchNorm {
                    normalized,
                    derivative: act.derivative_matrix(&y),
                    pre_activation: y,
                    mean,
                    var,
                    inv_std,
                });
            }
        }
    }
    let probabilities = softmax_rows(&current);
    Ok(ForwardCache {
        layers: caches,
        logits: current,
        probabilities,
        mode,
    })
}

type Normalized = (Matrix, Vec<f64>, Vec<f64>, Vec<f64>);

fn normalize(bn: &BatchNormLayer, x: &Matrix, mode: Mode) -> Normalized {
    let (batch, features) = x.shape();
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; features];
            for i in 0..batch {
                for (m, v) in mean.iter_mut().zip(x.row(i)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= batch as f64);
            let mut var = vec![0.0; features];
            for i in 0..batch {
                for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= batch as f64);
            (mean, var)
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| 1.0 / (v + bn.epsilon()).sqrt())
        .collect();
    let mut out = x.clone();
    for i in 0..batch {
        let row = out.row_mut(i);
        for j in 0..features {
            row[j] = (row[j] - mean[j]) * inv_std[j];
        }
    }
    (out, mean, var, inv_std)
}

/// Gradients of `dense` given `dz = ∂l/∂z`: returns `(∂l/∂W, ∂l/∂x)` where the
/// input gradient excludes the bias column.
fn dense_backward(
    dz: &Matrix,
    input_aug: &Matrix,
    weights: &Matrix,
    need_input_grad: bool,
) -> Result<(Matrix, Option<Matrix>)> {
    let grad = dz.matmul_tn(input_aug)?;
    let upstream = if need_input_grad {
        Some(strip_bias_column(&dz.matmul(weights)?))
    } else {
        None
    };
    Ok((grad, upstream))
}

pub(crate) fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            context: "elementwise product",
            expected: a.shape(),
            actual: b.shape(),
        });
    }
    let mut out = a.clone();
    for (o, v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o *= v;
    }
    Ok(out)
}

/// Exact gradients of [`loss_ce_l2`](super::loss_ce_l2) in the order of
/// [`Network::params`].
pub fn backward(
    net: &Network,
    cache: &ForwardCache,
    targets: &[usize],
    l2: f64,
) -> Result<Vec<Matrix>> {
    if cache.layers.len() != net.layers.len() {
        return Err(Error::CacheMismatch(format!(
            "{} cached layers for {} network layers",
            cache.layers.len(),
            net.layers.len()
        )));
    }
    let last = net.layers.len() - 1;
    let mut per_layer: Vec<Vec<Matrix>> = vec![Vec::new(); net.layers.len()];
    let mut upstream: Option<Matrix> = None;

    for k in (0..=last).rev() {
        match (&net.layers[k], &cache.layers[k]) {
            (
                Layer::Dense(dense),
                LayerCache::Dense {
                    input, derivative, ..
                },
            ) => {
                if input.cols() != dense.weights().cols() {
                    return Err(Error::CacheMismatch(format!(
                        "layer {k}: cached input width {} vs weights {:?}",
                        input.cols(),
                        dense.weights().shape()
                    )));
                }
                let dz = if k == last {
                    output_delta(&cache.probabilities, targets)?
                } else {
                    hadamard(upstream.as_ref().expect("set by later layer"), derivative)?
                };
                let (mut grad, up) = dense_backward(&dz, input, dense.weights(), k > 0)?;
                add_l2_gradient(&mut grad, dense.weights(), l2);
                per_layer[k].push(grad);
                upstream = up;
            }
            (
                Layer::BatchNorm(bn),
                LayerCache::BatchNorm {
                    normalized,
                    derivative,
                    inv_std,
                    ..
                },
            ) => {
                let dy = hadamard(upstream.as_ref().expect("set by later layer"), derivative)?;
                let (batch, features) = dy.shape();
                let mut d_gamma = Matrix::zeros(1, features);
                let mut d_beta = Matrix::zeros(1, features);
                for i in 0..batch {
                    for j in 0..features {
                        d_gamma[(0, j)] += dy[(i, j)] * normalized[(i, j)];
                        d_beta[(0, j)] += dy[(i, j)];
                    }
                }
                let mut dx = Matrix::zeros(batch, features);
                for j in 0..features {
                    let g = bn.gamma[(0, j)];
                    match cache.mode {
                        Mode::Train => {
                            let n = batch as f64;
                            let mut sum_dxhat = 0.0;
                            let mut sum_dxhat_xhat = 0.0;
                            for i in 0..batch {
                                let dxhat = dy[(i, j)] * g;
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * normalized[(i, j)];
                            }
                            for i in 0..batch {
                                let dxhat = dy[(i, j)] * g;
                                dx[(i, j)] = inv_std[j] / n
                                    * (n * dxhat - sum_dxhat - normalized[(i, j)] * sum_dxhat_xhat);
                            }
                        }
                        Mode::Eval => {
                            for i in 0..batch {
                                dx[(i, j)] = dy[(i, j)] * g * inv_std[j];
                            }
                        }
                    }
                }
                per_layer[k].push(d_gamma);
                per_layer[k].push(d_beta);
                upstream = Some(dx);
            }
            _ => {
                return Err(Error::CacheMismatch(format!(
                    "layer {k}: cache entry kind differs from layer kind"
                )))
            }
        }
    }
    Ok(per_layer.into_iter().flatten().collect())
}
