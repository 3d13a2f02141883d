use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt, LinalgError, Matrix, SqrtMethod};
use crate::nn::{
    add_l2_gradient, augment, hadamard, output_delta, softmax_rows, strip_bias_column, Activation,
    DenseLayer, Layer, Network,
};

use super::FisherState;

/// Largest output change a refresh may cause on its probe batch, relative to
/// `max(1, max|z|)`.
pub const REFRESH_LIMIT: f64 = 1e-4;

/// A dense layer rebuilt as `x ↦ f(W′ · G^{-1/2} · x)`: a fixed
/// normalization sublayer followed by trainable weights `W′ = W · G^{1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemLayer {
    base: DenseLayer,
    fisher: FisherState,
}

/// Cached values of one subsystem forward pass.
#[derive(Debug, Clone)]
pub struct SubsystemCache {
    /// Augmented raw input `x_aug`.
    pub input: Matrix,
    /// `u = x_aug · G^{-1/2}`, the input seen by `W′`.
    pub normalized: Matrix,
    pub pre_activation: Matrix,
    pub activation: Matrix,
    pub derivative: Matrix,
}

/// Solver statistics of one refresh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshReport {
    pub iterations: usize,
    pub residual: f64,
    /// Output change on the probe batch, if one was given.
    pub probe_change: Option<f64>,
}

impl SubsystemLayer {
    /// Wraps `layer` with an identity Fisher state, so `W′ = W`.
    pub fn from_dense(layer: DenseLayer, lambda: f64, rho: f64) -> Result<Self> {
        let fisher = FisherState::new(layer.weights().cols(), lambda, rho)?;
        Ok(Self {
            base: layer,
            fisher,
        })
    }

    pub fn base(&self) -> &DenseLayer {
        &self.base
    }

    /// `W′`.
    pub fn transformed_weights(&self) -> &Matrix {
        self.base.weights()
    }

    pub fn transformed_weights_mut(&mut self) -> &mut Matrix {
        self.base.weights_mut()
    }

    pub fn fisher(&self) -> &FisherState {
        &self.fisher
    }

    pub fn fisher_mut(&mut self) -> &mut FisherState {
        &mut self.fisher
    }

    pub fn activation(&self) -> Activation {
        self.base.activation()
    }

    /// `W = W′ · G^{-1/2}`.
    pub fn effective_weights(&self) -> Result<Matrix> {
        if self.fisher.identity {
            return Ok(self.base.weights().clone());
        }
        Ok(self.base.weights().matmul(&self.fisher.g_inv_sqrt)?)
    }

    fn normalize(&self, x_aug: &Matrix) -> Result<Matrix> {
        if x_aug.cols() != self.fisher.dim() {
            return Err(Error::Shape {
                context: "subsystem input",
                expected: (x_aug.rows(), self.fisher.dim()),
                actual: x_aug.shape(),
            });
        }
        if self.fisher.identity {
            return Ok(x_aug.clone());
        }
        Ok(x_aug.matmul(&self.fisher.g_inv_sqrt)?)
    }
}

/// Runs one subsystem: `u = x_aug · G^{-1/2}`, `z = u · W′ᵀ`, `a = f(z)`.
pub fn subsystem_forward(layer: &SubsystemLayer, x_aug: &Matrix) -> Result<SubsystemCache> {
    let normalized = layer.normalize(x_aug)?;
    let z = layer.base.pre_activation(&normalized)?;
    if !z.is_finite() {
        return Err(Error::NonFinite("subsystem pre-activation".into()));
    }
    let act = layer.activation();
    Ok(SubsystemCache {
        input: x_aug.clone(),
        normalized,
        activation: act.apply_matrix(&z),
        derivative: act.derivative_matrix(&z),
        pre_activation: z,
    })
}

fn exact_diagonal_roots(g: &Matrix) -> Option<Result<(Matrix, Matrix)>> {
    let n = g.rows();
    for i in 0..n {
        for j in 0..n {
            if i != j && g[(i, j)] != 0.0 {
                return None;
            }
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| g[(i, i)]).collect();
    if let Some(&value) = diag.iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
        return Some(Err(LinalgError::NotPositiveDefinite { value }.into()));
    }
    let sqrt: Vec<f64> = diag.iter().map(|d| d.sqrt()).collect();
    let inv: Vec<f64> = sqrt.iter().map(|s| 1.0 / s).collect();
    Some(Ok((Matrix::from_diag(&sqrt), Matrix::from_diag(&inv))))
}

fn is_exact_identity(m: &Matrix) -> bool {
    let n = m.rows();
    (0..n).all(|i| (0..n).all(|j| m[(i, j)] == if i == j { 1.0 } else { 0.0 }))
}

/// Installs a new Fisher matrix while keeping the layer's function fixed:
/// recovers `W = W′_old · G_old^{-1/2}`, solves for `G_new^{±1/2}` and sets
/// `W′_new = W · G_new^{1/2}`.
///
/// Diagonal matrices are rooted exactly. With a `probe` batch (augmented
/// inputs) the pre-activations before and after are compared and a change
/// beyond [`REFRESH_LIMIT`] is rejected. On any error the layer is left as it
/// was.
pub fn refresh_layer_transform(
    layer: &mut SubsystemLayer,
    g_new: Matrix,
    method: SqrtMethod,
    tol: f64,
    max_iter: usize,
    probe: Option<&Matrix>,
) -> Result<RefreshReport> {
    if g_new.shape() != (layer.fisher.dim(), layer.fisher.dim()) {
        return Err(Error::Shape {
            context: "Fisher matrix",
            expected: (layer.fisher.dim(), layer.fisher.dim()),
            actual: g_new.shape(),
        });
    }
    let (g_sqrt, g_inv_sqrt, iterations, residual) = match exact_diagonal_roots(&g_new) {
        Some(roots) => {
            let (s, i) = roots?;
            (s, i, 0, 0.0)
        }
        None => {
            let r = spd_sqrt(&g_new, method, tol, max_iter)?;
            (r.sqrt, r.inv_sqrt, r.iterations, r.residual)
        }
    };
    let identity = is_exact_identity(&g_inv_sqrt) && is_exact_identity(&g_sqrt);
    let w = layer.effective_weights()?;
    let w_new = if identity { w } else { w.matmul(&g_sqrt)? };
    if !w_new.is_finite() {
        return Err(Error::NonFinite("refreshed weights".into()));
    }

    let mut candidate = layer.clone();
    *candidate.base.weights_mut() = w_new;
    candidate.fisher.g = g_new;
    candidate.fisher.g_sqrt = g_sqrt;
    candidate.fisher.g_inv_sqrt = g_inv_sqrt;
    candidate.fisher.identity = identity;

    let probe_change = match probe {
        Some(x_aug) => {
            let before = layer.base.pre_activation(&layer.normalize(x_aug)?)?;
            let after = candidate
                .base
                .pre_activation(&candidate.normalize(x_aug)?)?;
            let change = after.max_abs_diff(&before)?;
            let scale = before.max_abs().max(1.0);
            if !(change <= REFRESH_LIMIT * scale) {
                return Err(Error::RefreshInconsistency {
                    change,
                    limit: REFRESH_LIMIT * scale,
                });
            }
            Some(change)
        }
        None => None,
    };
    *layer = candidate;
    Ok(RefreshReport {
        iterations,
        residual,
        probe_change,
    })
}

/// A dense network whose every layer has been rebuilt as a
/// [`SubsystemLayer`]; the output layer included.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedNetwork {
    layers: Vec<SubsystemLayer>,
}

/// Forward pass through a [`ReconstructedNetwork`].
#[derive(Debug, Clone)]
pub struct ReconstructedCache {
    pub layers: Vec<SubsystemCache>,
    pub logits: Matrix,
    pub probabilities: Matrix,
}

impl ReconstructedNetwork {
    /// Rebuilds a dense-only network with identity Fisher states; the result
    /// computes the same function.
    pub fn from_network(net: &Network, lambda: f64, rho: f64) -> Result<Self> {
        let layers = net
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Dense(d) => SubsystemLayer::from_dense(d.clone(), lambda, rho),
                Layer::BatchNorm(_) => Err(Error::InvalidNetwork(
                    "batch-norm layers cannot be rebuilt with Fisher sublayers".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[SubsystemLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [SubsystemLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].base.d_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].base.d_out()
    }

    /// The `W′` matrices; the only trainable state.
    pub fn transformed_weights(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().map(|l| l.transformed_weights())
    }

    pub fn transformed_weights_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .map(|l| l.transformed_weights_mut())
            .collect()
    }

    /// `Σ d_out × (d_in + 1)`; the normalization sublayers hold no
    /// trainable parameters.
    pub fn trainable_parameter_count(&self) -> usize {
        self.transformed_weights()
            .map(|w| w.rows() * w.cols())
            .sum()
    }

    /// The plain network with effective weights `W = W′ · G^{-1/2}`.
    pub fn effective_network(&self) -> Result<Network> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                Ok(Layer::Dense(DenseLayer::new(
                    l.effective_weights()?,
                    l.activation(),
                )?))
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(layers)
    }
}

pub fn reconstructed_forward(
    net: &ReconstructedNetwork,
    inputs: &Matrix,
) -> Result<ReconstructedCache> {
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
    if !inputs.is_finite() {
        return Err(Error::NonFinite("network input".into()));
    }
    let mut caches: Vec<SubsystemCache> = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let x_aug = match caches.last() {
            None => augment(inputs),
            Some(prev) => augment(&prev.activation),
        };
        caches.push(subsystem_forward(layer, &x_aug)?);
    }
    let logits = caches
        .last()
        .expect("at least one layer")
        .activation
        .clone();
    let probabilities = softmax_rows(&logits);
    Ok(ReconstructedCache {
        layers: caches,
        logits,
        probabilities,
    })
}

/// Gradients w.r.t. each `W′`, holding every `G^{-1/2}` constant. The
/// regularizer acts on `W′`.
pub fn reconstructed_backward(
    net: &ReconstructedNetwork,
    cache: &ReconstructedCache,
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
    let mut grads = vec![Matrix::zeros(0, 0); net.layers.len()];
    let mut upstream: Option<Matrix> = None;
    for k in (0..=last).rev() {
        let layer = &net.layers[k];
        let c = &cache.layers[k];
        if c.normalized.cols() != layer.transformed_weights().cols() {
            return Err(Error::CacheMismatch(format!(
                "layer {k}: cached input width {} vs weights {:?}",
                c.normalized.cols(),
                layer.transformed_weights().shape()
            )));
        }
        let dz = if k == last {
            output_delta(&cache.probabilities, targets)?
        } else {
            hadamard(
                upstream.as_ref().expect("set by later layer"),
                &c.derivative,
            )?
        };
        let mut grad = dz.matmul_tn(&c.normalized)?;
        add_l2_gradient(&mut grad, layer.transformed_weights(), l2);
        grads[k] = grad;
        if k > 0 {
            let du = dz.matmul(layer.transformed_weights())?;
            let dx = if layer.fisher.identity {
                du
            } else {
                du.matmul(&layer.fisher.g_inv_sqrt)?
            };
            upstream = Some(strip_bias_column(&dx));
        }
    }
    Ok(grads)
}
