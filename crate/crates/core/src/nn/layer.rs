use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::Activation;

/// Fully connected layer `a = f(W·[x; 1])`.
///
/// `weights` is `d_out × (d_in + 1)`; the last column holds the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Matrix,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 || weights.cols() < 2 {
            return Err(Error::InvalidNetwork(format!(
                "dense weights must be at least 1x2 (d_out x (d_in+1)), got {:?}",
                weights.shape()
            )));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite("dense layer weights".into()));
        }
        Ok(Self {
            weights,
            activation,
        })
    }

    /// Uniform weights in `±√(6/(d_in + d_out))`, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(
        d_in: usize,
        d_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (d_in + d_out) as f64).sqrt();
        let mut weights = Matrix::zeros(d_out, d_in + 1);
        for i in 0..d_out {
            for w in &mut weights.row_mut(i)[..d_in] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Self {
            weights,
            activation,
        }
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Mutable access for optimizers; the shape must not change.
    pub fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn d_in(&self) -> usize {
        self.weights.cols() - 1
    }

    pub fn d_out(&self) -> usize {
        self.weights.rows()
    }

    /// `z = x_aug · Wᵀ` for an already augmented input.
    pub fn pre_activation(&self, x_aug: &Matrix) -> Result<Matrix> {
        if x_aug.cols() != self.weights.cols() {
            return Err(Error::Shape {
                context: "dense layer input",
                expected: (x_aug.rows(), self.weights.cols()),
                actual: x_aug.shape(),
            });
        }
        Ok(x_aug.matmul_nt(&self.weights)?)
    }
}

/// Per-feature batch normalization followed by an activation.
///
/// Training mode normalizes with batch statistics; evaluation mode with the
/// running estimates `running ← momentum·running + (1 − momentum)·batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub(crate) gamma: Matrix,
    pub(crate) beta: Matrix,
    pub(crate) running_mean: Vec<f64>,
    pub(crate) running_var: Vec<f64>,
    momentum: f64,
    epsilon: f64,
    activation: Activation,
}

impl BatchNormLayer {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(features: usize, activation: Activation) -> Self {
        Self::with_params(
            features,
            activation,
            Self::DEFAULT_MOMENTUM,
            Self::DEFAULT_EPSILON,
        )
        .expect("default batch-norm parameters are valid")
    }

    pub fn with_params(
        features: usize,
        activation: Activation,
        momentum: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if features == 0 {
            return Err(Error::InvalidNetwork(
                "batch norm needs at least one feature".into(),
            ));
        }
        if !(momentum > 0.0 && momentum < 1.0) || !(epsilon > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "batch norm momentum must lie in (0,1) and epsilon be positive, got {momentum}, {epsilon}"
            )));
        }
        Ok(Self {
            gamma: Matrix::filled(1, features, 1.0),
            beta: Matrix::zeros(1, features),
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum,
            epsilon,
            activation,
        })
    }

    pub fn features(&self) -> usize {
        self.gamma.cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    pub fn beta(&self) -> &Matrix {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    /// Folds one batch's statistics into the running estimates. `var` is the
    /// biased batch variance; the running variance stores the unbiased one.
    pub(crate) fn absorb(&mut self, mean: &[f64], var: &[f64], batch: usize) {
        let correction = if batch > 1 {
            batch as f64 / (batch - 1) as f64
        } else {
            1.0
        };
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(var) {
            *r = m * *r + (1.0 - m) * b * correction;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
}

impl Layer {
    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(d) => d.activation(),
            Layer::BatchNorm(b) => b.activation(),
        }
    }
}
