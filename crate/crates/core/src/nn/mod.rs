//! Feedforward classifiers with softmax cross-entropy, exact backprop and a
//! finite-difference gradient checker.

mod activation;
mod gradcheck;
mod layer;
mod loss;
mod network;

pub use activation::Activation;
pub use gradcheck::{grad_check, GradCheck, GRAD_CHECK_FLOOR};
pub use layer::{BatchNormLayer, DenseLayer, Layer};
pub use loss::{
    accuracy, augment, cross_entropy, l2_penalty, loss_ce_l2, output_delta, regularized_loss,
    softmax_rows,
};
pub use network::{backward, forward, ForwardCache, LayerCache, Mode, Network};

pub(crate) use loss::{add_l2_gradient, strip_bias_column};
pub(crate) use network::hadamard;
