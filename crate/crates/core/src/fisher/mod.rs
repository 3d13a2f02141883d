//! Local Fisher estimation and the per-layer reparameterization
//! `W′ = W · G^{1/2}` behind a fixed `G^{-1/2}` input sublayer.
//!
//! Plain gradient descent on `W′` moves the effective weights
//! `W = W′ · G^{-1/2}` along `−∇_W l · G^{-1}`, a natural-gradient step with
//! the layer-local Fisher `G`.

mod state;
mod subsystem;

pub use state::{batch_fisher, estimate_local_fisher, FisherState};
pub use subsystem::{
    reconstructed_backward, reconstructed_forward, refresh_layer_transform, subsystem_forward,
    ReconstructedCache, ReconstructedNetwork, RefreshReport, SubsystemCache, SubsystemLayer,
    REFRESH_LIMIT,
};
