use crate::error::{Error, Result};
use crate::fisher::{
    estimate_local_fisher, reconstructed_backward, reconstructed_forward, refresh_layer_transform,
    ReconstructedNetwork,
};
use crate::linalg::Matrix;
use crate::nn::regularized_loss;

use super::{step_sgd, OptimizerConfig, OptimizerKind, OptimizerState};

/// What one SNGD step did.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SngdStep {
    /// Loss on the batch before the weight update, after any refresh.
    pub loss: f64,
    /// Layers whose transform was refreshed.
    pub refreshes: usize,
    pub sqrt_iterations: usize,
    /// Layers that kept their previous transform because the solver failed.
    pub fallbacks: usize,
}

/// Whether the step about to run refreshes the Fisher transforms.
pub fn refresh_due(cfg: &OptimizerConfig, state: &OptimizerState) -> bool {
    cfg.sngd
        .fisher_interval
        .is_some_and(|n| state.step_counter.is_multiple_of(n as u64))
}

/// Re-estimates every layer's Fisher matrix from `inputs` at the current
/// parameters and installs the new transforms.
///
/// A solver that fails to converge leaves that layer's previous transform in
/// place and logs a warning; any other failure aborts with the layer index.
pub fn refresh_all(
    net: &mut ReconstructedNetwork,
    inputs: &Matrix,
    cfg: &OptimizerConfig,
) -> Result<SngdStep> {
    let cache = reconstructed_forward(net, inputs)?;
    let s = &cfg.sngd;
    let mut outcome = SngdStep::default();
    for (k, (layer, c)) in net.layers_mut().iter_mut().zip(&cache.layers).enumerate() {
        let wrap = |e: Error| Error::LayerRefresh {
            layer: k,
            source: Box::new(e),
        };
        let g = estimate_local_fisher(&c.input, &c.derivative, layer.fisher_mut()).map_err(wrap)?;
        match refresh_layer_transform(
            layer,
            g,
            s.sqrt_method,
            s.sqrt_tol,
            s.sqrt_max_iter,
            Some(&c.input),
        ) {
            Ok(report) => {
                outcome.refreshes += 1;
                outcome.sqrt_iterations += report.iterations;
            }
            Err(Error::Linalg(e)) if e.is_convergence_failure() => {
                log::warn!("layer {k}: keeping previous Fisher transform ({e})");
                outcome.fallbacks += 1;
            }
            Err(e) => return Err(wrap(e)),
        }
    }
    Ok(outcome)
}

/// One iteration: refresh the Fisher transforms when due, then a plain
/// gradient step on every `W′` with the normalization sublayers frozen.
pub fn sngd_train_step(
    net: &mut ReconstructedNetwork,
    inputs: &Matrix,
    targets: &[usize],
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
    l2: f64,
) -> Result<SngdStep> {
    if cfg.kind != OptimizerKind::Sngd {
        return Err(Error::Optimizer(format!(
            "SNGD step called with optimizer '{}'",
            cfg.kind
        )));
    }
    let mut outcome = if refresh_due(cfg, state) {
        refresh_all(net, inputs, cfg)?
    } else {
        SngdStep::default()
    };
    let cache = reconstructed_forward(net, inputs)?;
    outcome.loss = regularized_loss(&cache.probabilities, targets, net.transformed_weights(), l2)?;
    let grads = reconstructed_backward(net, &cache, targets, l2)?;
    step_sgd(&mut net.transformed_weights_mut(), &grads, cfg, state)?;
    state.step_counter += 1;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{batches, gen_synthetic, BatchPlan, SyntheticKind};
    use crate::fisher::batch_fisher;
    use crate::linalg::{random_spd, SqrtMethod};
    use crate::nn::{augment, backward, forward, Activation, DenseLayer, Layer, Mode, Network};
    use crate::optim::{ngd_reference_step, step_sgd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn linear_net(d: usize, classes: usize, seed: u64) -> Network {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Network::new(vec![Layer::Dense(DenseLayer::init_uniform(
            d,
            classes,
            Activation::Identity,
            &mut rng,
        ))])
        .unwrap()
    }

    fn sngd_cfg(interval: Option<usize>, lambda: f64, rho: f64, tol: f64) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::new(OptimizerKind::Sngd);
        cfg.sngd.fisher_interval = interval;
        cfg.sngd.lambda = lambda;
        cfg.sngd.rho = rho;
        cfg.sngd.sqrt_tol = tol;
        cfg
    }

    fn plain_grad(w: &Matrix, x: &Matrix, t: &[usize]) -> Matrix {
        let net = Network::new(vec![Layer::Dense(
            DenseLayer::new(w.clone(), Activation::Identity).unwrap(),
        )])
        .unwrap();
        let cache = forward(&net, x, Mode::Train).unwrap();
        backward(&net, &cache, t, 0.0).unwrap().remove(0)
    }

    #[test]
    fn fixed_fisher_matches_natural_gradient() {
        let data = gen_synthetic(SyntheticKind::LinearTeacher, 500, 4, 1).unwrap();
        let net = linear_net(4, 3, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let g = random_spd(5, 50.0, &mut rng);

        let mut rec = ReconstructedNetwork::from_network(&net, 0.0, 0.0).unwrap();
        refresh_layer_transform(
            &mut rec.layers_mut()[0],
            g.clone(),
            SqrtMethod::NewtonSchulz,
            1e-12,
            50,
            None,
        )
        .unwrap();
        let cfg = sngd_cfg(None, 0.0, 0.0, 1e-12);
        let mut state = OptimizerState::new();
        let mut w_ref = net.dense_weights().next().unwrap().clone();
        let plan = BatchPlan::new(50, 4, 0).unwrap();
        let bs = batches(&data, &plan);
        for step in 0..100 {
            let b = &bs[step % bs.len()];
            let grad = plain_grad(&w_ref, &b.inputs, &b.labels);
            w_ref = ngd_reference_step(&w_ref, &grad, &g, 0.1).unwrap();
            sngd_train_step(&mut rec, &b.inputs, &b.labels, &cfg, &mut state, 0.0).unwrap();
            let w = rec.layers()[0].effective_weights().unwrap();
            let diff = w.max_abs_diff(&w_ref).unwrap();
            assert!(diff <= 1e-8, "step {step}: {diff:e}");
        }
    }

    #[test]
    fn re_estimated_fisher_matches_natural_gradient() {
        let data = gen_synthetic(SyntheticKind::LinearTeacher, 1000, 4, 5).unwrap();
        let net = linear_net(4, 3, 6);
        let mut rec = ReconstructedNetwork::from_network(&net, 0.0, 0.0).unwrap();
        let cfg = sngd_cfg(Some(1), 0.0, 0.0, 1e-12);
        let mut state = OptimizerState::new();
        let mut w_ref = net.dense_weights().next().unwrap().clone();
        let bs = batches(&data, &BatchPlan::new(50, 7, 0).unwrap());
        for step in 0..100 {
            let b = &bs[step % bs.len()];
            let x_aug = augment(&b.inputs);
            let g = batch_fisher(&x_aug, &Matrix::filled(x_aug.rows(), 3, 1.0)).unwrap();
            let grad = plain_grad(&w_ref, &b.inputs, &b.labels);
            w_ref = ngd_reference_step(&w_ref, &grad, &g, 0.1).unwrap();
            let out =
                sngd_train_step(&mut rec, &b.inputs, &b.labels, &cfg, &mut state, 0.0).unwrap();
            assert_eq!(out.refreshes, 1);
            let w = rec.layers()[0].effective_weights().unwrap();
            let diff = w.max_abs_diff(&w_ref).unwrap();
            assert!(diff <= 1e-6, "step {step}: {diff:e}");
        }
    }

    #[test]
    fn smoothed_damped_fisher_matches_natural_gradient() {
        let data = gen_synthetic(SyntheticKind::LinearTeacher, 600, 3, 8).unwrap();
        let net = linear_net(3, 3, 9);
        let (lambda, rho) = (1e-3, 0.9);
        let mut rec = ReconstructedNetwork::from_network(&net, lambda, rho).unwrap();
        let cfg = sngd_cfg(Some(1), lambda, rho, 1e-12);
        let mut state = OptimizerState::new();
        let mut w_ref = net.dense_weights().next().unwrap().clone();
        let mut ema: Option<Matrix> = None;
        let bs = batches(&data, &BatchPlan::new(40, 1, 0).unwrap());
        for b in bs.iter().cycle().take(30) {
            let x_aug = augment(&b.inputs);
            let g_hat = batch_fisher(&x_aug, &Matrix::filled(x_aug.rows(), 3, 1.0)).unwrap();
            let next = match ema.take() {
                None => g_hat,
                Some(mut prev) => {
                    prev.scale_in_place(rho);
                    prev.axpy(1.0 - rho, &g_hat).unwrap();
                    prev
                }
            };
            let mut g = next.clone();
            g.add_diag(lambda);
            ema = Some(next);
            let grad = plain_grad(&w_ref, &b.inputs, &b.labels);
            w_ref = ngd_reference_step(&w_ref, &grad, &g, 0.1).unwrap();
            sngd_train_step(&mut rec, &b.inputs, &b.labels, &cfg, &mut state, 0.0).unwrap();
        }
        let w = rec.layers()[0].effective_weights().unwrap();
        assert!(w.max_abs_diff(&w_ref).unwrap() <= 1e-6);
    }

    #[test]
    fn never_refreshing_is_plain_gradient_descent() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let net = Network::mlp(&[2, 6, 2], Activation::Relu, false, &mut rng).unwrap();
        let data = gen_synthetic(SyntheticKind::Spiral, 200, 2, 11).unwrap();
        let mut rec = ReconstructedNetwork::from_network(&net, 1e-3, 0.9).unwrap();
        let mut plain = net.clone();
        let cfg = sngd_cfg(None, 1e-3, 0.9, 1e-8);
        let sgd = OptimizerConfig::new(OptimizerKind::Sgd);
        let (mut s1, mut s2) = (OptimizerState::new(), OptimizerState::new());
        for b in batches(&data, &BatchPlan::new(25, 3, 0).unwrap()) {
            let out = sngd_train_step(&mut rec, &b.inputs, &b.labels, &cfg, &mut s1, 1e-3).unwrap();
            let cache = forward(&plain, &b.inputs, Mode::Train).unwrap();
            let loss =
                crate::nn::loss_ce_l2(&cache.probabilities, &b.labels, &plain, 1e-3).unwrap();
            let grads = backward(&plain, &cache, &b.labels, 1e-3).unwrap();
            step_sgd(&mut plain.params_mut(), &grads, &sgd, &mut s2).unwrap();
            assert_eq!(out.loss, loss);
            assert_eq!(out.refreshes, 0);
        }
        let rec_w: Vec<&Matrix> = rec.transformed_weights().collect();
        let plain_w: Vec<&Matrix> = plain.dense_weights().collect();
        assert_eq!(rec_w, plain_w);
    }

    #[test]
    fn refresh_alone_keeps_probe_loss() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let net = Network::mlp(&[3, 8, 8, 3], Activation::Tanh, false, &mut rng).unwrap();
        let data = gen_synthetic(SyntheticKind::LinearTeacher, 300, 3, 13).unwrap();
        let probe = data.take_first(64).unwrap();
        let mut rec = ReconstructedNetwork::from_network(&net, 1e-3, 0.9).unwrap();
        let cfg = sngd_cfg(Some(1), 1e-3, 0.9, 1e-8);
        let loss = |r: &ReconstructedNetwork| {
            let c = reconstructed_forward(r, probe.inputs()).unwrap();
            crate::nn::cross_entropy(&c.probabilities, probe.labels()).unwrap()
        };
        let mut state = OptimizerState::new();
        for b in batches(&data, &BatchPlan::new(50, 1, 0).unwrap()) {
            let before = loss(&rec);
            refresh_all(&mut rec, &b.inputs, &cfg).unwrap();
            assert!((loss(&rec) - before).abs() <= 1e-6);
            sngd_train_step(
                &mut rec,
                &b.inputs,
                &b.labels,
                &sngd_cfg(None, 1e-3, 0.9, 1e-8),
                &mut state,
                1e-3,
            )
            .unwrap();
        }
    }

    #[test]
    fn step_is_homogeneous_in_lr() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let net = Network::mlp(&[3, 5, 3], Activation::Tanh, false, &mut rng).unwrap();
        let data = gen_synthetic(SyntheticKind::LinearTeacher, 50, 3, 15).unwrap();
        let mut base = ReconstructedNetwork::from_network(&net, 1e-3, 0.0).unwrap();
        let cfg = sngd_cfg(Some(1), 1e-3, 0.0, 1e-8);
        refresh_all(&mut base, data.inputs(), &cfg).unwrap();
        let never = |lr: f64| {
            let mut c = sngd_cfg(None, 1e-3, 0.0, 1e-8);
            c.lr = lr;
            c
        };
        let delta = |lr: f64| {
            let mut r = base.clone();
            sngd_train_step(
                &mut r,
                data.inputs(),
                data.labels(),
                &never(lr),
                &mut OptimizerState::new(),
                1e-3,
            )
            .unwrap();
            r.transformed_weights()
                .zip(base.transformed_weights())
                .map(|(after, before)| after.sub(before).unwrap())
                .collect::<Vec<_>>()
        };
        let d1 = delta(0.05);
        let d2 = delta(0.1);
        for (a, b) in d1.iter().zip(&d2) {
            // Exact up to the rounding of `w − lr·g` itself.
            let rel = a.scaled(2.0).max_abs_diff(b).unwrap() / b.max_abs();
            assert!(rel <= 1e-10, "{rel:e}");
        }
    }

    #[test]
    fn loss_decreases_on_two_gaussians() {
        let data = gen_synthetic(SyntheticKind::TwoGaussians, 200, 2, 7).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(16);
        let net = Network::mlp(&[2, 8, 2], Activation::Tanh, false, &mut rng).unwrap();
        let mut rec = ReconstructedNetwork::from_network(&net, 1e-3, 0.9).unwrap();
        let cfg = sngd_cfg(Some(1), 1e-3, 0.9, 1e-8);
        let mut state = OptimizerState::new();
        let full_loss = |r: &ReconstructedNetwork| {
            let c = reconstructed_forward(r, data.inputs()).unwrap();
            crate::nn::cross_entropy(&c.probabilities, data.labels()).unwrap()
        };
        let mut prev = full_loss(&rec);
        let first = prev;
        for _ in 0..50 {
            sngd_train_step(
                &mut rec,
                data.inputs(),
                data.labels(),
                &cfg,
                &mut state,
                0.0,
            )
            .unwrap();
            let now = full_loss(&rec);
            assert!(now <= prev + 1e-3, "{now} after {prev}");
            prev = now;
        }
        assert!(prev < 0.5 * first);
    }

    #[test]
    fn solver_failure_falls_back() {
        let data = gen_synthetic(SyntheticKind::LinearTeacher, 100, 6, 17).unwrap();
        let net = linear_net(6, 3, 18);
        let mut rec = ReconstructedNetwork::from_network(&net, 1e-3, 0.0).unwrap();
        let mut cfg = sngd_cfg(Some(1), 1e-3, 0.0, 1e-8);
        cfg.sngd.sqrt_max_iter = 1;
        let out = sngd_train_step(
            &mut rec,
            data.inputs(),
            data.labels(),
            &cfg,
            &mut OptimizerState::new(),
            0.0,
        )
        .unwrap();
        assert_eq!((out.refreshes, out.fallbacks), (0, 1));
        assert!(rec.layers()[0].fisher().is_identity());
    }

    #[test]
    fn wrong_kind_rejected() {
        let data = gen_synthetic(SyntheticKind::TwoGaussians, 10, 2, 0).unwrap();
        let mut rec = ReconstructedNetwork::from_network(&linear_net(2, 2, 0), 1e-3, 0.9).unwrap();
        let cfg = OptimizerConfig::new(OptimizerKind::Sgd);
        assert!(sngd_train_step(
            &mut rec,
            data.inputs(),
            data.labels(),
            &cfg,
            &mut OptimizerState::new(),
            0.0
        )
        .is_err());
    }
}
