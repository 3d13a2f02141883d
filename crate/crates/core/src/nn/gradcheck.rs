use crate::error::Result;
use crate::linalg::Matrix;

use super::{backward, forward, loss_ce_l2, Mode, Network};

/// Denominator floor for the relative error, so entries whose true gradient
/// is near zero are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    pub entries: usize,
}

/// Compares [`backward`] against central differences of step `eps` on every
/// trainable entry. Uses training mode throughout.
pub fn grad_check(
    net: &Network,
    inputs: &Matrix,
    targets: &[usize],
    l2: f64,
    eps: f64,
) -> Result<GradCheck> {
    let cache = forward(net, inputs, Mode::Train)?;
    let analytic = backward(net, &cache, targets, l2)?;

    let loss_at = |probe: &Network| -> Result<f64> {
        let c = forward(probe, inputs, Mode::Train)?;
        loss_ce_l2(&c.probabilities, targets, probe, l2)
    };

    let mut probe = net.clone();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        max_absolute_error: 0.0,
        entries: 0,
    };
    for (p, grad) in analytic.iter().enumerate() {
        for idx in 0..grad.as_slice().len() {
            let original = probe.params()[p].as_slice()[idx];
            probe.params_mut()[p].as_mut_slice()[idx] = original + eps;
            let plus = loss_at(&probe)?;
            probe.params_mut()[p].as_mut_slice()[idx] = original - eps;
            let minus = loss_at(&probe)?;
            probe.params_mut()[p].as_mut_slice()[idx] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_slice()[idx];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            report.max_absolute_error = report.max_absolute_error.max(abs);
            report.max_relative_error = report.max_relative_error.max(rel);
            report.entries += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_batch(
        rng: &mut ChaCha20Rng,
        batch: usize,
        d: usize,
        classes: usize,
    ) -> (Matrix, Vec<usize>) {
        let mut x = Matrix::zeros(batch, d);
        for v in x.as_mut_slice() {
            *v = rng.random_range(-1.5..1.5);
        }
        let t = (0..batch).map(|_| rng.random_range(0..classes)).collect();
        (x, t)
    }

    #[test]
    fn tanh_network_passes() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let net = Network::mlp(&[4, 6, 5, 3], Activation::Tanh, false, &mut rng).unwrap();
        let (x, t) = random_batch(&mut rng, 7, 4, 3);
        let r = grad_check(&net, &x, &t, 1e-2, 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
        assert_eq!(r.entries, net.parameter_count());
    }

    #[test]
    fn batch_norm_network_passes() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let net = Network::mlp(&[3, 5, 4, 2], Activation::Sigmoid, true, &mut rng).unwrap();
        let (x, t) = random_batch(&mut rng, 6, 3, 2);
        let r = grad_check(&net, &x, &t, 1e-3, 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn gradients_match_finite_differences(
            seed in any::<u64>(),
            act in prop::sample::select(vec![Activation::Tanh, Activation::Sigmoid, Activation::Relu]),
            l2 in prop::sample::select(vec![0.0, 1e-3, 0.1]),
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let net = Network::mlp(&[3, 4, 3], act, false, &mut rng).unwrap();
            let (x, t) = random_batch(&mut rng, 5, 3, 3);
            let r = grad_check(&net, &x, &t, l2, 1e-6).unwrap();
            // ReLU kinks can sit inside the stencil; finite differences are
            // then meaningless for that entry, so allow a looser bound there.
            let limit = if act == Activation::Relu { 1e-3 } else { 1e-6 };
            prop_assert!(r.max_relative_error < limit, "{:?}", r);
        }

        #[test]
        fn softmax_rows_sum_to_one(seed in any::<u64>(), scale in 0.1f64..50.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let net = Network::mlp(&[4, 6, 5], Activation::Relu, false, &mut rng).unwrap();
            let (mut x, _) = random_batch(&mut rng, 8, 4, 5);
            x.scale_in_place(scale);
            let c = forward(&net, &x, Mode::Train).unwrap();
            for i in 0..c.probabilities.rows() {
                let row = c.probabilities.row(i);
                prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn duplicating_the_batch_preserves_gradients(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let net = Network::mlp(&[3, 4, 2], Activation::Tanh, false, &mut rng).unwrap();
            let (x, t) = random_batch(&mut rng, 4, 3, 2);
            let mut xx = Matrix::zeros(8, 3);
            for i in 0..8 {
                xx.row_mut(i).copy_from_slice(x.row(i % 4));
            }
            let tt: Vec<usize> = (0..8).map(|i| t[i % 4]).collect();
            let g1 = backward(&net, &forward(&net, &x, Mode::Train).unwrap(), &t, 1e-3).unwrap();
            let g2 = backward(&net, &forward(&net, &xx, Mode::Train).unwrap(), &tt, 1e-3).unwrap();
            for (a, b) in g1.iter().zip(&g2) {
                prop_assert!(a.max_abs_diff(b).unwrap() < 1e-14);
            }
        }
    }
}
