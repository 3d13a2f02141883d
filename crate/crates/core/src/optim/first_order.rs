use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};

use super::{OptimizerConfig, OptimizerKind};

/// Per-parameter buffers, allocated on first use to mirror the parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Matrix>,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
    adam_steps: u64,
    /// Completed training steps; drives the Fisher schedule.
    pub step_counter: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam_steps
    }
}

fn check_shapes(params: &[&mut Matrix], grads: &[Matrix]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Optimizer(format!(
            "{} parameter matrices but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::Shape {
                context: "gradient",
                expected: p.shape(),
                actual: g.shape(),
            });
        }
    }
    Ok(())
}

fn ensure_buffers(buffers: &mut Vec<Matrix>, params: &[&mut Matrix]) -> Result<()> {
    if buffers.is_empty() {
        *buffers = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        return Ok(());
    }
    let matches = buffers.len() == params.len()
        && buffers
            .iter()
            .zip(params)
            .all(|(b, p)| b.shape() == p.shape());
    if matches {
        Ok(())
    } else {
        Err(Error::Optimizer(
            "optimizer state was built for different parameter shapes".into(),
        ))
    }
}

/// `w ← w − lr·g`, or with momentum `v ← μv + g; w ← w − lr·v`, where `μ` is
/// [`OptimizerConfig::effective_momentum`].
pub fn step_sgd(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    check_shapes(params, grads)?;
    let momentum = cfg.effective_momentum();
    if momentum == 0.0 {
        for (p, g) in params.iter_mut().zip(grads) {
            p.axpy(-cfg.lr, g)?;
        }
        return Ok(());
    }
    ensure_buffers(&mut state.velocity, params)?;
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        v.scale_in_place(momentum);
        v.axpy(1.0, g)?;
        p.axpy(-cfg.lr, v)?;
    }
    Ok(())
}

/// Bias-corrected Adam.
pub fn step_adam(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    check_shapes(params, grads)?;
    ensure_buffers(&mut state.first_moment, params)?;
    ensure_buffers(&mut state.second_moment, params)?;
    state.adam_steps += 1;
    let t = state.adam_steps as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.first_moment)
        .zip(&mut state.second_moment)
    {
        let p = p.as_mut_slice();
        let (m, v) = (m.as_mut_slice(), v.as_mut_slice());
        for (i, &gi) in g.as_slice().iter().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Dispatches to the update rule of `cfg.kind`.
pub fn apply_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    cfg: &OptimizerConfig,
    state: &mut OptimizerState,
) -> Result<()> {
    match cfg.kind {
        OptimizerKind::Adam => step_adam(params, grads, cfg, state),
        _ => step_sgd(params, grads, cfg, state),
    }
}

/// Explicit natural-gradient step `W − lr · ∇W · G⁻¹` for weights laid out
/// as `d_out × dim(G)`, with `G⁻¹` applied by a linear solve.
pub fn ngd_reference_step(w: &Matrix, grad: &Matrix, g_fisher: &Matrix, lr: f64) -> Result<Matrix> {
    if w.shape() != grad.shape() {
        return Err(Error::Shape {
            context: "gradient",
            expected: w.shape(),
            actual: grad.shape(),
        });
    }
    let direction = solve(g_fisher, &grad.transpose())?.transpose();
    let mut out = w.clone();
    out.axpy(-lr, &direction)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::filled(1, 1, v)
    }

    fn sgd(momentum: bool) -> OptimizerConfig {
        OptimizerConfig::new(if momentum {
            OptimizerKind::SgdMomentum
        } else {
            OptimizerKind::Sgd
        })
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut w = scalar(1.0);
        let mut s = OptimizerState::new();
        step_sgd(&mut [&mut w], &[scalar(0.0)], &sgd(false), &mut s).unwrap();
        assert_eq!(w, scalar(1.0));
        let adam = OptimizerConfig::new(OptimizerKind::Adam);
        for _ in 0..10 {
            step_adam(&mut [&mut w], &[scalar(0.0)], &adam, &mut s).unwrap();
        }
        assert_eq!(w, scalar(1.0));
    }

    #[test]
    fn plain_step_arithmetic() {
        let mut w = scalar(1.0);
        step_sgd(
            &mut [&mut w],
            &[scalar(2.0)],
            &sgd(false),
            &mut OptimizerState::new(),
        )
        .unwrap();
        assert!((w[(0, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn momentum_unrolls() {
        let mut w = scalar(1.0);
        let mut s = OptimizerState::new();
        let cfg = sgd(true);
        step_sgd(&mut [&mut w], &[scalar(1.0)], &cfg, &mut s).unwrap();
        assert_eq!(s.velocity()[0], scalar(1.0));
        step_sgd(&mut [&mut w], &[scalar(1.0)], &cfg, &mut s).unwrap();
        assert!((s.velocity()[0][(0, 0)] - 1.9).abs() < 1e-15);
        assert!((w[(0, 0)] - 0.71).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_has_size_lr() {
        let cfg = OptimizerConfig::new(OptimizerKind::Adam);
        for g in [1e-4, 0.3, -5.0, 1e3] {
            let mut w = scalar(2.0);
            step_adam(
                &mut [&mut w],
                &[scalar(g)],
                &cfg,
                &mut OptimizerState::new(),
            )
            .unwrap();
            let delta = w[(0, 0)] - 2.0;
            assert!(
                (delta.abs() - cfg.lr).abs() < 1e-6 * cfg.lr.max(1.0) + 1e-9,
                "g={g}"
            );
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut w = Matrix::zeros(2, 2);
        let r = step_sgd(
            &mut [&mut w],
            &[Matrix::zeros(2, 3)],
            &sgd(false),
            &mut OptimizerState::new(),
        );
        assert!(matches!(r, Err(Error::Shape { .. })));
        let r = step_sgd(&mut [&mut w], &[], &sgd(false), &mut OptimizerState::new());
        assert!(r.is_err());
    }

    #[test]
    fn ngd_examples() {
        let w = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let grad = Matrix::from_rows(&[[8.0, 2.0]]).unwrap();
        let g = Matrix::from_diag(&[4.0, 1.0]);
        let out = ngd_reference_step(&w, &grad, &g, 0.1).unwrap();
        assert!(
            out.max_abs_diff(&Matrix::from_rows(&[[0.8, 0.8]]).unwrap())
                .unwrap()
                < 1e-15
        );
        assert_eq!(ngd_reference_step(&w, &grad, &g, 0.0).unwrap(), w);

        let mut sgd_w = w.clone();
        step_sgd(
            &mut [&mut sgd_w],
            std::slice::from_ref(&grad),
            &sgd(false),
            &mut OptimizerState::new(),
        )
        .unwrap();
        assert_eq!(
            ngd_reference_step(&w, &grad, &Matrix::identity(2), 0.1).unwrap(),
            sgd_w
        );

        let singular = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(ngd_reference_step(&w, &grad, &singular, 0.1).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = (Matrix, Matrix)> {
        (1usize..4, 1usize..5).prop_flat_map(|(r, c)| {
            (
                prop::collection::vec(-10.0f64..10.0, r * c),
                prop::collection::vec(-10.0f64..10.0, r * c),
            )
                .prop_map(move |(w, g)| {
                    (
                        Matrix::from_vec(r, c, w).unwrap(),
                        Matrix::from_vec(r, c, g).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn adam_is_odd_in_the_gradient((w, g) in matrix_strategy()) {
            let cfg = OptimizerConfig::new(OptimizerKind::Adam);
            let (mut a, mut b) = (w.clone(), w.clone());
            let (mut sa, mut sb) = (OptimizerState::new(), OptimizerState::new());
            for _ in 0..3 {
                step_adam(&mut [&mut a], std::slice::from_ref(&g), &cfg, &mut sa).unwrap();
                step_adam(&mut [&mut b], &[g.scaled(-1.0)], &cfg, &mut sb).unwrap();
            }
            let da = a.sub(&w).unwrap();
            let db = b.sub(&w).unwrap();
            // Updates mirror exactly around the start point when w is zero;
            // otherwise only up to rounding of the final addition.
            prop_assert!(da.add(&db).unwrap().max_abs() <= 4.0 * f64::EPSILON * w.max_abs().max(1.0));
        }

        #[test]
        fn sgd_step_is_homogeneous_in_lr((_, g) in matrix_strategy(), momentum in any::<bool>()) {
            let mut c1 = sgd(momentum);
            let mut c2 = c1;
            c1.lr = 0.05;
            c2.lr = 0.1;
            let (mut a, mut b) = (Matrix::zeros(g.rows(), g.cols()), Matrix::zeros(g.rows(), g.cols()));
            step_sgd(&mut [&mut a], std::slice::from_ref(&g), &c1, &mut OptimizerState::new()).unwrap();
            step_sgd(&mut [&mut b], std::slice::from_ref(&g), &c2, &mut OptimizerState::new()).unwrap();
            prop_assert_eq!(a.scaled(2.0), b);
        }
    }
}
