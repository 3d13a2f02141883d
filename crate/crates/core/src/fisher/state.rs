use crate::error::{Error, Result};
use crate::linalg::{damp, Matrix};

/// Per-layer Fisher statistics over the augmented input dimension.
///
/// Starts at `G = G^{1/2} = G^{-1/2} = I` with no accumulated estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherState {
    pub(crate) g: Matrix,
    pub(crate) g_sqrt: Matrix,
    pub(crate) g_inv_sqrt: Matrix,
    pub(crate) ema: Option<Matrix>,
    lambda: f64,
    rho: f64,
    pub(crate) identity: bool,
}

impl FisherState {
    pub const DEFAULT_LAMBDA: f64 = 1e-3;
    pub const DEFAULT_RHO: f64 = 0.9;

    pub fn new(dim: usize, lambda: f64, rho: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNetwork(
                "Fisher dimension must be positive".into(),
            ));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Optimizer(format!(
                "damping must be finite and non-negative, got {lambda}"
            )));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Optimizer(format!(
                "EMA decay must lie in [0, 1), got {rho}"
            )));
        }
        Ok(Self {
            g: Matrix::identity(dim),
            g_sqrt: Matrix::identity(dim),
            g_inv_sqrt: Matrix::identity(dim),
            ema: None,
            lambda,
            rho,
            identity: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.rows()
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    pub fn g_sqrt(&self) -> &Matrix {
        &self.g_sqrt
    }

    pub fn g_inv_sqrt(&self) -> &Matrix {
        &self.g_inv_sqrt
    }

    /// Undamped running estimate, `None` before the first estimate.
    pub fn ema(&self) -> Option<&Matrix> {
        self.ema.as_ref()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// True while `G^{-1/2}` is exactly the identity, in which case the
    /// normalization sublayer is skipped.
    pub fn is_identity(&self) -> bool {
        self.identity
    }
}

/// Single-batch estimate `mean(v_f) · x_augᵀx_aug / batch`, without damping
/// or smoothing.
pub fn batch_fisher(x_aug: &Matrix, vf: &Matrix) -> Result<Matrix> {
    let batch = x_aug.rows();
    if batch == 0 || vf.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if vf.rows() != batch {
        return Err(Error::Shape {
            context: "activation-derivative samples",
            expected: (batch, vf.cols()),
            actual: vf.shape(),
        });
    }
    if !x_aug.is_finite() || !vf.is_finite() {
        return Err(Error::NonFinite("Fisher statistics".into()));
    }
    let mean_vf = vf.as_slice().iter().sum::<f64>() / vf.as_slice().len() as f64;
    let mut g = x_aug.matmul_tn(x_aug)?;
    g.scale_in_place(mean_vf / batch as f64);
    Ok(g)
}

/// Folds the batch estimate into `state`'s running average and returns the
/// damped matrix `ema + λI`. The state's square roots are left untouched.
pub fn estimate_local_fisher(
    x_aug: &Matrix,
    vf: &Matrix,
    state: &mut FisherState,
) -> Result<Matrix> {
    if x_aug.cols() != state.dim() {
        return Err(Error::Shape {
            context: "Fisher input",
            expected: (x_aug.rows(), state.dim()),
            actual: x_aug.shape(),
        });
    }
    let g_hat = batch_fisher(x_aug, vf)?;
    let ema = match state.ema.take() {
        None => g_hat,
        Some(mut prev) => {
            prev.scale_in_place(state.rho);
            prev.axpy(1.0 - state.rho, &g_hat)?;
            prev
        }
    };
    let damped = damp(&ema, state.lambda)?;
    state.ema = Some(ema);
    Ok(damped)
}
