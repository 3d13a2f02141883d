use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use super::decomp::{inverse, jacobi_eigen};
use super::{ensure_symmetric, LinalgError, Matrix};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 50;

/// Consecutive residual increases after which Newton-Schulz is declared divergent.
const DIVERGENCE_STREAK: usize = 3;

/// Principal square root and inverse square root of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SqrtResult {
    pub sqrt: Matrix,
    pub inv_sqrt: Matrix,
    pub iterations: usize,
    /// `‖sqrt·sqrt − A‖_F / ‖A‖_F`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SqrtMethod {
    DenmanBeavers,
    NewtonSchulz,
}

impl SqrtMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SqrtMethod::DenmanBeavers => "denman_beavers",
            SqrtMethod::NewtonSchulz => "newton_schulz",
        }
    }
}

impl fmt::Display for SqrtMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SqrtMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "denman_beavers" | "db" => Ok(SqrtMethod::DenmanBeavers),
            "newton_schulz" | "ns" => Ok(SqrtMethod::NewtonSchulz),
            other => Err(format!(
                "unknown square-root method '{other}' (expected denman_beavers or newton_schulz)"
            )),
        }
    }
}

/// Dispatches to the iterative solver selected by `method`.
pub fn spd_sqrt(
    a: &Matrix,
    method: SqrtMethod,
    tol: f64,
    max_iter: usize,
) -> Result<SqrtResult, LinalgError> {
    match method {
        SqrtMethod::DenmanBeavers => spd_sqrt_db(a, tol, max_iter),
        SqrtMethod::NewtonSchulz => spd_sqrt_ns(a, tol, max_iter),
    }
}

/// `‖s·s − a‖_F / ‖a‖_F`.
pub fn relative_residual(s: &Matrix, a: &Matrix) -> Result<f64, LinalgError> {
    let sq = s.matmul(s)?;
    sq.relative_diff(a)
}

fn check_params(tol: f64, max_iter: usize) -> Result<(), LinalgError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(LinalgError::InvalidParameter(format!(
            "tolerance must lie in (0, 1), got {tol}"
        )));
    }
    if max_iter == 0 {
        return Err(LinalgError::InvalidParameter(
            "max_iter must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Reference square roots from a full Jacobi eigendecomposition.
///
/// Slow (`O(n³)` per sweep) and only meant for checking the iterative solvers.
/// `iterations` reports the number of Jacobi sweeps.
pub fn spd_sqrt_eig_oracle(a: &Matrix) -> Result<SqrtResult, LinalgError> {
    ensure_symmetric(a)?;
    let eig = jacobi_eigen(a)?;
    if let Some(&bad) = eig.values.iter().find(|&&v| !(v > 0.0)) {
        return Err(LinalgError::NotPositiveDefinite { value: bad });
    }
    let q = &eig.vectors;
    let recompose = |f: fn(f64) -> f64| -> Result<Matrix, LinalgError> {
        let d: Vec<f64> = eig.values.iter().map(|&v| f(v)).collect();
        let mut m = q.matmul(&Matrix::from_diag(&d))?.matmul_nt(q)?;
        m.symmetrize();
        Ok(m)
    };
    let sqrt = recompose(f64::sqrt)?;
    let inv_sqrt = recompose(|v| 1.0 / v.sqrt())?;
    let residual = relative_residual(&sqrt, a)?;
    Ok(SqrtResult {
        sqrt,
        inv_sqrt,
        iterations: eig.sweeps,
        residual,
    })
}

/// Coupled Denman-Beavers iteration
/// `Y ← ½(Y + Z⁻¹)`, `Z ← ½(Z + Y⁻¹)` from `Y₀ = A`, `Z₀ = I`.
pub fn spd_sqrt_db(a: &Matrix, tol: f64, max_iter: usize) -> Result<SqrtResult, LinalgError> {
    ensure_symmetric(a)?;
    check_params(tol, max_iter)?;
    let n = a.rows();

    let mut y = a.clone();
    y.symmetrize();
    let mut z = Matrix::identity(n);
    let mut residual = relative_residual(&y, a)?;
    let mut iterations = 0;

    loop {
        if residual <= tol {
            return Ok(SqrtResult {
                sqrt: y,
                inv_sqrt: z,
                iterations,
                residual,
            });
        }
        if iterations == max_iter {
            return Err(LinalgError::NoConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;
        let singular = |e: LinalgError| match e {
            LinalgError::Singular { pivot, .. } => LinalgError::SingularIterate {
                iteration: iterations,
                pivot,
            },
            other => other,
        };
        let y_inv = inverse(&y).map_err(singular)?;
        let z_inv = inverse(&z).map_err(singular)?;

        let mut y_next = y.add(&z_inv)?;
        y_next.scale_in_place(0.5);
        let mut z_next = z.add(&y_inv)?;
        z_next.scale_in_place(0.5);
        y_next.symmetrize();
        z_next.symmetrize();
        if !y_next.is_finite() || !z_next.is_finite() {
            return Err(LinalgError::NonFinite("Denman-Beavers iterate"));
        }
        y = y_next;
        z = z_next;
        residual = relative_residual(&y, a)?;
    }
}

/// Coupled Newton-Schulz iteration
/// `Y ← ½·Y·(3I − Z·Y)`, `Z ← ½·(3I − Z·Y)·Z` on `A/‖A‖_F`, then rescaled.
///
/// Uses matrix products only. The Frobenius pre-scaling puts every eigenvalue
/// in `(0, 1]`, inside the region where the iteration converges. The cheap
/// quantity `‖Z·Y − I‖_F` (a by-product of each step) gates the more expensive
/// check of the true residual.
pub fn spd_sqrt_ns(a: &Matrix, tol: f64, max_iter: usize) -> Result<SqrtResult, LinalgError> {
    ensure_symmetric(a)?;
    check_params(tol, max_iter)?;
    let n = a.rows();
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Err(LinalgError::NotPositiveDefinite { value: 0.0 });
    }

    let mut y = a.scaled(1.0 / scale);
    y.symmetrize();
    let mut z = Matrix::identity(n);
    let root_scale = scale.sqrt();

    let mut iterations = 0;
    let mut previous = f64::INFINITY;
    let mut growth = 0;
    let mut residual = f64::INFINITY;

    loop {
        let zy = z.matmul(&y)?;
        let mut defect = zy.clone();
        defect.add_diag(-1.0);
        let proxy = defect.frobenius_norm();
        if !proxy.is_finite() {
            return Err(LinalgError::Divergence {
                iteration: iterations,
                residual: proxy,
            });
        }

        if proxy <= tol {
            let sqrt = y.scaled(root_scale);
            residual = relative_residual(&sqrt, a)?;
            if residual <= tol {
                return Ok(SqrtResult {
                    sqrt,
                    inv_sqrt: z.scaled(1.0 / root_scale),
                    iterations,
                    residual,
                });
            }
        }

        if proxy > previous {
            growth += 1;
            if growth >= DIVERGENCE_STREAK {
                return Err(LinalgError::Divergence {
                    iteration: iterations,
                    residual: proxy,
                });
            }
        } else {
            growth = 0;
        }
        previous = proxy;

        if iterations == max_iter {
            let residual = if residual.is_finite() {
                residual
            } else {
                relative_residual(&y.scaled(root_scale), a)?
            };
            return Err(LinalgError::NoConvergence {
                iterations,
                residual,
            });
        }
        iterations += 1;

        // t = 3I − ZY
        let mut t = zy;
        t.scale_in_place(-1.0);
        t.add_diag(3.0);
        let mut y_next = y.matmul(&t)?;
        y_next.scale_in_place(0.5);
        let mut z_next = t.matmul(&z)?;
        z_next.scale_in_place(0.5);
        y_next.symmetrize();
        z_next.symmetrize();
        y = y_next;
        z = z_next;
    }
}

/// Random SPD matrix `Q·diag(λ)·Qᵀ` with eigenvalues spaced geometrically in
/// `[1, cond]` and `Q` orthonormalized from a Gaussian matrix.
pub fn random_spd<R: Rng + ?Sized>(order: usize, cond: f64, rng: &mut R) -> Matrix {
    assert!(order >= 1, "order must be positive");
    assert!(cond >= 1.0, "condition number must be at least 1");
    let mut q = Matrix::zeros(order, order);
    for v in q.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    // Modified Gram-Schmidt over columns, two passes.
    for _ in 0..2 {
        for j in 0..order {
            for k in 0..j {
                let dot: f64 = (0..order).map(|r| q[(r, j)] * q[(r, k)]).sum();
                for r in 0..order {
                    let v = q[(r, k)];
                    q[(r, j)] -= dot * v;
                }
            }
            let norm = (0..order).map(|r| q[(r, j)].powi(2)).sum::<f64>().sqrt();
            for r in 0..order {
                q[(r, j)] /= norm;
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..order)
        .map(|i| {
            if order == 1 {
                1.0
            } else {
                cond.powf(i as f64 / (order - 1) as f64)
            }
        })
        .collect();
    let mut a = q
        .matmul(&Matrix::from_diag(&eigenvalues))
        .and_then(|m| m.matmul_nt(&q))
        .expect("square shapes");
    a.symmetrize();
    a
}
