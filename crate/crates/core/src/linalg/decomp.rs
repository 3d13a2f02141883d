use super::{ensure_square, ensure_symmetric, LinalgError, Matrix, PIVOT_EPS};

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn inverse(a: &Matrix) -> Result<Matrix, LinalgError> {
    ensure_square(a)?;
    solve(a, &Matrix::identity(a.rows()))
}

/// Solves `A·X = B` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    ensure_square(a)?;
    if a.rows() != b.rows() {
        return Err(LinalgError::dims("solve", a, b));
    }
    let n = a.rows();
    let m = b.cols();
    let mut lhs = a.clone();
    let mut rhs = b.clone();

    for col in 0..n {
        let (pivot_row, pivot) =
            (col..n)
                .map(|r| (r, lhs[(r, col)]))
                .fold((col, 0.0_f64), |best, (r, v)| {
                    if v.abs() > best.1.abs() {
                        (r, v)
                    } else {
                        best
                    }
                });
        if pivot.abs() < PIVOT_EPS {
            return Err(LinalgError::Singular { pivot, column: col });
        }
        if pivot_row != col {
            swap_rows(&mut lhs, col, pivot_row);
            swap_rows(&mut rhs, col, pivot_row);
        }
        for r in (col + 1)..n {
            let factor = lhs[(r, col)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                let v = lhs[(col, c)];
                lhs[(r, c)] -= factor * v;
            }
            for c in 0..m {
                let v = rhs[(col, c)];
                rhs[(r, c)] -= factor * v;
            }
        }
    }

    // back substitution
    let mut x = Matrix::zeros(n, m);
    for r in (0..n).rev() {
        for c in 0..m {
            let mut acc = rhs[(r, c)];
            for k in (r + 1)..n {
                acc -= lhs[(r, k)] * x[(k, c)];
            }
            x[(r, c)] = acc / lhs[(r, r)];
        }
    }
    if !x.is_finite() {
        return Err(LinalgError::NonFinite("solve"));
    }
    Ok(x)
}

fn swap_rows(m: &mut Matrix, i: usize, j: usize) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    for c in 0..cols {
        data.swap(i * cols + c, j * cols + c);
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L·Lᵀ`.
pub fn cholesky(a: &Matrix) -> Result<Matrix, LinalgError> {
    ensure_symmetric(a)?;
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { value: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Eigenpairs of a symmetric matrix: `A = Q·diag(values)·Qᵀ`, eigenvectors in
/// the columns of `vectors`, values ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn jacobi_eigen(a: &Matrix) -> Result<SymmetricEigen, LinalgError> {
    ensure_symmetric(a)?;
    let n = a.rows();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    if sweeps == MAX_SWEEPS {
        return Err(LinalgError::NoConvergence {
            iterations: sweeps,
            residual: f64::NAN,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Applies `M ← Jᵀ·M·J` and `V ← V·J` for the (p, q) rotation.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}
