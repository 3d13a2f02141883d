use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::Network;

/// Row-sum tolerance accepted for probability inputs.
const PROB_SUM_TOL: f64 = 1e-8;

/// Appends a constant-1 column (the bias input).
pub fn augment(x: &Matrix) -> Matrix {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols + 1);
    for i in 0..rows {
        let dst = out.row_mut(i);
        dst[..cols].copy_from_slice(x.row(i));
        dst[cols] = 1.0;
    }
    out
}

/// Drops the trailing bias column added by [`augment`].
pub(crate) fn strip_bias_column(x: &Matrix) -> Matrix {
    let (rows, cols) = x.shape();
    let mut out = Matrix::zeros(rows, cols - 1);
    for i in 0..rows {
        out.row_mut(i).copy_from_slice(&x.row(i)[..cols - 1]);
    }
    out
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_targets(probabilities: &Matrix, targets: &[usize]) -> Result<()> {
    if targets.len() != probabilities.rows() {
        return Err(Error::Shape {
            context: "targets",
            expected: (probabilities.rows(), 1),
            actual: (targets.len(), 1),
        });
    }
    if probabilities.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let classes = probabilities.cols();
    if let Some(&target) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::TargetOutOfRange { target, classes });
    }
    Ok(())
}

/// Mean negative log-likelihood of the targets.
pub fn cross_entropy(probabilities: &Matrix, targets: &[usize]) -> Result<f64> {
    check_targets(probabilities, targets)?;
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = probabilities.row(i);
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidProbabilities { row: i, sum });
        }
        total -= row[t].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / targets.len() as f64)
}

/// `Σ ‖W[:, ..d_in]‖²_F` over the given augmented weight matrices; bias
/// columns are excluded.
pub fn l2_penalty<'a>(weights: impl IntoIterator<Item = &'a Matrix>) -> f64 {
    weights
        .into_iter()
        .map(|w| {
            let bias = w.cols() - 1;
            (0..w.rows())
                .map(|i| w.row(i)[..bias].iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
        })
        .sum()
}

/// Adds `l2·W` to `grad` on every non-bias entry.
pub(crate) fn add_l2_gradient(grad: &mut Matrix, weights: &Matrix, l2: f64) {
    if l2 == 0.0 {
        return;
    }
    let bias = weights.cols() - 1;
    for i in 0..weights.rows() {
        let w = weights.row(i);
        let g = grad.row_mut(i);
        for j in 0..bias {
            g[j] += l2 * w[j];
        }
    }
}

/// Cross-entropy plus `(l2/2)·Σ‖W‖²_F` over the given weights.
pub fn regularized_loss<'a>(
    probabilities: &Matrix,
    targets: &[usize],
    weights: impl IntoIterator<Item = &'a Matrix>,
    l2: f64,
) -> Result<f64> {
    let ce = cross_entropy(probabilities, targets)?;
    if l2 == 0.0 {
        return Ok(ce);
    }
    Ok(ce + 0.5 * l2 * l2_penalty(weights))
}

/// Mean cross-entropy plus the L2 penalty on the network's dense weights.
pub fn loss_ce_l2(
    probabilities: &Matrix,
    targets: &[usize],
    net: &Network,
    l2: f64,
) -> Result<f64> {
    regularized_loss(probabilities, targets, net.dense_weights(), l2)
}

/// Gradient of the mean cross-entropy w.r.t. the logits:
/// `(probabilities − onehot) / batch`.
pub fn output_delta(probabilities: &Matrix, targets: &[usize]) -> Result<Matrix> {
    check_targets(probabilities, targets)?;
    let batch = targets.len() as f64;
    let mut delta = probabilities.clone();
    for (i, &t) in targets.iter().enumerate() {
        delta.row_mut(i)[t] -= 1.0;
    }
    delta.scale_in_place(1.0 / batch);
    Ok(delta)
}

/// Fraction of rows whose arg-max matches the target.
pub fn accuracy(probabilities: &Matrix, targets: &[usize]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| {
            let row = probabilities.row(i);
            let best = row
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (j, &v)| if v > b.1 { (j, v) } else { b },
                )
                .0;
            best == t
        })
        .count();
    hits as f64 / targets.len() as f64
}
