use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::harness::{rng_stream, Stream};
use crate::linalg::Matrix;

use super::Dataset;

/// Small generated classification problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyntheticKind {
    /// Two unit-variance Gaussian clouds centred at `±3·e₁`; label `i mod 2`.
    TwoGaussians,
    /// Two interleaved spiral arms in the first two coordinates.
    Spiral,
    /// Standard normal inputs labelled by the arg-max of a hidden random
    /// affine map into three classes.
    LinearTeacher,
}

pub const TEACHER_CLASSES: usize = 3;

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::TwoGaussians => "two_gaussians",
            SyntheticKind::Spiral => "spiral",
            SyntheticKind::LinearTeacher => "linear_teacher",
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            SyntheticKind::TwoGaussians | SyntheticKind::Spiral => 2,
            SyntheticKind::LinearTeacher => TEACHER_CLASSES,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_gaussians" => Ok(SyntheticKind::TwoGaussians),
            "spiral" => Ok(SyntheticKind::Spiral),
            "linear_teacher" => Ok(SyntheticKind::LinearTeacher),
            other => Err(Error::Dataset(format!(
                "unknown synthetic dataset '{other}' (expected two_gaussians, spiral or linear_teacher)"
            ))),
        }
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates `n` examples of dimension `d` from the synthetic stream of `seed`.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Dataset(format!(
            "synthetic datasets need n >= 2, got {n}"
        )));
    }
    let min_d = if kind == SyntheticKind::Spiral { 2 } else { 1 };
    if d < min_d {
        return Err(Error::Dataset(format!(
            "{kind} needs dimension >= {min_d}, got {d}"
        )));
    }
    let mut rng = rng_stream(seed, Stream::Synthetic);
    let mut x = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    match kind {
        SyntheticKind::TwoGaussians => {
            for i in 0..n {
                let label = i % 2;
                let row = x.row_mut(i);
                for v in row.iter_mut() {
                    *v = normal(&mut rng);
                }
                row[0] += if label == 0 { -3.0 } else { 3.0 };
                labels.push(label);
            }
        }
        SyntheticKind::Spiral => {
            for i in 0..n {
                let label = i % 2;
                let t: f64 = rng.random_range(0.05..1.0);
                let angle = 3.0 * PI * t + PI * label as f64;
                let row = x.row_mut(i);
                row[0] = t * angle.cos() + 0.03 * normal(&mut rng);
                row[1] = t * angle.sin() + 0.03 * normal(&mut rng);
                for v in &mut row[2..] {
                    *v = 0.1 * normal(&mut rng);
                }
                labels.push(label);
            }
        }
        SyntheticKind::LinearTeacher => {
            let mut teacher = Matrix::zeros(TEACHER_CLASSES, d + 1);
            for v in teacher.as_mut_slice() {
                *v = normal(&mut rng);
            }
            for i in 0..n {
                let row = x.row_mut(i);
                for v in row.iter_mut() {
                    *v = normal(&mut rng);
                }
                let mut best = (0, f64::NEG_INFINITY);
                for c in 0..TEACHER_CLASSES {
                    let w = teacher.row(c);
                    let score = w[d]
                        + w[..d]
                            .iter()
                            .zip(row.iter())
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if score > best.1 {
                        best = (c, score);
                    }
                }
                labels.push(best.0);
            }
        }
    }
    Dataset::new(x, labels, kind.class_count(), kind.as_str())
}
