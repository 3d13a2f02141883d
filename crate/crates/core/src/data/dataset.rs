use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Labelled examples, one per row of `inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    name: String,
}

impl Dataset {
    pub fn new(
        inputs: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        name: impl Into<String>,
    ) -> Result<Self> {
        let name = name.into();
        if inputs.rows() == 0 {
            return Err(Error::Dataset(format!("{name}: no examples")));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::Dataset(format!(
                "{name}: {} labels for {} examples",
                labels.len(),
                inputs.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Dataset(format!(
                "{name}: label {bad} out of range for {class_count} classes"
            )));
        }
        if !inputs.is_finite() {
            return Err(Error::NonFinite(format!("{name} inputs")));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            name,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Rows `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> (Matrix, Vec<usize>) {
        let d = self.dim();
        let mut inputs = Matrix::zeros(indices.len(), d);
        let mut labels = Vec::with_capacity(indices.len());
        for (dst, &i) in indices.iter().enumerate() {
            inputs.row_mut(dst).copy_from_slice(self.inputs.row(i));
            labels.push(self.labels[i]);
        }
        (inputs, labels)
    }

    /// Contiguous rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Dataset(format!(
                "{}: row range {start}..{end} invalid for {} examples",
                self.name,
                self.len()
            )));
        }
        let indices: Vec<usize> = (start..end).collect();
        let (inputs, labels) = self.select(&indices);
        Self::new(inputs, labels, self.class_count, self.name.clone())
    }

    /// The first `n` examples (all of them if `n ≥ len`).
    pub fn take_first(&self, n: usize) -> Result<Self> {
        self.slice(0, n.min(self.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let x = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]).unwrap();
        Dataset::new(x, vec![0, 1, 0], 2, "tiny").unwrap()
    }

    #[test]
    fn validates_labels() {
        let x = Matrix::zeros(2, 1);
        assert!(Dataset::new(x.clone(), vec![0, 2], 2, "bad").is_err());
        assert!(Dataset::new(x, vec![0], 2, "short").is_err());
        assert!(Dataset::new(Matrix::zeros(0, 1), vec![], 2, "empty").is_err());
    }

    #[test]
    fn take_first_keeps_order() {
        let d = tiny().take_first(2).unwrap();
        assert_eq!(d.labels(), &[0, 1]);
        assert_eq!(d.inputs().row(1), &[2.0, 3.0]);
        assert_eq!(tiny().take_first(10).unwrap(), tiny());
    }

    #[test]
    fn select_gathers_rows() {
        let (x, y) = tiny().select(&[2, 0]);
        assert_eq!(x.row(0), &[4.0, 5.0]);
        assert_eq!(y, vec![0, 0]);
    }
}
