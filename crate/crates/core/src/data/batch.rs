use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::harness::{rng_stream, Stream};
use crate::linalg::Matrix;

use super::Dataset;

/// Mini-batch schedule for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    batch_size: usize,
    seed: u64,
    epoch: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl BatchPlan {
    pub const DEFAULT_BATCH_SIZE: usize = 50;

    pub fn new(batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Dataset("batch size must be at least 1".into()));
        }
        Ok(Self {
            batch_size,
            seed,
            epoch,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Row order for this epoch: a Fisher-Yates shuffle drawn from the
    /// shuffle stream of `(seed, epoch)`.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_stream(
            self.seed,
            Stream::Shuffle { epoch: self.epoch },
        ));
        order
    }
}

/// Splits the permuted dataset into consecutive batches; the last one may be
/// short.
pub fn batches(dataset: &Dataset, plan: &BatchPlan) -> Vec<Batch> {
    plan.permutation(dataset.len())
        .chunks(plan.batch_size)
        .map(|idx| {
            let (inputs, labels) = dataset.select(idx);
            Batch { inputs, labels }
        })
        .collect()
}
