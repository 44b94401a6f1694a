use crate::error::{invalid, Result};
use crate::rng::RngState;

/// Without-replacement batching: each epoch walks a fresh permutation of
/// `0..len` in consecutive slices of `batch_size`. The final slice of an
/// epoch may be shorter.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    batch_size: usize,
    len: usize,
    perm: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: RngState,
}

impl BatchPlan {
    pub fn new(len: usize, batch_size: usize, rng: RngState) -> Result<Self> {
        if batch_size == 0 || batch_size > len {
            return Err(invalid(format!("batch size {batch_size} must be in 1..={len}")));
        }
        let mut plan = Self {
            batch_size,
            len,
            perm: Vec::new(),
            cursor: 0,
            epoch: 0,
            rng,
        };
        plan.perm = plan.rng.permutation(len);
        Ok(plan)
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Completed passes over the data.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Indices of the next batch. Reshuffles after the last slice of an epoch.
    pub fn next_indices(&mut self) -> Vec<usize> {
        let end = (self.cursor + self.batch_size).min(self.len);
        let batch = self.perm[self.cursor..end].to_vec();
        self.cursor = end;
        if self.cursor == self.len {
            self.cursor = 0;
            self.epoch += 1;
            self.perm = self.rng.permutation(self.len);
        }
        batch
    }
}
