//! Query-counted objectives and the test landscapes used by the experiments.

mod dataset;
mod landscapes;
mod mlp;

use std::sync::atomic::{AtomicU64, Ordering};

pub use dataset::{load_csv_dataset, synthetic_regression, Dataset, SyntheticSpec};
pub use landscapes::{oscillatory_quadratic, quadratic_objective, rosenbrock, Oscillatory, Quadratic, Rosenbrock};
pub use mlp::{mlp_regression_objective, Activation, MlpRegression, MlpSpec};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::param_store::ParameterStore;

/// Monotone evaluation counter. Atomic so concurrent probes on private
/// store copies can share one objective.
#[derive(Debug, Default)]
pub struct QueryCounter(AtomicU64);

impl QueryCounter {
    pub fn record(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// A scalar function of a parameter store, optionally restricted to a mini-batch.
///
/// `loss` is the pure evaluation and does not touch the counter; optimizers
/// call `evaluate`, which is what the budget ledger sees.
pub trait Objective: Send + Sync {
    fn loss(&self, store: &ParameterStore, batch: Option<&BatchSpec>) -> f64;

    fn counter(&self) -> &QueryCounter;

    /// Tensor shapes of the decision variable.
    fn shapes(&self) -> Vec<Vec<usize>>;

    fn evaluate(&self, store: &ParameterStore, batch: Option<&BatchSpec>) -> f64 {
        self.counter().record();
        self.loss(store, batch)
    }

    fn query_count(&self) -> u64 {
        self.counter().get()
    }

    /// Analytic gradient, for objectives that have a closed form.
    fn gradient(&self, _store: &ParameterStore) -> Option<Vec<f64>> {
        None
    }

    /// Analytic gradient-Lipschitz constant, when known.
    fn smoothness(&self) -> Option<f64> {
        None
    }

    /// Known global minimum value.
    fn minimum(&self) -> Option<f64> {
        None
    }
}

/// Row indices of one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSpec {
    pub rows: Vec<usize>,
}

impl BatchSpec {
    pub fn all(rows: usize) -> Self {
        BatchSpec {
            rows: (0..rows).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchOrder {
    /// Consecutive rows with wraparound.
    Sequential,
    /// A fresh seeded permutation each pass over the data.
    Shuffled { seed: u64 },
}

/// Deterministic mini-batch source.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    rows: usize,
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    rng: Option<ChaCha8Rng>,
}

impl MinibatchSampler {
    /// `batch_size` larger than the dataset is clamped to the full dataset.
    pub fn new(rows: usize, batch_size: usize, mode: BatchOrder) -> crate::Result<Self> {
        if batch_size == 0 {
            return Err(crate::Error::Precondition("batch_size must be at least 1".into()));
        }
        let mut order: Vec<usize> = (0..rows).collect();
        let rng = match mode {
            BatchOrder::Sequential => None,
            BatchOrder::Shuffled { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                order.shuffle(&mut rng);
                Some(rng)
            }
        };
        Ok(MinibatchSampler {
            rows,
            batch_size: batch_size.min(rows),
            order,
            cursor: 0,
            rng,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn next_batch(&mut self) -> BatchSpec {
        if self.rows == 0 {
            return BatchSpec { rows: Vec::new() };
        }
        let mut rows = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            if self.cursor == self.rows {
                self.cursor = 0;
                if let Some(rng) = self.rng.as_mut() {
                    self.order.shuffle(rng);
                }
            }
            rows.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        BatchSpec { rows }
    }
}

/// Sequential batch starting at `cursor`, wrapping around the dataset.
pub fn next_minibatch(dataset: &Dataset, batch_size: usize, cursor: usize) -> crate::Result<BatchSpec> {
    if batch_size == 0 {
        return Err(crate::Error::Precondition("batch_size must be at least 1".into()));
    }
    let rows = dataset.rows();
    if rows == 0 {
        return Ok(BatchSpec { rows: Vec::new() });
    }
    let size = batch_size.min(rows);
    Ok(BatchSpec {
        rows: (0..size).map(|k| (cursor + k) % rows).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_batches_wrap() {
        let mut s = MinibatchSampler::new(10, 4, BatchOrder::Sequential).unwrap();
        assert_eq!(s.next_batch().rows, vec![0, 1, 2, 3]);
        assert_eq!(s.next_batch().rows, vec![4, 5, 6, 7]);
        assert_eq!(s.next_batch().rows, vec![8, 9, 0, 1]);
    }

    #[test]
    fn full_and_oversized_batches() {
        let mut s = MinibatchSampler::new(5, 5, BatchOrder::Sequential).unwrap();
        assert_eq!(s.next_batch().rows, vec![0, 1, 2, 3, 4]);
        let mut s = MinibatchSampler::new(3, 10, BatchOrder::Sequential).unwrap();
        assert_eq!(s.next_batch().rows, vec![0, 1, 2]);
        assert!(MinibatchSampler::new(3, 0, BatchOrder::Sequential).is_err());
    }

    #[test]
    fn shuffled_batches_are_seeded() {
        let draw = |seed| {
            let mut s = MinibatchSampler::new(20, 6, BatchOrder::Shuffled { seed }).unwrap();
            (0..5).map(|_| s.next_batch().rows).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
        for batch in draw(9) {
            let mut sorted = batch.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), batch.len());
        }
    }

    #[test]
    fn cursor_batches() {
        let d = Dataset::new(vec![0.0; 10], vec![0.0; 10], 1, 1).unwrap();
        assert_eq!(next_minibatch(&d, 4, 8).unwrap().rows, vec![8, 9, 0, 1]);
        assert_eq!(next_minibatch(&d, 40, 0).unwrap().rows.len(), 10);
    }
}
