use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Seeded random stream. Identical seeds give bit-identical draw sequences
/// on every platform (ChaCha8 with portable integer sampling).
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, addressed by `stream`. Does not advance `self`.
    pub fn fork(&self, stream: u64) -> RngStream {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        RngStream {
            seed: self.seed,
            inner,
        }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// `k` distinct indices drawn uniformly from `[0, n)`, in draw order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        index::sample(&mut self.inner, n, k).into_vec()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        use rand::seq::SliceRandom;
        items.shuffle(&mut self.inner);
    }
}

/// Matrix of i.i.d. standard normal samples, drawn in row-major order.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid_arg(format!(
            "normal matrix needs non-zero dimensions, got {rows}x{cols}"
        )));
    }
    Ok(Array2::from_shape_simple_fn((rows, cols), || rng.normal()))
}
