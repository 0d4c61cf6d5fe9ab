//! Deterministic batch execution for sampling loops.
//!
//! Every Monte Carlo loop in this crate is split into fixed-size batches.
//! Batch `i` derives all of its randomness from the run seed plus the batch
//! index (a dedicated RNG stream), and partial results are combined in batch
//! order with pairwise summation. This makes every estimate a pure function
//! of `(seed, samples)` — independent of thread count, scheduling, and of
//! whether the `parallel` feature is enabled at all.

/// Number of samples drawn per batch. Large enough to amortize RNG setup,
/// small enough to keep many batches for work stealing.
pub const BATCH_SIZE: u64 = 4096;

/// Number of samples batch `batch` draws out of `total`.
pub fn batch_len(batch: u64, total: u64) -> u64 {
    let batches = total.div_ceil(BATCH_SIZE);
    if batch + 1 == batches {
        total - batch * BATCH_SIZE
    } else {
        BATCH_SIZE
    }
}

/// Splits `total` into `BATCH_SIZE`-sized chunks; the last may be short.
pub fn batch_sizes(total: u64) -> impl Iterator<Item = (u64, u64)> {
    let n_batches = total.div_ceil(BATCH_SIZE);
    (0..n_batches).map(move |i| (i, batch_len(i, total)))
}

/// Maps `f` over batch indices `0..batches`, in parallel when the `parallel`
/// feature is enabled. The output vector is always in batch order.
#[cfg(feature = "parallel")]
pub fn map_batches<T, F>(batches: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..batches).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_batches<T, F>(batches: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    map_batches_seq(batches, f)
}

/// Sequential twin of [`map_batches`]; always available so benchmarks can
/// compare the two code paths in a single binary.
pub fn map_batches_seq<T, F>(batches: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..batches).map(f).collect()
}

/// Fixed-order pairwise summation. More accurate than a running sum and,
/// unlike tree reductions picked by a scheduler, fully deterministic.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Streaming mean/variance accumulator for one batch, merged in batch order.
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl BatchStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    /// Combines per-batch partials with pairwise summation over the batch
    /// sums. The result depends only on the batch contents and order.
    pub fn merge_all(parts: &[BatchStats]) -> BatchStats {
        let sums: Vec<f64> = parts.iter().map(|p| p.sum).collect();
        let sq: Vec<f64> = parts.iter().map(|p| p.sum_sq).collect();
        BatchStats {
            count: parts.iter().map(|p| p.count).sum(),
            sum: pairwise_sum(&sums),
            sum_sq: pairwise_sum(&sq),
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Standard error of the mean: sample standard deviation over sqrt(n).
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}
