//! Deterministic parallel accumulation.
//!
//! Work is split into fixed-size chunks of the path-index space; chunks run
//! in parallel, chunk partials are merged sequentially in chunk order. The
//! result is bit-identical for any number of rayon workers.

use rayon::prelude::*;

pub(crate) const CHUNK: u64 = 4096;

/// First two sample moments with a deterministic merge.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    pub sum: f64,
    pub sumsq: f64,
    pub n: u64,
}

impl Moments {
    pub fn add(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
        self.n += 1;
    }

    pub fn merge(mut self, other: Moments) -> Moments {
        self.sum += other.sum;
        self.sumsq += other.sumsq;
        self.n += other.n;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean: sample standard deviation / sqrt(n).
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Fold `step` over `0..n_items` in fixed chunks. `init` builds one chunk
/// partial, `merge` combines partials in ascending chunk order.
pub(crate) fn accumulate<T, I, F, M>(n_items: u64, init: I, step: F, merge: M) -> T
where
    T: Send,
    I: Fn() -> T + Sync,
    F: Fn(&mut T, u64) + Sync,
    M: Fn(T, T) -> T,
{
    let n_chunks = n_items.div_ceil(CHUNK);
    let partials: Vec<T> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            let end = ((c + 1) * CHUNK).min(n_items);
            for i in c * CHUNK..end {
                step(&mut acc, i);
            }
            acc
        })
        .collect();
    partials
        .into_iter()
        .fold(init(), merge)
}

/// Moments of a scalar per path.
pub(crate) fn accumulate_moments<F: Fn(u64) -> f64 + Sync>(n_paths: u64, f: F) -> Moments {
    accumulate(
        n_paths,
        Moments::default,
        |m, i| m.add(f(i)),
        Moments::merge,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_direct_formulas() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let mut m = Moments::default();
        for x in xs {
            m.add(x);
        }
        assert_eq!(m.mean(), 3.75);
        let var = xs.iter().map(|x| (x - 3.75_f64).powi(2)).sum::<f64>() / 3.0;
        assert!((m.stderr() - (var / 4.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn chunked_fold_is_worker_count_independent() {
        let f = |i: u64| ((i * 2654435761) % 10007) as f64 * 1e-7;
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| accumulate_moments(100_000, f));
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| accumulate_moments(100_000, f));
        assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        assert_eq!(a.sumsq.to_bits(), b.sumsq.to_bits());
    }
}
