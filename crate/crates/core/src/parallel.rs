//! Replicate-parallel map with deterministic output order.
//!
//! Each replicate owns its random stream, and results come back indexed by
//! replicate, so every reduction downstream sees the same inputs in the same
//! order whatever the worker count. Without the `parallel` feature the map
//! runs sequentially.

use crate::error::Result;

/// Requested worker count; `None` uses the global rayon pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Workers(pub Option<usize>);

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(Some(1));

    pub fn new(count: usize) -> Self {
        Workers(if count == 0 { None } else { Some(count) })
    }
}

/// `f(0), f(1), …, f(reps - 1)` evaluated concurrently, returned in order.
pub fn replicate_map<T, F>(reps: u64, workers: Workers, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        match workers.0 {
            Some(1) => (0..reps).map(f).collect(),
            Some(k) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| crate::Error::Numeric(format!("thread pool: {e}")))?;
                pool.install(|| (0..reps).into_par_iter().map(&f).collect())
            }
            None => (0..reps).into_par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        (0..reps).map(f).collect()
    }
}

/// Pairwise (cascade) summation; error grows like `log n` rather than `n`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise-summed mean of `g(x)` over the samples.
pub fn mean_of(xs: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let mapped: Vec<f64> = xs.iter().map(|x| g(*x)).collect();
    pairwise_sum(&mapped) / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let seq = replicate_map(1000, Workers::SEQUENTIAL, |i| Ok(i * i)).unwrap();
        for w in [Workers::default(), Workers::new(2), Workers::new(7)] {
            assert_eq!(replicate_map(1000, w, |i| Ok(i * i)).unwrap(), seq);
        }
    }

    #[test]
    fn errors_propagate() {
        let r: Result<Vec<u64>> = replicate_map(10, Workers::new(3), |i| {
            if i == 7 {
                Err(crate::Error::Numeric("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs = vec![0.1; 1_000_000];
        assert!((pairwise_sum(&xs) - 100_000.0).abs() < 1e-8);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(mean_of(&[1.0, 2.0, 3.0], |x| x * x), 14.0 / 3.0);
    }
}
