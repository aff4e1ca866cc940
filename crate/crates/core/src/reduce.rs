//! Reductions whose result does not depend on the number of worker threads.
//!
//! Work is cut into fixed-size blocks, each block is summed sequentially, and
//! the block partials are combined by a fixed pairwise tree.

use rayon::prelude::*;

/// Elements per leaf block.
pub const BLOCK: usize = 4096;

fn tree_sum(partials: &[f64]) -> f64 {
    match partials.len() {
        0 => 0.0,
        1 => partials[0],
        n => {
            let (a, b) = partials.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

/// `Σ_{i<n} f(i)` with a thread-count-independent summation order.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let partials: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let end = ((b + 1) * BLOCK).min(n);
            (b * BLOCK..end).fold(0.0, |acc, i| acc + f(i))
        })
        .collect();
    tree_sum(&partials)
}

/// `Σ f(x)` over a slice, deterministic in the same sense as [`sum_indexed`].
pub fn sum_map<T, F>(data: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    let partials: Vec<f64> = data.par_chunks(BLOCK).map(|c| c.iter().fold(0.0, |acc, x| acc + f(x))).collect();
    tree_sum(&partials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independent_of_thread_count() {
        let data: Vec<f64> = (0..100_003).map(|i| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (1.0 + i as f64)).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| (sum_map(&data, |x| x * x), sum_indexed(data.len(), |i| data[i])))
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(4));
        let naive: f64 = data.iter().sum();
        assert!((one.1 - naive).abs() < 1e-9);
    }

    #[test]
    fn empty() {
        assert_eq!(sum_indexed(0, |_| 1.0), 0.0);
        assert_eq!(sum_map::<f64, _>(&[], |x| *x), 0.0);
    }
}
