//! Order-preserving parallel map. Results are collected by index, so every
//! downstream reduction sees the same sequence whatever the thread count.

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Sums `dim` per-path statistics over `n` paths. Paths are grouped into fixed
/// chunks summed sequentially; chunk totals are then combined pairwise. The
/// grouping does not depend on the thread count, so neither does the result.
pub fn chunked_sums<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    const CHUNK: usize = 2048;
    let chunks = n.div_ceil(CHUNK);
    let partial = map_indexed(chunks, |c| {
        let mut acc = vec![0.0; dim];
        let mut tmp = vec![0.0; dim];
        for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
            tmp.iter_mut().for_each(|t| *t = 0.0);
            f(i, &mut tmp);
            for (a, t) in acc.iter_mut().zip(&tmp) {
                *a += t;
            }
        }
        acc
    });
    (0..dim)
        .map(|k| {
            let col: Vec<f64> = partial.iter().map(|p| p[k]).collect();
            crate::numeric::pairwise_sum(&col)
        })
        .collect()
}
