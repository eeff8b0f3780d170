//! Data-parallel loop helpers.
//!
//! With the `parallel` feature the loops are spread over the rayon pool,
//! otherwise they run sequentially. Reductions always sum fixed-size chunks
//! and then combine the partial sums in chunk order, so results are
//! bit-identical across thread counts and between the two builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of elements per reduction chunk. Part of the determinism contract:
/// changing it changes the rounding of every reduction.
pub const CHUNK: usize = 2048;

/// Minimum number of rows handed to one rayon task.
#[cfg(feature = "parallel")]
const MIN_ROWS: usize = 8;

fn chunk_sum<F: Fn(usize) -> f64>(c: usize, len: usize, f: &F) -> f64 {
    let lo = c * CHUNK;
    let hi = (lo + CHUNK).min(len);
    let mut s = 0.0;
    for i in lo..hi {
        s += f(i);
    }
    s
}

/// Deterministic `Σ_{i<len} f(i)`.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| chunk_sum(c, len, &f))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..chunks).map(|c| chunk_sum(c, len, &f)).collect();
    partials.iter().sum()
}

/// Maximum of `f(i)` over `0..len`; `f64::NEG_INFINITY` for an empty range.
pub fn max<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(f)
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.len(), |i| a[i] * b[i])
}

/// Fill `out[i] = f(i)`.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_iter_mut()
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(i, o)| *o = f(i));
    #[cfg(not(feature = "parallel"))]
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// `y[i] = op(i, y[i])` in place.
pub fn update<F>(y: &mut [f64], op: F)
where
    F: Fn(usize, f64) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    y.par_iter_mut()
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(i, v)| *v = op(i, *v));
    #[cfg(not(feature = "parallel"))]
    y.iter_mut().enumerate().for_each(|(i, v)| *v = op(i, *v));
}

/// Run `f(row, row_slice)` over consecutive rows of length `row_len`.
pub fn for_rows<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(row_len)
        .with_min_len(MIN_ROWS)
        .enumerate()
        .for_each(|(r, s)| f(r, s));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(r, s)| f(r, s));
}

/// Map `f` over `items` in order, possibly in parallel.
pub fn map_collect<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_chunk_ordered() {
        let v: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut expect = 0.0;
        for c in v.chunks(CHUNK) {
            expect += c.iter().fold(0.0, |a, b| a + b);
        }
        // chunk partials are summed left to right starting from zero
        let mut partials = Vec::new();
        for c in v.chunks(CHUNK) {
            partials.push(c.iter().fold(0.0, |a, b| a + b));
        }
        let ordered: f64 = partials.iter().sum();
        assert_eq!(sum(v.len(), |i| v[i]).to_bits(), ordered.to_bits());
        assert!((expect - ordered).abs() < 1e-12);
    }

    #[test]
    fn empty_reductions() {
        assert_eq!(sum(0, |_| 1.0), 0.0);
        assert_eq!(max(0, |_| 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn rows_visit_everything() {
        let mut v = vec![0.0; 60];
        for_rows(&mut v, 6, |r, s| {
            for (i, x) in s.iter_mut().enumerate() {
                *x = (r * 6 + i) as f64;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| x == i as f64));
    }
}
