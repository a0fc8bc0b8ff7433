//! Row-parallel helpers.
//!
//! With the `parallel` feature these fan out over rayon's global pool;
//! without it they are plain sequential loops. Every helper produces its
//! output in input order, so results never depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, collecting in index order.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Maps `f` over each `width`-sized row of a row-major buffer.
#[cfg(feature = "parallel")]
pub fn map_rows<T, F>(data: &[f64], width: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync + Send,
{
    data.par_chunks(width.max(1)).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_rows<T, F>(data: &[f64], width: usize, f: F) -> Vec<T>
where
    F: Fn(&[f64]) -> T,
{
    data.chunks(width.max(1)).map(f).collect()
}

/// Maps `f` over a slice, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    F: Fn(&S) -> T,
{
    items.iter().map(f).collect()
}

/// Fills `out[i] = f(i)` in place.
#[cfg(feature = "parallel")]
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64,
{
    out.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

/// True when built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let data: Vec<f64> = (0..300).map(f64::from).collect();
        let sums = map_rows(&data, 3, |r| r.iter().sum::<f64>());
        assert_eq!(sums.len(), 100);
        for (i, s) in sums.iter().enumerate() {
            let base = (3 * i) as f64;
            assert_eq!(*s, 3.0 * base + 3.0);
        }
        assert_eq!(map_indices(5, |i| i * i), vec![0, 1, 4, 9, 16]);
        let mut out = vec![0.0; 4];
        fill_indexed(&mut out, |i| i as f64 * 0.5);
        assert_eq!(out, vec![0.0, 0.5, 1.0, 1.5]);
    }
}
