//! Data-parallel kernels with a sequential fallback.
//!
//! The hot loops of the engine are elementwise maps over large share
//! vectors. With the `parallel` feature (default) they run on rayon; without
//! it they run sequentially. Both paths are always compiled so benchmarks
//! can compare them in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Inputs shorter than this are not worth a rayon dispatch.
pub const PAR_THRESHOLD: usize = 4096;

pub fn map2_seq(a: &[u64], b: &[u64], f: impl Fn(u64, u64) -> u64) -> Vec<u64> {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

#[cfg(feature = "parallel")]
pub fn map2(a: &[u64], b: &[u64], f: impl Fn(u64, u64) -> u64 + Sync + Send) -> Vec<u64> {
    assert_eq!(a.len(), b.len());
    if a.len() < PAR_THRESHOLD {
        return map2_seq(a, b, f);
    }
    a.par_iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map2(a: &[u64], b: &[u64], f: impl Fn(u64, u64) -> u64 + Sync + Send) -> Vec<u64> {
    map2_seq(a, b, f)
}

pub fn map4_seq(
    a: &[u64],
    b: &[u64],
    c: &[u64],
    d: &[u64],
    f: impl Fn(u64, u64, u64, u64) -> u64,
) -> Vec<u64> {
    assert!(a.len() == b.len() && b.len() == c.len() && c.len() == d.len());
    (0..a.len()).map(|i| f(a[i], b[i], c[i], d[i])).collect()
}

#[cfg(feature = "parallel")]
pub fn map4(
    a: &[u64],
    b: &[u64],
    c: &[u64],
    d: &[u64],
    f: impl Fn(u64, u64, u64, u64) -> u64 + Sync + Send,
) -> Vec<u64> {
    assert!(a.len() == b.len() && b.len() == c.len() && c.len() == d.len());
    if a.len() < PAR_THRESHOLD {
        return map4_seq(a, b, c, d, f);
    }
    (0..a.len())
        .into_par_iter()
        .map(|i| f(a[i], b[i], c[i], d[i]))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map4(
    a: &[u64],
    b: &[u64],
    c: &[u64],
    d: &[u64],
    f: impl Fn(u64, u64, u64, u64) -> u64 + Sync + Send,
) -> Vec<u64> {
    map4_seq(a, b, c, d, f)
}

pub fn map_seq(a: &[u64], f: impl Fn(u64) -> u64) -> Vec<u64> {
    a.iter().map(|&x| f(x)).collect()
}

#[cfg(feature = "parallel")]
pub fn map(a: &[u64], f: impl Fn(u64) -> u64 + Sync + Send) -> Vec<u64> {
    if a.len() < PAR_THRESHOLD {
        return map_seq(a, f);
    }
    a.par_iter().map(|&x| f(x)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map(a: &[u64], f: impl Fn(u64) -> u64 + Sync + Send) -> Vec<u64> {
    map_seq(a, f)
}
