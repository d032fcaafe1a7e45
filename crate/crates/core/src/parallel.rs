//! Deterministic parallel reductions.
//!
//! Index ranges are cut into fixed-size chunks that do not depend on the
//! thread count; chunk partials are summed in index order, so results are
//! bitwise reproducible however the pool is sized.

use num_complex::Complex64;
use rayon::prelude::*;

pub const CHUNK: usize = 64;

/// `Σ_{k<n} f(k)`.
pub fn sum_complex<F>(n: usize, f: F) -> Complex64
where
    F: Fn(usize) -> Complex64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Complex64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                acc += f(k);
            }
            acc
        })
        .collect();
    partials.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b)
}

/// Pointwise `Σ_{k<n} f(k)` for vector-valued `f`, which writes into a zeroed buffer of length `dim`.
pub fn sum_vectors<F>(n: usize, dim: usize, f: F) -> Vec<Complex64>
where
    F: Fn(usize, &mut [Complex64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<Vec<Complex64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Complex64::new(0.0, 0.0); dim];
            let mut buf = vec![Complex64::new(0.0, 0.0); dim];
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                f(k, &mut buf);
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += b;
                }
            }
            acc
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for p in partials {
        for (a, b) in out.iter_mut().zip(p) {
            *a += b;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_do_not_depend_on_pool_size() {
        let f = |k: usize| Complex64::new((k as f64).sin() * 1e-3, (k as f64 * 0.7).cos());
        let reference = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sum_complex(10_007, f));
        for threads in [2, 3, 8] {
            let got = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sum_complex(10_007, f));
            assert_eq!(got.re.to_bits(), reference.re.to_bits());
            assert_eq!(got.im.to_bits(), reference.im.to_bits());
        }
    }

    #[test]
    fn vector_sums_match_sequential() {
        let got = sum_vectors(300, 3, |k, out| {
            out[k % 3] = Complex64::new(1.0, 0.0);
        });
        assert_eq!(got, vec![Complex64::new(100.0, 0.0); 3]);
        assert_eq!(sum_complex(0, |_| Complex64::new(1.0, 0.0)), Complex64::new(0.0, 0.0));
    }
}
