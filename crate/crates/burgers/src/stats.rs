//! Small statistics kit: order-robust summation and normal-theory
//! confidence intervals over independent-realization batches.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// 97.5% standard normal quantile; 95% two-sided half-widths.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Pairwise (cascade) summation. Error grows like O(log n) in ulps, and the
/// result depends only on element order, so ensemble reductions are
/// reproducible across worker counts.
pub fn pairwise_sum<T: Real>(v: &[T]) -> T {
    match v.len() {
        0 => T::zero(),
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

pub fn mean<T: Real>(v: &[T]) -> T {
    pairwise_sum(v) / T::from_index(v.len())
}

/// Unbiased sample variance (two-pass).
pub fn sample_variance<T: Real>(v: &[T]) -> T {
    let m = mean(v);
    let sq: Vec<T> = v.iter().map(|&x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / T::from_index(v.len() - 1)
}

/// Mean and 95% half-width of a batch of independent values.
pub fn mean_ci<T: Real>(v: &[T]) -> Result<(T, T)> {
    if v.len() < 2 {
        return Err(Error::TooFewSamples {
            got: v.len(),
            needed: 2,
        });
    }
    let m = mean(v);
    let sd = sample_variance(v).sqrt();
    let hw = T::cast(Z95) * sd / T::from_index(v.len()).sqrt();
    Ok((m, hw))
}
