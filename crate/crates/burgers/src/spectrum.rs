//! Noise spectrum: the coefficient sequence `a_1..a_N`, the spatial
//! covariance function it generates, and the spectral sums the bound
//! evaluators consume.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Truncated coefficient sequence `a_1..a_N` of the forcing field.
///
/// The truncation is exact: a finite list satisfies every summability
/// requirement by construction, so no decay condition is enforced beyond
/// finiteness and non-degeneracy.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    coeffs: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    /// Builds a spectrum from explicit coefficients `a_1..a_N`.
    ///
    /// Rejects empty lists, non-finite entries and the all-zero sequence
    /// (degenerate noise).
    pub fn new(coeffs: Vec<T>) -> Result<Self> {
        if coeffs.is_empty()
            || coeffs.iter().any(|a| !a.is_finite())
            || coeffs.iter().all(|a| a.is_zero())
        {
            return Err(Error::DegenerateSpectrum);
        }
        Ok(Self { coeffs })
    }

    /// Expands the power-law family `a_n = c * n^(-q)` up to mode `n_max`.
    pub fn power_family(c: T, q: T, n_max: usize) -> Result<Self> {
        let coeffs = (1..=n_max)
            .map(|n| c * T::from_index(n).powf(-q))
            .collect();
        Self::new(coeffs)
    }

    /// Number of modes `N`.
    pub fn n_max(&self) -> usize {
        self.coeffs.len()
    }

    /// Coefficients `a_1..a_N` in mode order.
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Spatial covariance shape `Γ(x) = Σ a_n² cos(nx)`; even and 2π-periodic.
    pub fn gamma(&self, x: T) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &a)| a * a * (T::from_index(i + 1) * x).cos())
            .sum()
    }

    /// `Γ(0) = Σ a_n²`, the pointwise variance rate of the noise field.
    pub fn gamma0(&self) -> T {
        self.coeffs.iter().map(|&a| a * a).sum()
    }

    /// `-Γ''(0) = Σ n² a_n²`, the scale constant of the limiting moments.
    /// Strictly positive for any valid spectrum.
    pub fn neg_gamma_pp0(&self) -> T {
        self.weighted_power_sum(2, false)
    }

    /// Space-time covariance `E{ζ(t,x)ζ(s,y)} = min(s,t) Γ(x−y)`.
    pub fn covariance(&self, s: T, t: T, x: T, y: T) -> Result<T> {
        if s < T::zero() || t < T::zero() {
            return Err(Error::NegativeTime {
                s: s.as_f64(),
                t: t.as_f64(),
            });
        }
        Ok(s.min(t) * self.gamma(x - y))
    }

    /// `Σ n^w |a_n|` (abs) or `Σ n^w a_n²` (squared) for the bound formulas.
    fn weighted_power_sum(&self, w: u32, abs: bool) -> T {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let nw = T::from_index(i + 1).powi(w as i32);
                if abs {
                    nw * a.abs()
                } else {
                    nw * a * a
                }
            })
            .sum()
    }

    /// `Σ |a_n|`
    pub fn sum_abs(&self) -> T {
        self.weighted_power_sum(0, true)
    }

    /// `Σ n² |a_n|`
    pub fn sum_n2_abs(&self) -> T {
        self.weighted_power_sum(2, true)
    }

    /// `Σ n³ |a_n|`
    pub fn sum_n3_abs(&self) -> T {
        self.weighted_power_sum(3, true)
    }

    /// `Σ n⁴ |a_n|` (decay diagnostic, reported but never rejected)
    pub fn sum_n4_abs(&self) -> T {
        self.weighted_power_sum(4, true)
    }

    /// `Σ n⁴ a_n²`
    pub fn sum_n4_sq(&self) -> T {
        self.weighted_power_sum(4, false)
    }

    /// `Σ n⁶ a_n²`
    pub fn sum_n6_sq(&self) -> T {
        self.weighted_power_sum(6, false)
    }

    /// `Σ n⁸ a_n²` (decay diagnostic)
    pub fn sum_n8_sq(&self) -> T {
        self.weighted_power_sum(8, false)
    }

    /// Per-mode weight list `|a_n|` duplicated over both Brownian components,
    /// the shape consumed by the sup-moment bounds.
    pub fn component_weights(&self) -> Vec<T> {
        let mut w = Vec::with_capacity(2 * self.coeffs.len());
        for &a in &self.coeffs {
            w.push(a.abs());
            w.push(a.abs());
        }
        w
    }
}
