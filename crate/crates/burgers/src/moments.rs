//! Closed-form limiting moments, the exact polynomial moment recursion,
//! Monte Carlo moment estimates with batch-means confidence intervals, and
//! evaluators for every explicit moment/sup bound the audits check.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectrum::Spectrum;
use crate::stats;
use crate::viscous::Field;
use serde::{Deserialize, Serialize};

/// Largest moment order carried by the closed form and the recursion;
/// keeps double factorials and powers well inside f64 range.
pub const MAX_ORDER: usize = 16;

fn check_order(order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::OrderTooLarge {
            order,
            max: MAX_ORDER,
        });
    }
    Ok(())
}

fn check_time<T: Real>(t: T) -> Result<()> {
    if t < T::zero() {
        return Err(Error::NegativeTime {
            s: t.as_f64(),
            t: t.as_f64(),
        });
    }
    Ok(())
}

/// `(2p−1)!! = ∏_{j=1..p} (2j−1)`, the even standard-normal moments.
fn double_factorial_odd<T: Real>(p: usize) -> T {
    let mut acc = T::one();
    for j in 1..=p {
        acc = acc * T::from_index(2 * j - 1);
    }
    acc
}

/// Limiting moment of order `order` at time `t`:
/// odd orders vanish, order `2p` equals `(−Γ''(0))^p (2p−1)!! t^p`.
pub fn limit_moment<T: Real>(order: usize, t: T, spec: &Spectrum<T>) -> Result<T> {
    check_order(order)?;
    check_time(t)?;
    if order % 2 == 1 {
        return Ok(T::zero());
    }
    if order == 0 {
        return Ok(T::one());
    }
    let p = order / 2;
    Ok(spec.neg_gamma_pp0().powi(p as i32) * double_factorial_odd::<T>(p) * t.powi(p as i32))
}

/// Values `M_0(t)..M_max(t)` from the exact recursion
/// `M_p = (p(p−1)/2)(−Γ''(0)) ∫₀ᵗ M_{p−2}`, carried symbolically as
/// monomial coefficients so integration is exact (no quadrature).
pub fn moment_recursion<T: Real>(
    max_order: usize,
    t: T,
    spec: &Spectrum<T>,
) -> Result<Vec<T>> {
    check_order(max_order)?;
    check_time(t)?;
    let gamma = spec.neg_gamma_pp0();
    // polys[p][k] is the t^k coefficient of M_p
    let mut polys: Vec<Vec<T>> = Vec::with_capacity(max_order + 1);
    for p in 0..=max_order {
        let poly = match p {
            0 => vec![T::one()],
            1 => vec![],
            _ => {
                let factor =
                    T::from_index(p) * T::from_index(p - 1) / T::cast(2.0) * gamma;
                let prev = &polys[p - 2];
                let mut integ = vec![T::zero(); prev.len() + 1];
                for (k, &c) in prev.iter().enumerate() {
                    integ[k + 1] = factor * c / T::from_index(k + 1);
                }
                integ
            }
        };
        polys.push(poly);
    }
    Ok(polys
        .iter()
        .map(|poly| {
            poly.iter()
                .rev()
                .fold(T::zero(), |acc, &c| acc * t + c)
        })
        .collect())
}

/// `G(p) = ∫₀^∞ y^p e^{−y²/2} dy = 2^{(p−1)/2} Γ((p+1)/2)` through the
/// standard log-gamma evaluation.
pub fn g_constant<T: Real>(p: usize) -> T {
    let half = (p as f64 + 1.0) / 2.0;
    let val = 2f64.powf((p as f64 - 1.0) / 2.0) * libm::lgamma(half).exp();
    T::cast(val)
}

/// `E{exp(Σ w_j S_j(t))} ≤ exp{(t/2) Σ w_j² + √(2t)(√log2 + 2√π) Σ |w_j|}`
/// for suprema `S_j` of independent standard Brownian motions.
pub fn lemma3_bound<T: Real>(weights: &[T], t: T) -> Result<T> {
    check_time(t)?;
    let sum_sq: T = weights.iter().map(|&w| w * w).sum();
    let sum_abs: T = weights.iter().map(|&w| w.abs()).sum();
    let coeff = T::cast((2.0f64).ln().sqrt() + 2.0 * std::f64::consts::PI.sqrt());
    Ok((t / T::cast(2.0) * sum_sq + (T::cast(2.0) * t).sqrt() * coeff * sum_abs).exp())
}

/// `E{|Σ w_j S_j(t)|^p} ≤ (Σ|w_j|)^p t^{p/2} ((2 log2)^{p/2} + 2p G(p−1))`.
pub fn lemma4_bound<T: Real>(p: usize, t: T, sum_abs: T) -> Result<T> {
    if p < 1 {
        return Err(Error::OrderTooSmall { p });
    }
    check_time(t)?;
    let two_log2 = T::cast(2.0 * (2.0f64).ln());
    let pf = T::from_index(p);
    Ok(sum_abs.powi(p as i32)
        * t.powf(pf / T::cast(2.0))
        * (two_log2.powf(pf / T::cast(2.0)) + T::cast(2.0) * pf * g_constant::<T>(p - 1)))
}

/// Bound on `E{(sup_{ε ≤ 1, s ≤ t, x} |u|)^p}`:
/// `C₁ (Σ n³|a_n|)^p exp{C₂ Σ n⁶ a_n² + C₃ Σ n³|a_n|}` with
/// `C₁ = (2+t)^{3p/2}((2 log2)^p + 4p G(2p−1))^{1/2}`, `C₂ = 2p²t³`,
/// `C₃ = 2√2(2√π + √log2) p t^{3/2}`.
pub fn theorem11_bound<T: Real>(p: usize, t: T, spec: &Spectrum<T>) -> Result<T> {
    if p < 1 {
        return Err(Error::OrderTooSmall { p });
    }
    check_time(t)?;
    let pf = T::from_index(p);
    let two_log2 = T::cast(2.0 * (2.0f64).ln());
    let c1 = (T::cast(2.0) + t).powf(T::cast(1.5) * pf)
        * (two_log2.powi(p as i32) + T::cast(4.0) * pf * g_constant::<T>(2 * p - 1)).sqrt();
    let c2 = T::cast(2.0) * pf * pf * t.powi(3);
    let c3 = T::cast(2.0 * 2f64.sqrt() * (2.0 * std::f64::consts::PI.sqrt() + (2f64).ln().sqrt()))
        * pf
        * t.powf(T::cast(1.5));
    let s3 = spec.sum_n3_abs();
    Ok(c1 * s3.powi(p as i32) * (c2 * spec.sum_n6_sq() + c3 * s3).exp())
}

/// Time-independent bound on `E{(sup_x |u_inviscid(t, ·)|)^p}`:
/// `10^p exp{32 p² Σ n⁴ a_n² + 8p(√(2 log2) + 2√(2π)) Σ n²|a_n|}`.
pub fn theorem23_moment_bound<T: Real>(p: usize, spec: &Spectrum<T>) -> Result<T> {
    if p < 1 {
        return Err(Error::OrderTooSmall { p });
    }
    let pf = T::from_index(p);
    let coeff = T::cast((2.0 * (2.0f64).ln()).sqrt() + 2.0 * (2.0 * std::f64::consts::PI).sqrt());
    Ok(T::cast(10.0).powi(p as i32)
        * (T::cast(32.0) * pf * pf * spec.sum_n4_sq() + T::cast(8.0) * pf * coeff * spec.sum_n2_abs())
            .exp())
}

/// Monte Carlo moment estimate at one (order, time, viscosity) point,
/// with its 95% half-width and the closed-form target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: usize,
    pub t: f64,
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub target: f64,
    pub n_samples: usize,
    pub epsilon: f64,
}

/// Averages `u(x_j)^order` over grid points and ensemble members.
///
/// Grid points within one member are correlated and form one batch; the
/// half-width comes from normal-theory batch means across members.
pub fn mc_moment<T: Real>(
    fields: &[Field<T>],
    order: usize,
    t: T,
    epsilon: T,
    spec: &Spectrum<T>,
) -> Result<MomentReport> {
    if fields.len() < 2 {
        return Err(Error::TooFewSamples {
            got: fields.len(),
            needed: 2,
        });
    }
    let batches: Vec<T> = fields
        .iter()
        .map(|f| {
            let powered: Vec<T> = f
                .values()
                .iter()
                .map(|&v| v.powi(order as i32))
                .collect();
            stats::mean(&powered)
        })
        .collect();
    let (estimate, ci) = stats::mean_ci(&batches)?;
    Ok(MomentReport {
        order,
        t: t.as_f64(),
        estimate: estimate.as_f64(),
        ci_halfwidth: ci.as_f64(),
        target: limit_moment(order, t, spec)?.as_f64(),
        n_samples: fields.len(),
        epsilon: epsilon.as_f64(),
    })
}

/// Point estimate with a 95% half-width.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_halfwidth: f64,
}

/// Multi-point moment estimate `E{u(t,x_1)⋯u(t,x_p)}`; each point is mapped
/// to its nearest grid node.
pub fn mc_multipoint<T: Real>(fields: &[Field<T>], points: &[T]) -> Result<Estimate> {
    if fields.len() < 2 {
        return Err(Error::TooFewSamples {
            got: fields.len(),
            needed: 2,
        });
    }
    let m = fields[0].len();
    let tau = 2.0 * std::f64::consts::PI;
    let indices: Vec<usize> = points
        .iter()
        .map(|&x| {
            let frac = (x.as_f64() / tau).rem_euclid(1.0);
            ((frac * m as f64).round() as usize) % m
        })
        .collect();
    let batches: Vec<T> = fields
        .iter()
        .map(|f| {
            indices
                .iter()
                .fold(T::one(), |acc, &j| acc * f.values()[j])
        })
        .collect();
    let (value, ci) = stats::mean_ci(&batches)?;
    Ok(Estimate {
        value: value.as_f64(),
        ci_halfwidth: ci.as_f64(),
    })
}

/// Named one-sided inequality checked by the audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundName {
    Lemma3,
    Lemma4,
    Theorem11,
    Lemma6,
    Theorem23,
}

/// Result of one bound audit; `satisfied ⇔ empirical_value ≤ bound_value`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundAudit {
    pub bound_name: BoundName,
    pub bound_value: f64,
    pub empirical_value: f64,
    pub satisfied: bool,
}

impl BoundAudit {
    pub fn new(bound_name: BoundName, bound_value: f64, empirical_value: f64) -> Self {
        Self {
            bound_name,
            bound_value,
            empirical_value,
            satisfied: empirical_value <= bound_value,
        }
    }
}
