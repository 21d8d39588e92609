//! Transform route: the linear multiplicative equation for `U` is stepped by
//! operator splitting (pointwise exponential kick, then an exact spectral
//! heat half-step), the velocity is recovered as `u = −ε ∂ₓ log U`, and an
//! independent walker-average estimator provides a second value of `U` from
//! the same frozen increments.
//!
//! The exponential kick realizes the Stratonovich coupling: its mean over
//! the increment reproduces the `Γ(0)/(2ε²)` drift of the Itô form.

use crate::error::{Error, Result};
use crate::forcing::{ForcingPath, ModeTables};
use crate::scalar::Real;
use crate::spectrum::Spectrum;
use crate::stats;
use crate::viscous::{Field, ViscousConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::sync::Arc;

/// Periodic grid samples of `U`, strictly positive everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveField<T> {
    values: Vec<T>,
}

impl<T: Real> PositiveField<T> {
    /// Validates positivity and finiteness of every value.
    pub fn new(values: Vec<T>) -> Result<Self> {
        for &v in &values {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::NonPositive {
                    step: 0,
                    value: v.as_f64(),
                });
            }
        }
        Ok(Self { values })
    }

    pub fn ones(m: usize) -> Self {
        Self {
            values: vec![T::one(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }
}

/// Exact heat half-dynamics in discrete Fourier space: mode `m` is damped by
/// `exp(−(ε/2) m² dt)` with the continuum symbol `m²`.
struct HeatStep<T> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    multiplier: Vec<T>,
    buf: Vec<Complex<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> HeatStep<T> {
    fn new(m: usize, epsilon: T, dt: T) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let multiplier = (0..m)
            .map(|i| {
                let freq = i.min(m - i);
                let sym = T::from_index(freq * freq);
                (-epsilon * T::cast(0.5) * sym * dt).exp() / T::from_index(m)
            })
            .collect();
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            multiplier,
            buf: vec![Complex::new(T::zero(), T::zero()); m],
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
        }
    }

    fn apply(&mut self, values: &mut [T]) {
        for (b, &v) in self.buf.iter_mut().zip(values.iter()) {
            *b = Complex::new(v, T::zero());
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (b, &w) in self.buf.iter_mut().zip(&self.multiplier) {
            *b = *b * w;
        }
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, b) in values.iter_mut().zip(&self.buf) {
            *v = b.re;
        }
    }
}

fn check_positive<T: Real>(values: &[T], step: usize) -> Result<()> {
    for &v in values {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::NonPositive {
                step,
                value: v.as_f64(),
            });
        }
    }
    Ok(())
}

/// One splitting step: multiply pointwise by `exp(−δζ(x_j)/ε)`, then apply
/// the exact heat half-dynamics.
pub fn colehopf_step<T: Real>(
    u_field: &PositiveField<T>,
    cfg: &ViscousConfig<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
    k: usize,
) -> Result<PositiveField<T>> {
    let m = u_field.len();
    let tables = ModeTables::new(spec, m);
    let mut dz = vec![T::zero(); m];
    tables.delta_zeta_into(spec, path, k, &mut dz);
    let mut heat = HeatStep::new(m, cfg.epsilon, cfg.grid.dt());
    let mut values = u_field.values.clone();
    kick_and_diffuse(&mut values, &dz, cfg.epsilon, &mut heat, k)?;
    Ok(PositiveField { values })
}

fn kick_and_diffuse<T: Real>(
    values: &mut [T],
    dz: &[T],
    epsilon: T,
    heat: &mut HeatStep<T>,
    step: usize,
) -> Result<()> {
    for (v, &d) in values.iter_mut().zip(dz) {
        *v = *v * (-d / epsilon).exp();
    }
    heat.apply(values);
    check_positive(values, step)
}

/// Full splitting solve output.
#[derive(Debug, Clone)]
pub struct ColehopfRun<T> {
    pub final_field: PositiveField<T>,
    /// `min_{j, k ≤ K} U` over the whole trajectory (start value included).
    pub min_value: T,
    pub snapshots: Vec<(usize, PositiveField<T>)>,
}

/// Runs the splitting solver from `U ≡ 1`.
pub fn colehopf_solve<T: Real>(
    cfg: &ViscousConfig<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
) -> Result<ColehopfRun<T>> {
    if path.grid() != cfg.grid {
        return Err(Error::GridMismatch);
    }
    cfg.check_resolves(spec)?;
    let m = cfg.grid_points;
    let tables = ModeTables::new(spec, m);
    let mut heat = HeatStep::new(m, cfg.epsilon, cfg.grid.dt());
    let mut values = vec![T::one(); m];
    let mut dz = vec![T::zero(); m];
    let mut min_value = T::one();
    let mut snapshots = Vec::new();
    for k in 0..cfg.grid.steps() {
        tables.delta_zeta_into(spec, path, k, &mut dz);
        kick_and_diffuse(&mut values, &dz, cfg.epsilon, &mut heat, k)?;
        min_value = min_value.min(values.iter().fold(T::infinity(), |a, &v| a.min(v)));
        if cfg.snapshot_stride > 0 && (k + 1) % cfg.snapshot_stride == 0 {
            snapshots.push((
                k + 1,
                PositiveField {
                    values: values.clone(),
                },
            ));
        }
    }
    Ok(ColehopfRun {
        final_field: PositiveField { values },
        min_value,
        snapshots,
    })
}

/// Velocity recovery `u_j = −ε (log U_{j+1} − log U_{j−1}) / (2Δx)`.
///
/// The log-differences telescope around the period, so the recovered field
/// has exactly zero spatial mean up to roundoff.
pub fn recover_u<T: Real>(u_field: &PositiveField<T>, epsilon: T) -> Result<Field<T>> {
    check_positive(&u_field.values, 0)?;
    let m = u_field.len();
    let dx = T::cast(2.0) * T::PI() / T::from_index(m);
    let logs: Vec<T> = u_field.values.iter().map(|&v| v.ln()).collect();
    let mut out = vec![T::zero(); m];
    for j in 0..m {
        let jm = if j == 0 { m - 1 } else { j - 1 };
        let jp = if j == m - 1 { 0 } else { j + 1 };
        out[j] = -epsilon * (logs[jp] - logs[jm]) / (T::cast(2.0) * dx);
    }
    Ok(Field::from_values(out))
}

/// Walker-average estimate of `U(t, x)` with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FkEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Walker-average representation of `U(t_k, x)`: averages
/// `exp{−(1/ε) Σ_n a_n Σ_k [cos(n(x+W_k)) d1 + sin(n(x+W_k)) d2]}`
/// over independent walker paths `W` with variance `ε·dt` per step.
///
/// The stored β-increments are frozen; only the walker is resampled. The
/// walker position paired with increment `k` is its value at time offset
/// `t − t_{k+1}`, so with a single step the walker plays no role and the
/// average is exactly `exp(−δζ(x)/ε)`.
///
/// Deterministic in `(walker_seed, n_walkers)` regardless of scheduling.
pub fn feynman_kac_u<T: Real>(
    spec: &Spectrum<T>,
    path: &ForcingPath<T>,
    cfg: &ViscousConfig<T>,
    t_index: usize,
    x: T,
    n_walkers: usize,
    walker_seed: u64,
) -> Result<FkEstimate> {
    if t_index > path.grid().steps() {
        return Err(Error::StepOutOfRange {
            k: t_index,
            max: path.grid().steps(),
        });
    }
    if n_walkers < 2 {
        return Err(Error::TooFewSamples {
            got: n_walkers,
            needed: 2,
        });
    }
    if spec.n_max() != path.n_modes() {
        return Err(Error::ModeCountMismatch {
            spec: spec.n_max(),
            path: path.n_modes(),
        });
    }
    let dt = path.grid().dt();
    let step_sd = (cfg.epsilon * dt).sqrt();
    let k_steps = path.grid().steps();
    let (d1, d2) = (path.increments_1(), path.increments_2());
    let max_exp = T::cast(0.9) * T::max_value().ln();

    let values: Vec<std::result::Result<T, Error>> = (0..n_walkers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(walker_seed);
            rng.set_stream(w as u64);
            // walker positions at offsets 0, dt, .., (t_index−1)·dt
            let mut pos = Vec::with_capacity(t_index.max(1));
            let mut acc = T::zero();
            pos.push(acc);
            for _ in 1..t_index {
                acc += T::std_normal(&mut rng) * step_sd;
                pos.push(acc);
            }
            let mut expo = T::zero();
            for k in 0..t_index {
                let wk = pos[t_index - 1 - k];
                for (i, &a) in spec.coeffs().iter().enumerate() {
                    let arg = T::from_index(i + 1) * (x + wk);
                    expo += a
                        * (arg.cos() * d1[i * k_steps + k] + arg.sin() * d2[i * k_steps + k]);
                }
            }
            let scaled = -expo / cfg.epsilon;
            if scaled.abs() > max_exp {
                return Err(Error::ExponentOverflow {
                    exponent: scaled.as_f64(),
                });
            }
            Ok(scaled.exp())
        })
        .collect();
    let mut samples = Vec::with_capacity(n_walkers);
    for v in values {
        samples.push(v?);
    }
    let (mean, _) = stats::mean_ci(&samples)?;
    let sd = stats::sample_variance(&samples).sqrt();
    Ok(FkEstimate {
        estimate: mean.as_f64(),
        std_error: (sd / T::from_index(n_walkers).sqrt()).as_f64(),
    })
}

/// Output of the log-space splitting solve: the final `log U` field and the
/// trajectory minimum of `log U`.
#[derive(Debug, Clone)]
pub struct LogColehopfRun<T> {
    pub log_final: Field<T>,
    pub min_log: T,
}

/// Log-space variant of the splitting solve for small `ε`, where the raw
/// values of `U` overrun f64 range: the state is `g = log U`, the kick is
/// exact in log space, and the heat sub-step is a log-sum-exp convolution
/// with a sampled wrapped-Gaussian kernel.
///
/// The kernel sampling needs `√(ε·dt) ≥ 0.8 Δx`; coarser time grids (or
/// finer space grids) are rejected so the per-step kernel never degenerates
/// below grid resolution.
pub fn colehopf_solve_log<T: Real>(
    cfg: &ViscousConfig<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
) -> Result<LogColehopfRun<T>> {
    if path.grid() != cfg.grid {
        return Err(Error::GridMismatch);
    }
    cfg.check_resolves(spec)?;
    let m = cfg.grid_points;
    let dx = T::cast(2.0) * T::PI() / T::from_index(m);
    let sigma = (cfg.epsilon * cfg.grid.dt()).sqrt();
    if sigma < T::cast(0.8) * dx {
        return Err(Error::Config(format!(
            "log-space heat kernel unresolved: sqrt(eps*dt) = {:.3e} < 0.8*dx = {:.3e}; \
             use fewer grid points or a coarser time grid",
            sigma.as_f64(),
            (T::cast(0.8) * dx).as_f64()
        )));
    }
    // wrapped-Gaussian kernel truncated where its mass is ~e^{-32}
    let support = (T::cast(8.0) * sigma / dx).as_f64().ceil() as usize;
    let weights: Vec<T> = (0..=2 * support)
        .map(|i| {
            let offset = T::from_index(i) - T::from_index(support);
            let z = offset * dx / sigma;
            (-z * z / T::cast(2.0)).exp()
        })
        .collect();
    let total = stats::pairwise_sum(&weights);
    let log_w: Vec<T> = weights.iter().map(|&w| (w / total).ln()).collect();

    let tables = ModeTables::new(spec, m);
    let mut g = vec![T::zero(); m];
    let mut next = vec![T::zero(); m];
    let mut dz = vec![T::zero(); m];
    let mut min_log = T::zero();
    for k in 0..cfg.grid.steps() {
        tables.delta_zeta_into(spec, path, k, &mut dz);
        for (gv, &d) in g.iter_mut().zip(&dz) {
            *gv -= d / cfg.epsilon;
        }
        for j in 0..m {
            let mut peak = -T::infinity();
            for (i, _) in log_w.iter().enumerate() {
                let src = (j + m + i - support) % m;
                peak = peak.max(log_w[i] + g[src]);
            }
            let mut acc = T::zero();
            for (i, &lw) in log_w.iter().enumerate() {
                let src = (j + m + i - support) % m;
                acc += (lw + g[src] - peak).exp();
            }
            next[j] = peak + acc.ln();
        }
        std::mem::swap(&mut g, &mut next);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
        min_log = min_log.min(g.iter().fold(T::infinity(), |a, &v| a.min(v)));
    }
    Ok(LogColehopfRun {
        log_final: Field::from_values(g),
        min_log,
    })
}

/// Velocity recovery straight from `log U`:
/// `u_j = −ε (g_{j+1} − g_{j−1}) / (2Δx)` — identical stencil to
/// [`recover_u`] without materializing `U`.
pub fn recover_u_from_log<T: Real>(log_field: &Field<T>, epsilon: T) -> Field<T> {
    let m = log_field.len();
    let dx = T::cast(2.0) * T::PI() / T::from_index(m);
    let g = log_field.values();
    let mut out = vec![T::zero(); m];
    for j in 0..m {
        let jm = if j == 0 { m - 1 } else { j - 1 };
        let jp = if j == m - 1 { 0 } else { j + 1 };
        out[j] = -epsilon * (g[jp] - g[jm]) / (T::cast(2.0) * dx);
    }
    Field::from_values(out)
}

/// Pathwise lower bound on the splitting solution over the whole horizon:
/// `exp{−(1/ε) Σ_n |a_n| (1 + ε n² T)(S^{1n}(T) + S^{2n}(T))}` with the
/// discrete-grid suprema `S^{jn}` up to `t_index`.
pub fn lemma6_lower_bound<T: Real>(
    spec: &Spectrum<T>,
    path: &ForcingPath<T>,
    cfg: &ViscousConfig<T>,
    t_index: usize,
) -> Result<T> {
    if spec.n_max() != path.n_modes() {
        return Err(Error::ModeCountMismatch {
            spec: spec.n_max(),
            path: path.n_modes(),
        });
    }
    let t_total = path.grid().t(t_index);
    let mut sum = T::zero();
    for (i, &a) in spec.coeffs().iter().enumerate() {
        let n2 = T::from_index((i + 1) * (i + 1));
        let s1 = path.brownian_sup(1, i + 1, t_index)?;
        let s2 = path.brownian_sup(2, i + 1, t_index)?;
        sum += a.abs() * (T::one() + cfg.epsilon * n2 * t_total) * (s1 + s2);
    }
    Ok((-sum / cfg.epsilon).exp())
}
