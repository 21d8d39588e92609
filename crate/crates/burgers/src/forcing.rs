//! One realization of the driving Brownian motions on a fixed time grid,
//! plus evaluation of the forcing field, its space derivative and path
//! suprema from the stored increments.
//!
//! Increment streams come from a counter-based generator keyed by
//! `(seed, component, mode)`, so a path is reproducible bit-for-bit from
//! `(seed, grid, n_modes)` regardless of sampling order or parallelism.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectrum::Spectrum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};

/// Uniform grid `t_k = T·k/K` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::EmptyGrid);
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        self.horizon / T::from_index(self.steps)
    }

    /// `t_k`; exact at both endpoints.
    pub fn t(&self, k: usize) -> T {
        self.horizon * T::from_index(k) / T::from_index(self.steps)
    }

    /// Nearest grid index to time `s`, or an error when `s` lies outside the grid.
    pub fn index_of(&self, s: T) -> Result<usize> {
        if s < T::zero() || s > self.horizon * (T::one() + T::cast(1e-9)) {
            return Err(Error::StepOutOfRange {
                k: (s / self.dt()).as_f64().round() as usize,
                max: self.steps,
            });
        }
        let k = (s / self.dt()).as_f64().round() as usize;
        Ok(k.min(self.steps))
    }
}

fn stream_id(j: usize, n: usize) -> u64 {
    ((j as u64) << 32) | n as u64
}

/// One realization of all Brownian increments on a time grid.
///
/// `d{1,2}[n][k]` holds the increment of `β^{jn}` over `[t_k, t_{k+1})`;
/// prefix sums give the path values at grid times.
#[derive(Debug, Clone)]
pub struct ForcingPath<T> {
    grid: TimeGrid<T>,
    n_modes: usize,
    seed: u64,
    d1: Vec<T>,
    d2: Vec<T>,
    b1: Vec<T>,
    b2: Vec<T>,
}

/// Samples every increment stream for `spec.n_max()` modes on `grid`.
/// Deterministic in `(seed, grid, n_modes)`.
pub fn sample_forcing<T: Real>(
    spec: &Spectrum<T>,
    grid: TimeGrid<T>,
    seed: u64,
) -> ForcingPath<T> {
    let n_modes = spec.n_max();
    let k_steps = grid.steps();
    let sqrt_dt = grid.dt().sqrt();
    let draw = |j: usize, n: usize| -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(j, n));
        (0..k_steps).map(|_| T::std_normal(&mut rng) * sqrt_dt).collect()
    };
    let mut d1 = Vec::with_capacity(n_modes * k_steps);
    let mut d2 = Vec::with_capacity(n_modes * k_steps);
    for n in 1..=n_modes {
        d1.extend(draw(1, n));
        d2.extend(draw(2, n));
    }
    ForcingPath::from_increments(grid, n_modes, seed, d1, d2)
}

impl<T: Real> ForcingPath<T> {
    /// Assembles a path from raw increments (used by sampling, coarsening
    /// and dump reload); precomputes the prefix-sum path values.
    pub fn from_increments(
        grid: TimeGrid<T>,
        n_modes: usize,
        seed: u64,
        d1: Vec<T>,
        d2: Vec<T>,
    ) -> Self {
        let k_steps = grid.steps();
        assert_eq!(d1.len(), n_modes * k_steps);
        assert_eq!(d2.len(), n_modes * k_steps);
        let prefix = |d: &[T]| {
            let mut b = Vec::with_capacity(n_modes * (k_steps + 1));
            for n in 0..n_modes {
                let mut acc = T::zero();
                b.push(acc);
                for k in 0..k_steps {
                    acc += d[n * k_steps + k];
                    b.push(acc);
                }
            }
            b
        };
        let b1 = prefix(&d1);
        let b2 = prefix(&d2);
        Self {
            grid,
            n_modes,
            seed,
            d1,
            d2,
            b1,
            b2,
        }
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_stream(&self, j: usize, n: usize) -> Result<()> {
        if !(1..=2).contains(&j) || n == 0 || n > self.n_modes {
            return Err(Error::UnknownStream { j, n });
        }
        Ok(())
    }

    fn check_mode_count(&self, spec: &Spectrum<T>) -> Result<()> {
        if spec.n_max() != self.n_modes {
            return Err(Error::ModeCountMismatch {
                spec: spec.n_max(),
                path: self.n_modes,
            });
        }
        Ok(())
    }

    fn check_node(&self, k: usize) -> Result<()> {
        if k > self.grid.steps() {
            return Err(Error::StepOutOfRange {
                k,
                max: self.grid.steps(),
            });
        }
        Ok(())
    }

    /// Increment of `β^{jn}` over step `k` (`j ∈ {1,2}`, `n` 1-based).
    pub fn increment(&self, j: usize, n: usize, k: usize) -> Result<T> {
        self.check_stream(j, n)?;
        if k >= self.grid.steps() {
            return Err(Error::StepOutOfRange {
                k,
                max: self.grid.steps() - 1,
            });
        }
        let d = if j == 1 { &self.d1 } else { &self.d2 };
        Ok(d[(n - 1) * self.grid.steps() + k])
    }

    /// Raw increment slices for step-level consumers; `[n][k]` row-major.
    pub(crate) fn increments_1(&self) -> &[T] {
        &self.d1
    }

    pub(crate) fn increments_2(&self) -> &[T] {
        &self.d2
    }

    /// `β^{jn}(t_k)` from the stored prefix sums.
    pub fn beta(&self, j: usize, n: usize, k: usize) -> Result<T> {
        self.check_stream(j, n)?;
        self.check_node(k)?;
        let b = if j == 1 { &self.b1 } else { &self.b2 };
        Ok(b[(n - 1) * (self.grid.steps() + 1) + k])
    }

    /// Forcing field `ζ(t_k, x) = Σ a_n (cos(nx) β^{1n} + sin(nx) β^{2n})`.
    pub fn zeta(&self, spec: &Spectrum<T>, k: usize, x: T) -> Result<T> {
        self.check_mode_count(spec)?;
        self.check_node(k)?;
        let stride = self.grid.steps() + 1;
        let mut acc = T::zero();
        for (i, &a) in spec.coeffs().iter().enumerate() {
            let nx = T::from_index(i + 1) * x;
            acc += a * (nx.cos() * self.b1[i * stride + k] + nx.sin() * self.b2[i * stride + k]);
        }
        Ok(acc)
    }

    /// Space derivative `ζ_x(t_k, x) = Σ n a_n (−sin(nx) β^{1n} + cos(nx) β^{2n})`.
    pub fn zeta_x(&self, spec: &Spectrum<T>, k: usize, x: T) -> Result<T> {
        self.check_mode_count(spec)?;
        self.check_node(k)?;
        let stride = self.grid.steps() + 1;
        let mut acc = T::zero();
        for (i, &a) in spec.coeffs().iter().enumerate() {
            let nf = T::from_index(i + 1);
            let nx = nf * x;
            acc += nf
                * a
                * (-nx.sin() * self.b1[i * stride + k] + nx.cos() * self.b2[i * stride + k]);
        }
        Ok(acc)
    }

    /// Discrete-grid running supremum `max_{i ≤ k} |β^{jn}(t_i)|`.
    /// Understates the continuous supremum; one-sided audits use it as-is.
    pub fn brownian_sup(&self, j: usize, n: usize, k: usize) -> Result<T> {
        self.check_stream(j, n)?;
        self.check_node(k)?;
        let b = if j == 1 { &self.b1 } else { &self.b2 };
        let row = &b[(n - 1) * (self.grid.steps() + 1)..][..k + 1];
        Ok(row.iter().fold(T::zero(), |m, &v| m.max(v.abs())))
    }

    /// Range supremum `max − min` of `β^{jn}` over grid nodes `k0..=k1`,
    /// i.e. the largest increment magnitude over any subinterval.
    pub fn range_sup(&self, j: usize, n: usize, k0: usize, k1: usize) -> Result<T> {
        self.check_stream(j, n)?;
        self.check_node(k1)?;
        if k0 > k1 {
            return Err(Error::StepOutOfRange {
                k: k0,
                max: k1,
            });
        }
        let b = if j == 1 { &self.b1 } else { &self.b2 };
        let row = &b[(n - 1) * (self.grid.steps() + 1)..][k0..=k1];
        let (mut lo, mut hi) = (row[0], row[0]);
        for &v in row {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(hi - lo)
    }

    /// Sums consecutive groups of `factor` increments, producing the same
    /// Brownian path on a grid with `K/factor` steps. Used for refinement
    /// studies where coarse and fine runs must share a realization.
    pub fn coarsen(&self, factor: usize) -> Result<ForcingPath<T>> {
        let k_fine = self.grid.steps();
        if factor == 0 || k_fine % factor != 0 {
            return Err(Error::Config(format!(
                "coarsening factor {factor} does not divide {k_fine} steps"
            )));
        }
        let k_coarse = k_fine / factor;
        let grid = TimeGrid::new(self.grid.horizon(), k_coarse)?;
        let group = |d: &[T]| {
            let mut out = Vec::with_capacity(self.n_modes * k_coarse);
            for n in 0..self.n_modes {
                let row = &d[n * k_fine..][..k_fine];
                for c in 0..k_coarse {
                    out.push(row[c * factor..][..factor].iter().copied().sum());
                }
            }
            out
        };
        Ok(ForcingPath::from_increments(
            grid,
            self.n_modes,
            self.seed,
            group(&self.d1),
            group(&self.d2),
        ))
    }

    /// Binary dump: header `(seed, T, K, N)` then raw increments as
    /// little-endian 64-bit floats, `d1` rows first.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.grid.horizon().as_f64().to_le_bytes())?;
        w.write_all(&(self.grid.steps() as u64).to_le_bytes())?;
        w.write_all(&(self.n_modes as u64).to_le_bytes())?;
        for d in [&self.d1, &self.d2] {
            for &v in d.iter() {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`ForcingPath::write_to`].
    pub fn read_from<R: Read>(r: &mut R) -> Result<ForcingPath<T>> {
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let seed = read_u64(r)?;
        let horizon = f64::from_bits(read_u64(r)?);
        let steps = read_u64(r)? as usize;
        let n_modes = read_u64(r)? as usize;
        if !(horizon > 0.0) || steps == 0 || n_modes == 0 {
            return Err(Error::BadDump(format!(
                "header (T={horizon}, K={steps}, N={n_modes})"
            )));
        }
        let grid = TimeGrid::new(T::cast(horizon), steps)?;
        let read_block = |r: &mut R| -> Result<Vec<T>> {
            let mut out = Vec::with_capacity(n_modes * steps);
            let mut buf = [0u8; 8];
            for _ in 0..n_modes * steps {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::BadDump("truncated payload".into()))?;
                let v = f64::from_le_bytes(buf);
                if !v.is_finite() {
                    return Err(Error::BadDump("non-finite increment".into()));
                }
                out.push(T::cast(v));
            }
            Ok(out)
        };
        let d1 = read_block(r)?;
        let d2 = read_block(r)?;
        Ok(ForcingPath::from_increments(grid, n_modes, seed, d1, d2))
    }
}

/// Precomputed `cos(n x_j)` / `sin(n x_j)` tables on the `M`-point periodic
/// grid, shared by the grid solvers to evaluate per-step forcing slices.
pub struct ModeTables<T> {
    cos: Vec<T>,
    sin: Vec<T>,
    n_modes: usize,
    m: usize,
}

impl<T: Real> ModeTables<T> {
    pub fn new(spec: &Spectrum<T>, m: usize) -> Self {
        let n_modes = spec.n_max();
        let mut cos = Vec::with_capacity(n_modes * m);
        let mut sin = Vec::with_capacity(n_modes * m);
        let tau = T::cast(2.0) * T::PI();
        for n in 1..=n_modes {
            for j in 0..m {
                let arg = tau * T::from_index(n) * T::from_index(j) / T::from_index(m);
                cos.push(arg.cos());
                sin.push(arg.sin());
            }
        }
        Self {
            cos,
            sin,
            n_modes,
            m,
        }
    }

    pub fn grid_points(&self) -> usize {
        self.m
    }

    /// Step-`k` forcing slice `δζ(x_j) = Σ a_n (cos(nx_j) d1 + sin(nx_j) d2)`
    /// accumulated into `out`.
    pub fn delta_zeta_into(
        &self,
        spec: &Spectrum<T>,
        path: &ForcingPath<T>,
        k: usize,
        out: &mut [T],
    ) {
        debug_assert_eq!(out.len(), self.m);
        debug_assert_eq!(spec.n_max(), self.n_modes);
        out.fill(T::zero());
        let k_steps = path.grid().steps();
        let (d1, d2) = (path.increments_1(), path.increments_2());
        for (i, &a) in spec.coeffs().iter().enumerate() {
            let w1 = a * d1[i * k_steps + k];
            let w2 = a * d2[i * k_steps + k];
            let (cos, sin) = (&self.cos[i * self.m..][..self.m], &self.sin[i * self.m..][..self.m]);
            for j in 0..self.m {
                out[j] += w1 * cos[j] + w2 * sin[j];
            }
        }
    }

    /// Step-`k` slice of the space derivative,
    /// `δζ_x(x_j) = Σ n a_n (−sin(nx_j) d1 + cos(nx_j) d2)`.
    pub fn delta_zeta_x_into(
        &self,
        spec: &Spectrum<T>,
        path: &ForcingPath<T>,
        k: usize,
        out: &mut [T],
    ) {
        debug_assert_eq!(out.len(), self.m);
        debug_assert_eq!(spec.n_max(), self.n_modes);
        out.fill(T::zero());
        let k_steps = path.grid().steps();
        let (d1, d2) = (path.increments_1(), path.increments_2());
        for (i, &a) in spec.coeffs().iter().enumerate() {
            let na = T::from_index(i + 1) * a;
            let w1 = na * d1[i * k_steps + k];
            let w2 = na * d2[i * k_steps + k];
            let (cos, sin) = (&self.cos[i * self.m..][..self.m], &self.sin[i * self.m..][..self.m]);
            for j in 0..self.m {
                out[j] += -w1 * sin[j] + w2 * cos[j];
            }
        }
    }
}
