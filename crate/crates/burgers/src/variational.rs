//! Inviscid route: discrete least-action minimization over trajectories with
//! a fixed right endpoint and a free left endpoint, validated through the
//! first-order optimality residual, plus the pathwise sup bound built from
//! increment range-suprema over a unit look-back window.
//!
//! Stochastic integrals along the path use left-point evaluation on the
//! stored increment grid; the optimality residual test checks that this
//! convention is internally consistent.

use crate::error::{Error, Result};
use crate::forcing::{ForcingPath, TimeGrid};
use crate::scalar::Real;
use crate::spectrum::Spectrum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Discretized trajectory `ξ_0..ξ_K` (unwrapped angles) with `ξ_K` pinned to
/// the evaluation point.
#[derive(Debug, Clone)]
pub struct MinimizingPath<T> {
    xi: Vec<T>,
    grid: TimeGrid<T>,
}

impl<T: Real> MinimizingPath<T> {
    pub fn new(xi: Vec<T>, grid: TimeGrid<T>) -> Result<Self> {
        if xi.len() != grid.steps() + 1 {
            return Err(Error::GridMismatch);
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        Ok(Self { xi, grid })
    }

    /// Constant trajectory pinned at `x`.
    pub fn constant(x: T, grid: TimeGrid<T>) -> Self {
        Self {
            xi: vec![x; grid.steps() + 1],
            grid,
        }
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.xi
    }

    /// Fixed right endpoint `ξ_K`.
    pub fn endpoint(&self) -> T {
        *self.xi.last().unwrap()
    }
}

fn check_compatible<T: Real>(
    xi: &MinimizingPath<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
) -> Result<()> {
    if xi.grid != path.grid() {
        return Err(Error::GridMismatch);
    }
    if spec.n_max() != path.n_modes() {
        return Err(Error::ModeCountMismatch {
            spec: spec.n_max(),
            path: path.n_modes(),
        });
    }
    Ok(())
}

/// Discrete action
/// `Σ (ξ_{k+1}−ξ_k)²/(2dt) + Σ_n a_n Σ_k [cos(nξ_k) d1 + sin(nξ_k) d2]`.
pub fn action<T: Real>(
    xi: &MinimizingPath<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
) -> Result<T> {
    check_compatible(xi, path, spec)?;
    let k_steps = xi.grid.steps();
    let dt = xi.grid.dt();
    let mut kinetic = T::zero();
    for k in 0..k_steps {
        let dxi = xi.xi[k + 1] - xi.xi[k];
        kinetic += dxi * dxi;
    }
    kinetic = kinetic / (T::cast(2.0) * dt);
    let (d1, d2) = (path.increments_1(), path.increments_2());
    let mut potential = T::zero();
    for (i, &a) in spec.coeffs().iter().enumerate() {
        let nf = T::from_index(i + 1);
        let row1 = &d1[i * k_steps..][..k_steps];
        let row2 = &d2[i * k_steps..][..k_steps];
        let mut acc = T::zero();
        for k in 0..k_steps {
            let arg = nf * xi.xi[k];
            acc += arg.cos() * row1[k] + arg.sin() * row2[k];
        }
        potential += a * acc;
    }
    Ok(kinetic + potential)
}

/// Gradient of the discrete action with respect to `ξ_0..ξ_{K−1}`
/// (the endpoint is fixed).
fn action_gradient<T: Real>(
    xi: &[T],
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
    dt: T,
    grad: &mut [T],
) {
    let k_steps = xi.len() - 1;
    debug_assert_eq!(grad.len(), k_steps);
    for m in 0..k_steps {
        let forward = (xi[m + 1] - xi[m]) / dt;
        let backward = if m == 0 {
            T::zero()
        } else {
            (xi[m] - xi[m - 1]) / dt
        };
        grad[m] = backward - forward;
    }
    let (d1, d2) = (path.increments_1(), path.increments_2());
    for (i, &a) in spec.coeffs().iter().enumerate() {
        let nf = T::from_index(i + 1);
        let na = nf * a;
        let row1 = &d1[i * k_steps..][..k_steps];
        let row2 = &d2[i * k_steps..][..k_steps];
        for m in 0..k_steps {
            let arg = nf * xi[m];
            grad[m] += na * (-arg.sin() * row1[m] + arg.cos() * row2[m]);
        }
    }
}

/// Prefactored tridiagonal solve for the kinetic-energy Hessian
/// (diag `[1, 2, .., 2]/dt`, off-diagonals `−1/dt`), the preconditioner that
/// makes descent iterations resolution-independent.
struct KineticFactor<T> {
    c_prime: Vec<T>,
    denom: Vec<T>,
    off: T,
}

impl<T: Real> KineticFactor<T> {
    fn new(k_vars: usize, dt: T) -> Self {
        let off = -T::one() / dt;
        let mut c_prime = vec![T::zero(); k_vars];
        let mut denom = vec![T::zero(); k_vars];
        let diag =
            |i: usize| if i == 0 { T::one() / dt } else { T::cast(2.0) / dt };
        denom[0] = diag(0);
        c_prime[0] = off / denom[0];
        for i in 1..k_vars {
            denom[i] = diag(i) - off * c_prime[i - 1];
            c_prime[i] = off / denom[i];
        }
        Self {
            c_prime,
            denom,
            off,
        }
    }

    fn solve(&self, rhs: &[T], out: &mut [T]) {
        let n = rhs.len();
        out[0] = rhs[0] / self.denom[0];
        for i in 1..n {
            out[i] = (rhs[i] - self.off * out[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            out[i] = out[i] - self.c_prime[i] * out[i + 1];
        }
    }
}

/// Max-norm gradient tolerance for convergence.
pub const GRAD_TOL: f64 = 1e-8;
/// Iteration budget per start.
pub const MAX_ITER: usize = 10_000;
const ARMIJO_C1: f64 = 1e-4;

struct Descent<T> {
    xi: Vec<T>,
    action: T,
    grad_norm: T,
    converged: bool,
}

fn descend<T: Real>(
    start: Vec<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
    grid: TimeGrid<T>,
) -> Descent<T> {
    let k_vars = grid.steps();
    let dt = grid.dt();
    let factor = KineticFactor::new(k_vars, dt);
    let tol = T::cast(GRAD_TOL);
    let mut xi = start;
    let mut grad = vec![T::zero(); k_vars];
    let mut dir = vec![T::zero(); k_vars];
    let mut trial = xi.clone();
    let eval = |v: &Vec<T>| {
        action(
            &MinimizingPath {
                xi: v.clone(),
                grid,
            },
            path,
            spec,
        )
        .expect("grids checked by caller")
    };
    let mut a_cur = eval(&xi);
    let mut grad_norm = T::infinity();
    for _ in 0..MAX_ITER {
        action_gradient(&xi, path, spec, dt, &mut grad);
        grad_norm = grad.iter().fold(T::zero(), |m, &g| m.max(g.abs()));
        if grad_norm <= tol {
            return Descent {
                xi,
                action: a_cur,
                grad_norm,
                converged: true,
            };
        }
        factor.solve(&grad, &mut dir);
        let slope: T = grad.iter().zip(&dir).map(|(&g, &d)| g * d).sum();
        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..60 {
            for m in 0..k_vars {
                trial[m] = xi[m] - alpha * dir[m];
            }
            let a_trial = eval(&trial);
            if a_trial <= a_cur - T::cast(ARMIJO_C1) * alpha * slope {
                std::mem::swap(&mut xi, &mut trial);
                a_cur = a_trial;
                accepted = true;
                break;
            }
            alpha = alpha * T::cast(0.5);
        }
        if !accepted {
            break;
        }
    }
    Descent {
        xi,
        action: a_cur,
        grad_norm,
        converged: false,
    }
}

/// Multi-start minimization of the discrete action over trajectories ending
/// at `x`. Start 0 is the constant path; the others add a uniform offset in
/// `[−π, π)` and a small smooth perturbation vanishing at the endpoint.
/// Deterministic in `(opt_seed, restarts)`; ties broken by start index.
pub fn minimize_action<T: Real>(
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
    x: T,
    restarts: usize,
    opt_seed: u64,
) -> Result<(MinimizingPath<T>, T)> {
    if restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    if spec.n_max() != path.n_modes() {
        return Err(Error::ModeCountMismatch {
            spec: spec.n_max(),
            path: path.n_modes(),
        });
    }
    let grid = path.grid();
    let k_steps = grid.steps();
    let mut best: Option<Descent<T>> = None;
    let mut best_any: Option<Descent<T>> = None;
    for r in 0..restarts {
        let start: Vec<T> = if r == 0 {
            vec![x; k_steps + 1]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opt_seed);
            rng.set_stream(r as u64);
            let offset = T::cast(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
            let amps: Vec<T> = (1..=3)
                .map(|j| T::cast(0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal)) / T::from_index(j))
                .collect();
            (0..=k_steps)
                .map(|k| {
                    let s = T::from_index(k) / T::from_index(k_steps);
                    let mut v = x + offset;
                    for (j, &amp) in amps.iter().enumerate() {
                        v += amp * (T::from_index(j + 1) * T::PI() * s).sin();
                    }
                    // endpoint stays exactly x
                    if k == k_steps {
                        x
                    } else {
                        v
                    }
                })
                .collect()
        };
        let result = descend(start, path, spec, grid);
        let better = |incumbent: &Option<Descent<T>>, cand: &Descent<T>| {
            incumbent
                .as_ref()
                .map(|b| cand.action < b.action)
                .unwrap_or(true)
        };
        if better(&best_any, &result) {
            best_any = Some(Descent {
                xi: result.xi.clone(),
                ..result
            });
        }
        if result.converged && better(&best, &result) {
            best = Some(result);
        }
    }
    match best {
        Some(d) => Ok((
            MinimizingPath {
                xi: d.xi,
                grid,
            },
            d.action,
        )),
        None => {
            let b = best_any.expect("at least one start ran");
            Err(Error::NoConvergence {
                max_iter: MAX_ITER,
                best_action: b.action.as_f64(),
                grad_norm: b.grad_norm.as_f64(),
                best: b.xi.iter().map(|v| v.as_f64()).collect(),
            })
        }
    }
}

/// Endpoint velocity of the minimizer, `(ξ_K − ξ_{K−1})/dt`: the inviscid
/// solution value at `(t, x)`.
pub fn inviscid_u<T: Real>(xi: &MinimizingPath<T>) -> Result<T> {
    let k_steps = xi.grid.steps();
    if k_steps == 0 {
        return Err(Error::EmptyGrid);
    }
    Ok((xi.xi[k_steps] - xi.xi[k_steps - 1]) / xi.grid.dt())
}

/// Max-norm first-order optimality residual
/// `r_k = (ξ_{k+1}−ξ_k)/dt + Σ_n n a_n Σ_{i≤k} [sin(nξ_i) d1 − cos(nξ_i) d2]`.
///
/// With the free left endpoint the `k = 0` equation fixes the initial
/// velocity, so every `r_k` vanishes at an exact critical point; `r_k` is
/// minus the partial sum of the action gradient.
pub fn euler_lagrange_residual<T: Real>(
    xi: &MinimizingPath<T>,
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
) -> Result<T> {
    check_compatible(xi, path, spec)?;
    let k_steps = xi.grid.steps();
    let dt = xi.grid.dt();
    let (d1, d2) = (path.increments_1(), path.increments_2());
    let mut cum = T::zero();
    let mut worst = T::zero();
    for k in 0..k_steps {
        for (i, &a) in spec.coeffs().iter().enumerate() {
            let nf = T::from_index(i + 1);
            let arg = nf * xi.xi[k];
            cum += nf
                * a
                * (arg.sin() * d1[i * k_steps + k] - arg.cos() * d2[i * k_steps + k]);
        }
        let r = (xi.xi[k + 1] - xi.xi[k]) / dt + cum;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Increment range constant over `[s, t]`:
/// `C(s,t) = Σ n² |a_n| (range β^{1n} + range β^{2n})` with discrete-grid
/// range suprema.
pub fn theorem23_c<T: Real>(
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
    s: T,
    t: T,
) -> Result<T> {
    if spec.n_max() != path.n_modes() {
        return Err(Error::ModeCountMismatch {
            spec: spec.n_max(),
            path: path.n_modes(),
        });
    }
    if s > t {
        return Err(Error::NegativeTime {
            s: s.as_f64(),
            t: t.as_f64(),
        });
    }
    let k0 = path.grid().index_of(s)?;
    let k1 = path.grid().index_of(t)?;
    let mut c = T::zero();
    for (i, &a) in spec.coeffs().iter().enumerate() {
        let n2 = T::from_index((i + 1) * (i + 1));
        c += n2 * a.abs() * (path.range_sup(1, i + 1, k0, k1)? + path.range_sup(2, i + 1, k0, k1)?);
    }
    Ok(c)
}

/// Pathwise sup bound `10 · exp(2 C(t−1, t))` on `sup_x |u(t, ·)|` of the
/// inviscid solution; needs the unit look-back window `t ≥ 1`.
pub fn theorem23_pathwise_bound<T: Real>(
    path: &ForcingPath<T>,
    spec: &Spectrum<T>,
    t: T,
) -> Result<T> {
    if t < T::one() {
        return Err(Error::Config(format!(
            "pathwise sup bound needs t >= 1 for its look-back window (got {})",
            t.as_f64()
        )));
    }
    let c = theorem23_c(path, spec, t - T::one(), t)?;
    Ok(T::cast(10.0) * (T::cast(2.0) * c).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::sample_forcing;

    fn spec1() -> Spectrum<f64> {
        Spectrum::new(vec![1.0]).unwrap()
    }

    fn zero_path(grid: TimeGrid<f64>, n_modes: usize) -> ForcingPath<f64> {
        let k = grid.steps();
        ForcingPath::from_increments(grid, n_modes, 0, vec![0.0; n_modes * k], vec![0.0; n_modes * k])
    }

    #[test]
    fn action_examples() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let path = zero_path(grid, 1);
        let s = spec1();
        // constant path, zero increments
        let c = MinimizingPath::constant(0.7, grid);
        assert_eq!(action(&c, &path, &s).unwrap(), 0.0);
        // linear path of slope v: kinetic term v²t/2 only
        let v = 1.3;
        let lin = MinimizingPath::new(
            (0..=4).map(|k| v * grid.t(k)).collect(),
            grid,
        )
        .unwrap();
        assert!((action(&lin, &path, &s).unwrap() - v * v / 2.0).abs() < 1e-14);
        // single mode, one step, constant path at x
        let g1 = TimeGrid::new(1.0, 1).unwrap();
        let p1 = ForcingPath::from_increments(g1, 1, 0, vec![0.2], vec![-0.4]);
        let x = 0.9f64;
        let cst = MinimizingPath::constant(x, g1);
        let expect = x.cos() * 0.2 + x.sin() * (-0.4);
        assert!((action(&cst, &p1, &s).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn action_rejects_mismatched_grids() {
        let path = zero_path(TimeGrid::new(1.0, 4).unwrap(), 1);
        let xi = MinimizingPath::constant(0.0, TimeGrid::new(1.0, 5).unwrap());
        assert!(matches!(
            action(&xi, &path, &spec1()),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let s = Spectrum::new(vec![0.5, 0.25]).unwrap();
        let path = sample_forcing(&s, grid, 13);
        let xi: Vec<f64> = (0..=8).map(|k| 0.3 * (k as f64).sin() + 1.0).collect();
        let mut grad = vec![0.0; 8];
        action_gradient(&xi, &path, &s, grid.dt(), &mut grad);
        let h = 1e-7;
        for m in 0..8 {
            let mut plus = xi.clone();
            plus[m] += h;
            let mut minus = xi.clone();
            minus[m] -= h;
            let ap = action(&MinimizingPath::new(plus, grid).unwrap(), &path, &s).unwrap();
            let am = action(&MinimizingPath::new(minus, grid).unwrap(), &path, &s).unwrap();
            let fd = (ap - am) / (2.0 * h);
            assert!((grad[m] - fd).abs() < 1e-5, "m={m}: {} vs {fd}", grad[m]);
        }
    }

    #[test]
    fn zero_forcing_minimizer_is_constant_path_exactly() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let path = zero_path(grid, 1);
        let x = 2.2;
        let (xi, a) = minimize_action(&path, &spec1(), x, 3, 5).unwrap();
        assert_eq!(a, 0.0);
        assert!(xi.values().iter().all(|&v| (v - x).abs() < 1e-12));
        assert_eq!(inviscid_u(&xi).unwrap().abs(), 0.0);
        assert_eq!(
            euler_lagrange_residual(&xi, &path, &spec1()).unwrap(),
            0.0
        );
    }

    #[test]
    fn minimizer_beats_constant_path() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let s = Spectrum::new(vec![0.5]).unwrap();
        let path = sample_forcing(&s, grid, 77);
        let x = 1.0;
        let (xi, a) = minimize_action(&path, &s, x, 4, 9).unwrap();
        let constant = action(&MinimizingPath::constant(x, grid), &path, &s).unwrap();
        assert!(a <= constant + 1e-12, "{a} vs constant {constant}");
        assert_eq!(xi.endpoint(), x);
    }

    #[test]
    fn converged_minimizer_has_small_residual_and_perturbation_grows_it() {
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let s = Spectrum::new(vec![0.5]).unwrap();
        let path = sample_forcing(&s, grid, 3);
        let (xi, _) = minimize_action(&path, &s, 0.5, 4, 1).unwrap();
        let res = euler_lagrange_residual(&xi, &path, &s).unwrap();
        assert!(res < 1e-3, "residual {res}");
        let mut bent = xi.values().to_vec();
        let mid = bent.len() / 2;
        bent[mid] += 0.05;
        let res_bent = euler_lagrange_residual(
            &MinimizingPath::new(bent, grid).unwrap(),
            &path,
            &s,
        )
        .unwrap();
        assert!(res_bent > res * 10.0, "{res_bent} vs {res}");
    }

    #[test]
    fn minimization_is_deterministic() {
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let s = Spectrum::new(vec![0.5]).unwrap();
        let path = sample_forcing(&s, grid, 21);
        let (a1, v1) = minimize_action(&path, &s, 0.3, 5, 42).unwrap();
        let (a2, v2) = minimize_action(&path, &s, 0.3, 5, 42).unwrap();
        assert_eq!(a1.values(), a2.values());
        assert_eq!(v1, v2);
    }

    #[test]
    fn action_shift_covariance() {
        // adding 2π to x and every ξ_k leaves the action unchanged
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let s = Spectrum::new(vec![0.5, 0.25]).unwrap();
        let path = sample_forcing(&s, grid, 8);
        let xi: Vec<f64> = (0..=50).map(|k| 0.5 * (k as f64 / 50.0) + 0.2).collect();
        let tau = 2.0 * std::f64::consts::PI;
        let shifted: Vec<f64> = xi.iter().map(|v| v + tau).collect();
        let a0 = action(&MinimizingPath::new(xi, grid).unwrap(), &path, &s).unwrap();
        let a1 = action(&MinimizingPath::new(shifted, grid).unwrap(), &path, &s).unwrap();
        assert!((a0 - a1).abs() < 1e-11);
    }

    #[test]
    fn inviscid_u_reads_endpoint_slope() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let v = -0.8f64;
        let lin = MinimizingPath::new((0..=10).map(|k| v * grid.t(k)).collect(), grid).unwrap();
        assert!((inviscid_u(&lin).unwrap() - v).abs() < 1e-13);
        let c = MinimizingPath::constant(1.0, grid);
        assert_eq!(inviscid_u(&c).unwrap(), 0.0);
    }

    #[test]
    fn endpoint_velocity_consistent_with_second_order_stencil() {
        // compare (ξ_K−ξ_{K−1})/dt against (3ξ_K−4ξ_{K−1}+ξ_{K−2})/(2dt)
        // on a converged minimizer under dt refinement
        let s = Spectrum::new(vec![0.3f64]).unwrap();
        let fine = sample_forcing(&s, TimeGrid::new(1.0, 800).unwrap(), 4);
        let mut gaps = Vec::new();
        for steps in [200usize, 400] {
            let path = fine.coarsen(800 / steps).unwrap();
            let (xi, _) = minimize_action(&path, &s, 0.0, 4, 2).unwrap();
            let k = steps;
            let dt = xi.grid().dt();
            let v1 = inviscid_u(&xi).unwrap();
            let vals = xi.values();
            let v2 = (3.0 * vals[k] - 4.0 * vals[k - 1] + vals[k - 2]) / (2.0 * dt);
            gaps.push((v1 - v2).abs());
        }
        assert!(
            gaps[1] < gaps[0] + 1e-3,
            "one-sided estimators diverge under refinement: {gaps:?}"
        );
    }

    #[test]
    fn theorem23_c_examples() {
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let s = spec1();
        let zero = zero_path(grid, 1);
        assert_eq!(theorem23_c(&zero, &s, 0.0, 2.0).unwrap(), 0.0);
        assert_eq!(theorem23_pathwise_bound(&zero, &s, 2.0).unwrap(), 10.0);
        // monotone β: range equals net increment per component
        let p = ForcingPath::from_increments(
            grid,
            1,
            0,
            vec![0.1; 8],
            vec![0.05; 8],
        );
        let c_full = theorem23_c(&p, &s, 0.0, 2.0).unwrap();
        assert!((c_full - (0.8 + 0.4)).abs() < 1e-12);
        // widening the window can only increase C
        let c_half = theorem23_c(&p, &s, 1.0, 2.0).unwrap();
        assert!(c_half <= c_full);
        assert!(theorem23_pathwise_bound(&p, &s, 0.5).is_err());
    }
}
