//! Configuration-driven experiment runner: ensemble orchestration with
//! per-realization seeding, worker-count-independent reductions, and
//! JSON-lines / CSV / manifest emission.
//!
//! Determinism contract: per-realization seeds are pure functions of
//! `(master_seed, index)`, parallel maps collect in index order, and all
//! reductions run over those ordered vectors, so result payloads are
//! byte-identical for any worker count.

use crate::colehopf::{
    colehopf_solve, colehopf_solve_log, feynman_kac_u, lemma6_lower_bound, recover_u,
    recover_u_from_log,
};
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::forcing::{sample_forcing, ForcingPath, TimeGrid};
use crate::moments::{
    lemma3_bound, lemma4_bound, mc_moment, theorem11_bound,
    theorem23_moment_bound, BoundAudit, BoundName, MomentReport,
};
use crate::spectrum::Spectrum;
use crate::stats;
use crate::variational::{
    euler_lagrange_residual, inviscid_u, minimize_action, theorem23_pathwise_bound,
};
use crate::viscous::{viscous_solve, Field, FieldStats, ViscousConfig};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable overriding the config's output directory — the only
/// environment override the runner honors.
pub const OUTPUT_ENV: &str = "SBURG_OUTPUT";

/// splitmix64 step; the standard 64-bit mixer.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Per-realization seed: a pure function of `(master_seed, index)`.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

/// Runs `f` on a dedicated pool with the requested worker count.
pub fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run metadata written next to the result payloads. Wall time is the only
/// field that differs between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifact_version: String,
    pub experiment: ExperimentKind,
    pub wall_time_secs: f64,
    pub summary: Value,
}

struct ExperimentOutput {
    lines: Vec<String>,
    summary: Value,
    csv_rows: Vec<[String; 6]>,
    failure: Option<String>,
}

impl ExperimentOutput {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            summary: Value::Null,
            csv_rows: Vec::new(),
            failure: None,
        }
    }

    fn push<T: Serialize>(&mut self, record: &T) {
        self.lines
            .push(serde_json::to_string(record).expect("serializable record"));
    }
}

fn resolve_output(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var(OUTPUT_ENV) {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&cfg.output),
    }
}

fn grid_of(cfg: &ExperimentConfig) -> Result<TimeGrid<f64>> {
    TimeGrid::new(cfg.horizon, cfg.steps)
}

fn solver_config(cfg: &ExperimentConfig, epsilon: f64) -> Result<ViscousConfig<f64>> {
    ViscousConfig::new(epsilon, cfg.grid_points, grid_of(cfg)?)?
        .with_cfl_safety(cfg.cfl_safety)
}

/// Executes the configured experiment, writes `results.jsonl`,
/// `summary.csv` (when tabular) and `manifest.json` under the output
/// directory, and returns the manifest. Embedded acceptance checks
/// (bound audits, oracle agreements, covariance checks) fail the run.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    let spec = cfg.spectrum.build()?;
    let out = with_pool(cfg.workers, || dispatch(cfg, &spec))??;
    finish(cfg, out, start)
}

fn dispatch(cfg: &ExperimentConfig, spec: &Spectrum<f64>) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::MomentConvergence => moment_convergence(cfg, spec, &cfg.epsilon.list()),
        ExperimentKind::SolverCrosscheck => solver_crosscheck(cfg, spec),
        ExperimentKind::FkCrosscheck => fk_crosscheck(cfg, spec),
        ExperimentKind::VariationalCompare => variational_compare(cfg, spec),
        ExperimentKind::BoundAudit => bound_audit(cfg, spec),
        ExperimentKind::CovarianceCheck => covariance_check(cfg, spec),
    }
}

/// Sweep entry point: runs the moment experiment per viscosity in the
/// configured order and checks that the distance to the limiting value is
/// nonincreasing within twice the half-widths.
pub fn sweep(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::MomentConvergence {
        return Err(Error::Config(
            "sweep requires experiment = \"moment_convergence\"".into(),
        ));
    }
    let start = Instant::now();
    let spec = cfg.spectrum.build()?;
    let eps_list = cfg.epsilon.list();
    let mut out = with_pool(cfg.workers, || {
        moment_convergence(cfg, &spec, &eps_list)
    })??;

    // monotone approach of the order-2 estimate to its limit
    let reports: Vec<MomentReport> = out
        .lines
        .iter()
        .filter_map(|l| serde_json::from_str::<MomentReport>(l).ok())
        .filter(|r| r.order == 2)
        .collect();
    let mut prev: Option<&MomentReport> = None;
    let mut monotone = true;
    for r in &reports {
        if let Some(p) = prev {
            let slack = 2.0 * p.ci_halfwidth.max(r.ci_halfwidth);
            if (r.estimate - r.target).abs() > (p.estimate - p.target).abs() + slack {
                monotone = false;
            }
        }
        prev = Some(r);
    }
    if let Value::Object(map) = &mut out.summary {
        map.insert("sweep_monotone".into(), json!(monotone));
    }
    if !monotone {
        out.failure = Some("sweep: |estimate - target| increased beyond 2 CI".into());
    }
    finish(cfg, out, start)
}

/// Audit entry point: forces the bound-audit experiment on the given config.
pub fn audit(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let mut forced = cfg.clone();
    forced.experiment = ExperimentKind::BoundAudit;
    run(&forced)
}

fn finish(
    cfg: &ExperimentConfig,
    out: ExperimentOutput,
    start: Instant,
) -> Result<RunManifest> {
    let dir = resolve_output(cfg);
    fs::create_dir_all(&dir)?;
    let mut payload = out.lines.join("\n");
    if !payload.is_empty() {
        payload.push('\n');
    }
    fs::write(dir.join("results.jsonl"), payload)?;
    if !out.csv_rows.is_empty() {
        let mut csv = String::from("order,t,epsilon,estimate,ci,target\n");
        for row in &out.csv_rows {
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        fs::write(dir.join("summary.csv"), csv)?;
    }
    let manifest = RunManifest {
        config_hash: cfg.canonical_hash()?,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment,
        wall_time_secs: start.elapsed().as_secs_f64(),
        summary: out.summary,
    };
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(Error::from_json)?;
    f.write_all(b"\n")?;
    if let Some(reason) = out.failure {
        return Err(Error::AcceptanceFailed(reason));
    }
    Ok(manifest)
}

impl Error {
    fn from_json(e: serde_json::Error) -> Error {
        Error::Io(e.into())
    }
}

#[derive(Serialize)]
struct RealizationRecord {
    realization: usize,
    seed: u64,
    epsilon: f64,
    status: &'static str,
    max_abs_mean: f64,
    sup_abs: f64,
    stats: Option<FieldStats>,
}

/// Viscous ensemble at one viscosity. Unstable realizations are excluded and
/// counted; more than 1% exclusions fails the ensemble.
fn viscous_ensemble(
    cfg: &ExperimentConfig,
    spec: &Spectrum<f64>,
    epsilon: f64,
    records: &mut Vec<String>,
) -> Result<(Vec<Field<f64>>, Vec<f64>, f64)> {
    let solver_cfg = solver_config(cfg, epsilon)?;
    let runs: Vec<(u64, crate::error::Result<crate::viscous::ViscousRun<f64>>)> = (0..cfg
        .n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.master_seed, i as u64);
            let path = sample_forcing(spec, solver_cfg.grid, seed);
            (seed, viscous_solve(&solver_cfg, &path, spec))
        })
        .collect();
    let mut fields = Vec::new();
    let mut sups = Vec::new();
    let mut excluded = 0usize;
    let mut max_abs_mean = 0f64;
    for (i, (seed, r)) in runs.into_iter().enumerate() {
        match r {
            Ok(run) => {
                max_abs_mean = max_abs_mean.max(run.max_abs_mean);
                let rec = RealizationRecord {
                    realization: i,
                    seed,
                    epsilon,
                    status: "ok",
                    max_abs_mean: run.max_abs_mean,
                    sup_abs: run.sup_abs,
                    stats: Some(FieldStats::of(&run.final_field)),
                };
                records.push(serde_json::to_string(&rec).expect("record"));
                sups.push(run.sup_abs);
                fields.push(run.final_field);
            }
            Err(e) => {
                excluded += 1;
                let rec = json!({
                    "realization": i,
                    "seed": seed,
                    "epsilon": epsilon,
                    "status": "excluded",
                    "error": e.to_string(),
                });
                records.push(rec.to_string());
            }
        }
    }
    if excluded * 100 > cfg.n_realizations {
        return Err(Error::TooManyExclusions {
            excluded,
            total: cfg.n_realizations,
        });
    }
    Ok((fields, sups, max_abs_mean))
}

fn moment_convergence(
    cfg: &ExperimentConfig,
    spec: &Spectrum<f64>,
    eps_list: &[f64],
) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new();
    let mut per_eps = Vec::new();
    for &epsilon in eps_list {
        let (fields, _, max_abs_mean) =
            viscous_ensemble(cfg, spec, epsilon, &mut out.lines)?;
        let t = cfg.horizon;
        for &order in &cfg.orders {
            let report = mc_moment(&fields, order, t, epsilon, spec)?;
            out.csv_rows.push([
                order.to_string(),
                t.to_string(),
                epsilon.to_string(),
                report.estimate.to_string(),
                report.ci_halfwidth.to_string(),
                report.target.to_string(),
            ]);
            out.push(&report);
        }
        per_eps.push(json!({
            "epsilon": epsilon,
            "n_included": fields.len(),
            "max_abs_mean": max_abs_mean,
        }));
    }
    out.summary = json!({ "ensembles": per_eps });
    Ok(out)
}

#[derive(Serialize)]
struct CrosscheckRecord {
    realization: usize,
    seed: u64,
    epsilon: f64,
    l2_rel: f64,
    l2_rel_refined: Option<f64>,
    decreased: Option<bool>,
}

fn solver_crosscheck(cfg: &ExperimentConfig, spec: &Spectrum<f64>) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new();
    let epsilon = cfg.epsilon.first();
    let records: Vec<Result<CrosscheckRecord>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.master_seed, i as u64);
            let fine_grid = TimeGrid::new(cfg.horizon, 2 * cfg.steps)?;
            let fine_path = sample_forcing(spec, fine_grid, seed);
            let base_path = fine_path.coarsen(2)?;
            let base_cfg = solver_config(cfg, epsilon)?;
            let l2_rel = crosscheck_distance(&base_cfg, &base_path, spec)?;
            let (l2_refined, decreased) = if cfg.refine {
                let fine_cfg = ViscousConfig::new(epsilon, 2 * cfg.grid_points, fine_grid)?
                    .with_cfl_safety(cfg.cfl_safety)?;
                let d = crosscheck_distance(&fine_cfg, &fine_path, spec)?;
                (Some(d), Some(d < l2_rel))
            } else {
                (None, None)
            };
            Ok(CrosscheckRecord {
                realization: i,
                seed,
                epsilon,
                l2_rel,
                l2_rel_refined: l2_refined,
                decreased,
            })
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut all_decreased = true;
    for r in records {
        let r = r?;
        worst = worst.max(r.l2_rel);
        if let Some(false) = r.decreased {
            all_decreased = false;
        }
        out.push(&r);
    }
    out.summary = json!({
        "epsilon": epsilon,
        "worst_l2_rel": worst,
        "all_refined_decreased": all_decreased,
    });
    Ok(out)
}

fn crosscheck_distance(
    solver_cfg: &ViscousConfig<f64>,
    path: &ForcingPath<f64>,
    spec: &Spectrum<f64>,
) -> Result<f64> {
    let direct = viscous_solve(solver_cfg, path, spec)?;
    let transform = colehopf_solve(solver_cfg, path, spec)?;
    let recovered = recover_u(&transform.final_field, solver_cfg.epsilon)?;
    Ok(recovered.rel_l2_distance(&direct.final_field))
}

#[derive(Serialize)]
struct FkRecord {
    t: f64,
    x: f64,
    estimate: f64,
    std_error: f64,
    n_walkers: usize,
    splitting_value: f64,
    z: f64,
}

fn fk_crosscheck(cfg: &ExperimentConfig, spec: &Spectrum<f64>) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new();
    let epsilon = cfg.epsilon.first();
    let solver_cfg = solver_config(cfg, epsilon)?;
    let seed = realization_seed(cfg.master_seed, 0);
    let path = sample_forcing(spec, solver_cfg.grid, seed);
    let half = cfg.steps / 2;
    let snap_cfg = {
        let mut c = solver_cfg.clone();
        c.snapshot_stride = half.max(1);
        c
    };
    let run = colehopf_solve(&snap_cfg, &path, spec)?;

    // evaluation points: both snapshot times crossed with evenly spaced x
    let per_time = (cfg.fk_points / 2).max(1);
    let mut points = Vec::new();
    for &k in &[half, cfg.steps] {
        for q in 0..per_time {
            let j = (q * cfg.grid_points) / per_time;
            points.push((k, j));
        }
    }
    let mut within = 0usize;
    for (idx, &(k, j)) in points.iter().enumerate() {
        let x = 2.0 * std::f64::consts::PI * j as f64 / cfg.grid_points as f64;
        let walker_seed = realization_seed(cfg.master_seed, 0x666b_0000 + idx as u64);
        let est = feynman_kac_u(spec, &path, &solver_cfg, k, x, cfg.n_walkers, walker_seed)?;
        let reference = if k == cfg.steps {
            run.final_field.values()[j]
        } else {
            let snap = run
                .snapshots
                .iter()
                .find(|(s, _)| *s == k)
                .ok_or_else(|| Error::Config("missing snapshot".into()))?;
            snap.1.values()[j]
        };
        let z = if est.std_error > 0.0 {
            (est.estimate - reference) / est.std_error
        } else {
            0.0
        };
        if z.abs() <= 3.0 {
            within += 1;
        }
        out.push(&FkRecord {
            t: solver_cfg.grid.t(k),
            x,
            estimate: est.estimate,
            std_error: est.std_error,
            n_walkers: cfg.n_walkers,
            splitting_value: reference,
            z,
        });
    }
    let needed = points.len() - points.len() / 8;
    out.summary = json!({
        "epsilon": epsilon,
        "points": points.len(),
        "within_3se": within,
        "required": needed,
    });
    if within < needed {
        out.failure = Some(format!(
            "walker estimator agreed on {within}/{} points (need {needed})",
            points.len()
        ));
    }
    Ok(out)
}

#[derive(Serialize)]
struct VariationalRecord {
    realization: usize,
    x: f64,
    t: f64,
    action: f64,
    u: f64,
    el_residual: f64,
    n_restarts_used: usize,
    u_reference: f64,
    reference_slope: f64,
}

fn variational_compare(cfg: &ExperimentConfig, spec: &Spectrum<f64>) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new();
    let epsilon = cfg.epsilon.first();
    let var_steps = cfg.variational_steps.unwrap_or_else(|| {
        let mut v = cfg.steps;
        while v > 800 && v % 2 == 0 {
            v /= 2;
        }
        v
    });
    if cfg.steps % var_steps != 0 {
        return Err(Error::Config(format!(
            "variational_steps {var_steps} must divide steps {}",
            cfg.steps
        )));
    }
    let results: Vec<Result<Vec<VariationalRecord>>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.master_seed, i as u64);
            let solver_cfg = solver_config(cfg, epsilon)?;
            let path = sample_forcing(spec, solver_cfg.grid, seed);
            let u_ref = if cfg.log_space {
                let run = colehopf_solve_log(&solver_cfg, &path, spec)?;
                recover_u_from_log(&run.log_final, epsilon)
            } else {
                let run = colehopf_solve(&solver_cfg, &path, spec)?;
                recover_u(&run.final_field, epsilon)?
            };
            let coarse = path.coarsen(cfg.steps / var_steps)?;
            let m = cfg.grid_points;
            let dx = 2.0 * std::f64::consts::PI / m as f64;
            let mut recs = Vec::new();
            for q in 0..cfg.x_targets {
                let j = (q * m) / cfg.x_targets;
                let x = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                let opt_seed = realization_seed(seed, 0x7a72 + q as u64);
                let (xi, action_value) =
                    minimize_action(&coarse, spec, x, cfg.restarts, opt_seed)?;
                let u = inviscid_u(&xi)?;
                let residual = euler_lagrange_residual(&xi, &coarse, spec)?;
                let jm = (j + m - 1) % m;
                let jp = (j + 1) % m;
                let slope =
                    (u_ref.values()[jp] - u_ref.values()[jm]) / (2.0 * dx);
                recs.push(VariationalRecord {
                    realization: i,
                    x,
                    t: cfg.horizon,
                    action: action_value,
                    u,
                    el_residual: residual,
                    n_restarts_used: cfg.restarts,
                    u_reference: u_ref.values()[j],
                    reference_slope: slope,
                });
            }
            Ok(recs)
        })
        .collect();
    let mut smooth_total = 0usize;
    let mut smooth_agree = 0usize;
    let mut worst_residual = 0f64;
    for r in results {
        for rec in r? {
            worst_residual = worst_residual.max(rec.el_residual);
            if rec.reference_slope.abs() < 5.0 {
                smooth_total += 1;
                if (rec.u - rec.u_reference).abs() < 0.05 {
                    smooth_agree += 1;
                }
            }
            out.push(&rec);
        }
    }
    out.summary = json!({
        "epsilon": epsilon,
        "variational_steps": var_steps,
        "smooth_points": smooth_total,
        "smooth_agreements": smooth_agree,
        "worst_el_residual": worst_residual,
    });
    Ok(out)
}

fn bound_audit(cfg: &ExperimentConfig, spec: &Spectrum<f64>) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new();
    let mut audits: Vec<BoundAudit> = Vec::new();
    let epsilon = cfg.epsilon.first();
    let grid = grid_of(cfg)?;

    // sup-functional ensembles for the exponential and power bounds
    let weights = spec.component_weights();
    let sum_abs: f64 = weights.iter().sum();
    let times: Vec<(f64, usize)> = cfg
        .bound_times
        .iter()
        .filter(|&&t| t > 0.0 && t <= cfg.horizon * (1.0 + 1e-12))
        .map(|&t| grid.index_of(t).map(|k| (t, k)))
        .collect::<Result<_>>()?;
    let sup_rows: Vec<Vec<f64>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.master_seed, i as u64);
            let path = sample_forcing(spec, grid, seed);
            let mut row = Vec::with_capacity(times.len());
            for &(_, k) in &times {
                let mut s = 0.0;
                for n in 1..=spec.n_max() {
                    let a = spec.coeffs()[n - 1].abs();
                    s += a * (path.brownian_sup(1, n, k).unwrap()
                        + path.brownian_sup(2, n, k).unwrap());
                }
                row.push(s);
            }
            row
        })
        .collect();
    for (ti, &(t, _)) in times.iter().enumerate() {
        let col: Vec<f64> = sup_rows.iter().map(|r| r[ti]).collect();
        let exp_vals: Vec<f64> = col.iter().map(|&s| s.exp()).collect();
        audits.push(BoundAudit::new(
            BoundName::Lemma3,
            lemma3_bound(&weights, t)?,
            stats::mean(&exp_vals),
        ));
        for &p in &cfg.bound_orders {
            let pow_vals: Vec<f64> = col.iter().map(|&s| s.powi(p as i32)).collect();
            audits.push(BoundAudit::new(
                BoundName::Lemma4,
                lemma4_bound(p, t, sum_abs)?,
                stats::mean(&pow_vals),
            ));
        }
    }

    // realization-sup moments of the direct solve against the a-priori bound
    let mut lines = Vec::new();
    let (_, sups, _) = viscous_ensemble(cfg, spec, epsilon, &mut lines)?;
    for &p in &cfg.bound_orders {
        if p > 2 {
            continue;
        }
        let powered: Vec<f64> = sups.iter().map(|&s| s.powi(p as i32)).collect();
        audits.push(BoundAudit::new(
            BoundName::Theorem11,
            theorem11_bound(p, cfg.horizon, spec)?,
            stats::mean(&powered),
        ));
    }

    // per-realization trajectory-minimum bound for the transform solve
    let solver_cfg = solver_config(cfg, epsilon)?;
    let lemma6: Vec<Result<(f64, f64)>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.master_seed, i as u64);
            let path = sample_forcing(spec, solver_cfg.grid, seed);
            let run = colehopf_solve(&solver_cfg, &path, spec)?;
            let bound = lemma6_lower_bound(spec, &path, &solver_cfg, cfg.steps)?;
            Ok((run.min_value, bound))
        })
        .collect();
    let mut lemma6_ok = 0usize;
    for r in &lemma6 {
        let (min_u, bound) = match r {
            Ok(v) => *v,
            Err(e) => return Err(Error::Config(format!("lemma6 ensemble: {e}"))),
        };
        // lower bound: audit record keeps the ≤ convention by swapping sides
        audits.push(BoundAudit::new(BoundName::Lemma6, min_u, bound));
        if bound <= min_u {
            lemma6_ok += 1;
        }
    }

    // inviscid sup over endpoint targets against both sup bounds
    if cfg.horizon >= 1.0 {
        let var_steps = cfg.variational_steps.unwrap_or(400.min(cfg.steps));
        let sups_var: Vec<Result<(f64, f64)>> = (0..cfg.n_realizations)
            .into_par_iter()
            .map(|i| {
                let seed = realization_seed(cfg.master_seed, i as u64);
                let path = sample_forcing(spec, grid, seed);
                let coarse = if cfg.steps % var_steps == 0 && var_steps < cfg.steps {
                    path.coarsen(cfg.steps / var_steps)?
                } else {
                    path
                };
                let m = cfg.grid_points;
                let mut sup_u: f64 = 0.0;
                for q in 0..cfg.x_targets {
                    let x = 2.0 * std::f64::consts::PI * (q * m / cfg.x_targets) as f64
                        / m as f64;
                    let opt_seed = realization_seed(seed, 0x7a72 + q as u64);
                    let (xi, _) = minimize_action(&coarse, spec, x, cfg.restarts, opt_seed)?;
                    sup_u = sup_u.max(inviscid_u(&xi)?.abs());
                }
                let pathwise = theorem23_pathwise_bound(&coarse, spec, cfg.horizon)?;
                Ok((sup_u, pathwise))
            })
            .collect();
        let mut sup_values = Vec::new();
        for r in sups_var {
            let (sup_u, pathwise) = r?;
            audits.push(BoundAudit::new(BoundName::Theorem23, pathwise, sup_u));
            sup_values.push(sup_u);
        }
        audits.push(BoundAudit::new(
            BoundName::Theorem23,
            theorem23_moment_bound(1, spec)?,
            stats::mean(&sup_values),
        ));
    }

    let violations = audits.iter().filter(|a| !a.satisfied).count();
    out.lines.extend(lines);
    for a in &audits {
        out.push(a);
    }
    out.summary = json!({
        "audits": audits.len(),
        "violations": violations,
        "lemma6_checked": lemma6.len(),
        "lemma6_satisfied": lemma6_ok,
    });
    if violations > 0 {
        out.failure = Some(format!("{violations} bound audit(s) violated"));
    }
    Ok(out)
}

fn covariance_check(cfg: &ExperimentConfig, spec: &Spectrum<f64>) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::new();
    let grid = grid_of(cfg)?;
    let t_full = cfg.horizon;
    let tuples = [
        (t_full / 2.0, t_full, 0.9, 0.2),
        (t_full / 4.0, 3.0 * t_full / 4.0, 0.0, 1.5),
        (t_full, t_full, 2.2, 2.2),
        (t_full / 2.0, t_full / 2.0, 0.3, 4.0),
    ];
    let products: Vec<Vec<f64>> = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(cfg.master_seed, i as u64);
            let path = sample_forcing(spec, grid, seed);
            tuples
                .iter()
                .map(|&(s, t, x, y)| {
                    let ks = grid.index_of(s).unwrap();
                    let kt = grid.index_of(t).unwrap();
                    path.zeta(spec, kt, x).unwrap() * path.zeta(spec, ks, y).unwrap()
                })
                .collect()
        })
        .collect();
    let mut all_ok = true;
    for (ti, &(s, t, x, y)) in tuples.iter().enumerate() {
        let col: Vec<f64> = products.iter().map(|r| r[ti]).collect();
        let (mean, ci) = stats::mean_ci(&col)?;
        let se = ci / stats::Z95;
        let target = spec.covariance(s, t, x, y)?;
        let z = if se > 0.0 { (mean - target) / se } else { 0.0 };
        let ok = z.abs() <= 5.0;
        all_ok &= ok;
        out.lines.push(
            json!({
                "s": s, "t": t, "x": x, "y": y,
                "estimate": mean, "std_error": se,
                "target": target, "z": z, "ok": ok,
            })
            .to_string(),
        );
    }
    out.summary = json!({ "tuples": tuples.len(), "all_within_5se": all_ok });
    if !all_ok {
        out.failure = Some("covariance estimate off by more than 5 standard errors".into());
    }
    Ok(out)
}

/// Replays a stored forcing dump through both grid solvers and emits the
/// pathwise comparison; grid sizes come from the dump, solver parameters
/// from the arguments.
pub fn replay(dump: &Path, epsilon: f64, grid_points: usize, output: &Path) -> Result<Value> {
    let mut file = fs::File::open(dump)?;
    let path = ForcingPath::<f64>::read_from(&mut file)?;
    let cfg = ViscousConfig::new(epsilon, grid_points, path.grid())?;
    let spec = spec_for_replay(&path)?;
    let direct = viscous_solve(&cfg, &path, &spec)?;
    let transform = colehopf_solve(&cfg, &path, &spec)?;
    let recovered = recover_u(&transform.final_field, epsilon)?;
    let distance = recovered.rel_l2_distance(&direct.final_field);
    let report = json!({
        "seed": path.seed(),
        "steps": path.grid().steps(),
        "horizon": path.grid().horizon(),
        "n_modes": path.n_modes(),
        "epsilon": epsilon,
        "grid_points": grid_points,
        "l2_rel": distance,
        "direct": FieldStats::of(&direct.final_field),
        "transform_recovered": FieldStats::of(&recovered),
    });
    fs::create_dir_all(output)?;
    fs::write(
        output.join("replay.json"),
        format!("{}\n", serde_json::to_string_pretty(&report).expect("json")),
    )?;
    Ok(report)
}

/// A dump stores increments but not coefficients; replay weights every mode
/// equally so the comparison still exercises both solvers pathwise.
fn spec_for_replay(path: &ForcingPath<f64>) -> Result<Spectrum<f64>> {
    Spectrum::new(vec![1.0; path.n_modes()])
}
