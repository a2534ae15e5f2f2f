//! Empirical Hölder analysis: increment moments of field ensembles, log-log
//! exponent regression, admissible exponent regions and the per-chaos
//! increment bounds.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::chaos::InitialCondition;
use crate::error::{config, domain, Error, Result};
use crate::noise::{BoundExponents, GridSpec, NoiseSpec, Regime};
use crate::rng::{self, Purpose};
use crate::solver::FieldEnsemble;
use crate::stats::{least_squares, mean_stderr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementMode {
    /// `u(t,y) − u(r,y) − u(t,x) + u(r,x)`
    Rectangular,
    /// `u(t,x) − u(r,x)`
    TimeMarginal,
    /// `u(t,y) − u(t,x)`
    SpaceMarginal,
}

/// Physical lags; the unused component of a marginal mode is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lag {
    pub dt: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementRow {
    pub dt_lag: f64,
    pub dx_lag: f64,
    pub moment_order: u32,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementTable {
    pub mode: IncrementMode,
    pub moment_order: u32,
    pub rows: Vec<IncrementRow>,
}

fn lattice_steps(lag: f64, spacing: f64, what: &str) -> Result<usize> {
    let k = (lag / spacing).round();
    if !(lag > 0.0) || k < 1.0 || (k * spacing - lag).abs() > 1e-9 * lag {
        return Err(config(format!("{what} lag {lag} is not a positive multiple of {spacing}")));
    }
    Ok(k as usize)
}

/// Snapshot index pairs `(r, t)` with `t_t − t_r = dt`.
fn time_pairs(times: &[f64], dt: f64) -> Vec<(usize, usize)> {
    let tol = 1e-9 * dt.max(times.last().copied().unwrap_or(0.0));
    let mut out = Vec::new();
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            // Snapshot times need not be sorted.
            if (times[j] - times[i] - dt).abs() <= tol {
                out.push((i, j));
            } else if (times[i] - times[j] - dt).abs() <= tol {
                out.push((j, i));
            }
        }
    }
    out
}

/// Sites of the central window `[L/4, 3L/4)` on every axis.
fn window_sites(grid: &GridSpec) -> Vec<usize> {
    let n = grid.points;
    let axis: Vec<usize> = (n / 4..3 * n / 4).collect();
    match grid.d {
        1 => axis,
        _ => axis.iter().flat_map(|i| axis.iter().map(move |j| i * n + j)).collect(),
    }
}

/// Site shifted by `k` cells along the first axis, periodically.
fn shift(grid: &GridSpec, site: usize, k: usize) -> usize {
    let n = grid.points;
    match grid.d {
        1 => (site + k) % n,
        _ => ((site / n + k) % n) * n + site % n,
    }
}

/// Ensemble- and translation-averaged `E|increment|^p` per lag with
/// replica-level standard errors.
pub fn increment_moments(ens: &FieldEnsemble, lags: &[Lag], mode: IncrementMode, p: u32) -> Result<IncrementTable> {
    if p != 2 && p != 4 {
        return Err(config(format!("moment order must be 2 or 4, got {p}")));
    }
    if ens.replicas < 2 {
        return Err(Error::Statistics(format!("need at least 2 replicas, got {}", ens.replicas)));
    }
    if lags.is_empty() {
        return Err(config("no lags given"));
    }
    let grid = &ens.grid;
    let sites = window_sites(grid);
    let all_snapshots: Vec<(usize, usize)> = (0..ens.snapshots()).filter(|s| ens.snapshot_times[*s] > 0.0).map(|s| (s, s)).collect();
    let mut rows = Vec::with_capacity(lags.len());
    for lag in lags {
        let (pairs, k) = match mode {
            IncrementMode::Rectangular | IncrementMode::TimeMarginal => {
                let pairs = time_pairs(&ens.snapshot_times, lag.dt);
                if !(lag.dt > 0.0) || pairs.is_empty() {
                    return Err(config(format!("time lag {} matches no pair of snapshot times", lag.dt)));
                }
                let k = if mode == IncrementMode::Rectangular {
                    lattice_steps(lag.dx, grid.dx(), "space")?
                } else {
                    0
                };
                (pairs, k)
            }
            IncrementMode::SpaceMarginal => {
                if all_snapshots.is_empty() {
                    return Err(config("no snapshot with t > 0"));
                }
                (all_snapshots.clone(), lattice_steps(lag.dx, grid.dx(), "space")?)
            }
        };
        if k > grid.points / 4 {
            return Err(config(format!("space lag {} exceeds L/4", lag.dx)));
        }
        let per_replica: Vec<f64> = (0..ens.replicas)
            .into_par_iter()
            .map(|r| {
                let mut sum = 0.0;
                for &(a, b) in &pairs {
                    let (fr, ft) = (ens.field(r, a), ens.field(r, b));
                    for &x in &sites {
                        let inc = match mode {
                            IncrementMode::Rectangular => {
                                let y = shift(grid, x, k);
                                ft[y] - fr[y] - ft[x] + fr[x]
                            }
                            IncrementMode::TimeMarginal => ft[x] - fr[x],
                            IncrementMode::SpaceMarginal => ft[shift(grid, x, k)] - ft[x],
                        };
                        sum += inc.abs().powi(p as i32);
                    }
                }
                sum / (pairs.len() * sites.len()) as f64
            })
            .collect();
        let (estimate, stderr) = mean_stderr(&per_replica)?;
        let (dt_lag, dx_lag) = match mode {
            IncrementMode::Rectangular => (lag.dt, lag.dx),
            IncrementMode::TimeMarginal => (lag.dt, 0.0),
            IncrementMode::SpaceMarginal => (0.0, lag.dx),
        };
        rows.push(IncrementRow { dt_lag, dx_lag, moment_order: p, estimate, stderr });
    }
    Ok(IncrementTable { mode, moment_order: p, rows })
}

/// Minimum `r²` for an exponent estimate to count as reported.
pub const REPORT_R2: f64 = 0.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub mode: IncrementMode,
    /// Time exponent (`NaN` for the space-marginal mode).
    pub alpha0_hat: f64,
    /// Space exponent (`NaN` for the time-marginal mode).
    pub alpha_hat: f64,
    /// 95% confidence half-widths `(time, space)`.
    pub ci: (f64, f64),
    pub r2: f64,
    pub lags_used: Vec<Lag>,
    pub moment_order: u32,
    /// Whether `r2` clears [`REPORT_R2`].
    pub reported: bool,
}

fn distinct_span(values: &[f64]) -> (usize, f64) {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| ((*a - *b) / *b).abs() < 1e-9);
    let span = if v.is_empty() { 0.0 } else { (v[v.len() - 1] / v[0]).log10() };
    (v.len(), span)
}

/// Least squares of `log E|inc|^p` on `log dt` and/or `log dx`; slopes are
/// divided by `p`.
pub fn fit_exponents(table: &IncrementTable) -> Result<HolderFit> {
    let p = table.moment_order as f64;
    let rows: Vec<&IncrementRow> = table.rows.iter().collect();
    if rows.iter().any(|r| !(r.estimate > 0.0)) {
        return Err(Error::Regression("increment moments must be positive to fit".into()));
    }
    let check_axis = |vals: Vec<f64>, name: &str| -> Result<()> {
        let (count, span) = distinct_span(&vals);
        if count < 4 || span < 1.0 - 1e-9 {
            return Err(Error::Regression(format!(
                "{name} lags need >= 4 distinct values spanning >= 1 decade, got {count} over {span:.2} decades"
            )));
        }
        Ok(())
    };
    let y: Vec<f64> = rows.iter().map(|r| r.estimate.ln()).collect();
    let design: Vec<Vec<f64>> = match table.mode {
        IncrementMode::Rectangular => {
            check_axis(rows.iter().map(|r| r.dt_lag).collect(), "time")?;
            check_axis(rows.iter().map(|r| r.dx_lag).collect(), "space")?;
            rows.iter().map(|r| vec![1.0, r.dt_lag.ln(), r.dx_lag.ln()]).collect()
        }
        IncrementMode::TimeMarginal => {
            check_axis(rows.iter().map(|r| r.dt_lag).collect(), "time")?;
            rows.iter().map(|r| vec![1.0, r.dt_lag.ln()]).collect()
        }
        IncrementMode::SpaceMarginal => {
            check_axis(rows.iter().map(|r| r.dx_lag).collect(), "space")?;
            rows.iter().map(|r| vec![1.0, r.dx_lag.ln()]).collect()
        }
    };
    let fit = least_squares(&design, &y)?;
    let q = StudentsT::new(0.0, 1.0, fit.dof as f64)
        .map_err(|e| Error::Regression(e.to_string()))?
        .inverse_cdf(0.975);
    let half = |j: usize| (q * fit.stderr[j] / p).max(f64::EPSILON);
    let (alpha0_hat, alpha_hat, ci) = match table.mode {
        IncrementMode::Rectangular => (fit.coef[1] / p, fit.coef[2] / p, (half(1), half(2))),
        IncrementMode::TimeMarginal => (fit.coef[1] / p, f64::NAN, (half(1), f64::NAN)),
        IncrementMode::SpaceMarginal => (f64::NAN, fit.coef[1] / p, (f64::NAN, half(1))),
    };
    Ok(HolderFit {
        mode: table.mode,
        alpha0_hat,
        alpha_hat,
        ci,
        r2: fit.r2,
        lags_used: rows.iter().map(|r| Lag { dt: r.dt_lag, dx: r.dx_lag }).collect(),
        moment_order: table.moment_order,
        reported: fit.r2 > REPORT_R2,
    })
}

/// Admissible exponents `2ᾱ₀ + ᾱ < B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedRegion {
    pub b: f64,
}

impl PredictedRegion {
    /// Joint (rectangular) Hölder continuity.
    pub fn contains(&self, abar0: f64, abar: f64) -> bool {
        abar0 >= 0.0 && abar >= 0.0 && 2.0 * abar0 + abar < self.b
    }

    /// Separate time and space continuity.
    pub fn contains_marginal(&self, abar0: f64, abar: f64) -> bool {
        abar0 >= 0.0 && abar >= 0.0 && (2.0 * abar0).max(abar) < self.b
    }
}

/// `B = 2 − α₀ − α/2` (regime i) or `(3 − 2α₀ − α)/2` (regime ii).
pub fn predicted_region_with(e: &BoundExponents) -> PredictedRegion {
    let b = match e.regime {
        Regime::I => 2.0 - e.alpha0 - e.alpha / 2.0,
        Regime::II => (3.0 - 2.0 * e.alpha0 - e.alpha) / 2.0,
    };
    PredictedRegion { b }
}

pub fn predicted_region(spec: &NoiseSpec) -> PredictedRegion {
    predicted_region_with(&spec.exponents())
}

/// `c^n (n!)^{α/2−1} |t−r|^{2ᾱ₀} |x−y|^{2ᾱ} t^{(4−2α₀−α)n/2}` (regime i) or
/// `c^n (n!)^{(α−1)/2} |t−r|^{2ᾱ₀} |x−y|^{2ᾱ} t^{(3−2α₀−α)n/2}` (regime ii).
#[allow(clippy::too_many_arguments)]
pub fn chaos_increment_bound_with(
    n: usize,
    t: f64,
    r: f64,
    x: &[f64],
    y: &[f64],
    e: &BoundExponents,
    abar0: f64,
    abar: f64,
    c: f64,
) -> Result<f64> {
    if !(t >= r && r >= 0.0) {
        return Err(domain(format!("need t >= r >= 0, got t = {t}, r = {r}")));
    }
    if x.len() != y.len() {
        return Err(domain("points differ in dimension"));
    }
    if !(c > 0.0) {
        return Err(domain("bound constant must be positive"));
    }
    if !predicted_region_with(e).contains(abar0, abar) {
        return Err(domain(format!("exponents ({abar0}, {abar}) lie outside the admissible region")));
    }
    let dist = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if t == r || dist == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let (fact, time) = match e.regime {
        Regime::I => (e.alpha / 2.0 - 1.0, (4.0 - 2.0 * e.alpha0 - e.alpha) / 2.0),
        Regime::II => ((e.alpha - 1.0) / 2.0, (3.0 - 2.0 * e.alpha0 - e.alpha) / 2.0),
    };
    let ln = nf * c.ln() + fact * ln_gamma(nf + 1.0) + 2.0 * abar0 * (t - r).ln() + 2.0 * abar * dist.ln()
        + time * nf * t.ln();
    Ok(ln.exp())
}

#[allow(clippy::too_many_arguments)]
pub fn chaos_increment_bound(
    n: usize,
    t: f64,
    r: f64,
    x: &[f64],
    y: &[f64],
    spec: &NoiseSpec,
    abar0: f64,
    abar: f64,
    c: f64,
) -> Result<f64> {
    chaos_increment_bound_with(n, t, r, x, y, &spec.exponents(), abar0, abar, c)
}

/// Ensemble of a one-dimensional fractional Brownian sheet with time Hurst
/// index `h0` and space index `h1` (zero on both axes at the origin),
/// sampled exactly from its separable covariance. Spec and initial condition
/// are placeholders.
pub fn synthetic_fbm_sheet(
    h0: f64,
    h1: f64,
    snapshot_times: &[f64],
    grid: &GridSpec,
    replicas: usize,
    seed: u64,
) -> Result<FieldEnsemble> {
    if grid.d != 1 {
        return Err(config("synthetic sheets are one-dimensional"));
    }
    if !(h0 > 0.0 && h0 < 1.0 && h1 > 0.0 && h1 < 1.0) {
        return Err(domain("Hurst indices must lie in (0, 1)"));
    }
    let factor = |pts: &[f64], h: f64| -> Result<DMatrix<f64>> {
        let k = DMatrix::from_fn(pts.len(), pts.len(), |i, j| {
            let (a, b) = (pts[i], pts[j]);
            0.5 * (a.abs().powf(2.0 * h) + b.abs().powf(2.0 * h) - (a - b).abs().powf(2.0 * h))
        });
        k.cholesky().map(|c| c.l()).ok_or_else(|| Error::Singular("sheet covariance is not positive definite".into()))
    };
    // Skip t = 0 and x = 0, where the sheet vanishes identically.
    let ts: Vec<f64> = snapshot_times.to_vec();
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(config("synthetic sheet snapshot times must be positive"));
    }
    let xs: Vec<f64> = (0..grid.points).map(|j| (j + 1) as f64 * grid.dx()).collect();
    let lt = factor(&ts, h0)?;
    let lx = factor(&xs, h1)?;
    let (s, m) = (ts.len(), grid.points);
    let base = rng::derive_seed(seed, Purpose::Synthetic);
    let per_replica: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(base, r as u64);
            let z = DMatrix::from_fn(s, m, |_, _| g.sample::<f64, _>(StandardNormal));
            let u = &lt * z * lx.transpose();
            let mut out = Vec::with_capacity(s * m);
            for i in 0..s {
                out.extend((0..m).map(|j| u[(i, j)]));
            }
            out
        })
        .collect();
    Ok(FieldEnsemble {
        replicas,
        fields: per_replica.concat(),
        snapshot_times: ts,
        grid: grid.clone(),
        spec: NoiseSpec::space_time_white(1)?,
        u0: InitialCondition::ConstantOne,
        master_seed: seed,
    })
}

pub const INCREMENT_CSV_HEADER: &str = "mode,dt_lag,dx_lag,moment_order,estimate,stderr";
pub const FIT_CSV_HEADER: &str = "mode,alpha0_hat,alpha_hat,ci_alpha0,ci_alpha,r2,moment_order,reported,lags";

pub fn mode_name(mode: IncrementMode) -> &'static str {
    match mode {
        IncrementMode::Rectangular => "rectangular",
        IncrementMode::TimeMarginal => "time_marginal",
        IncrementMode::SpaceMarginal => "space_marginal",
    }
}

pub fn write_increment_csv<W: Write>(w: &mut W, tables: &[IncrementTable]) -> Result<()> {
    writeln!(w, "{INCREMENT_CSV_HEADER}")?;
    for t in tables {
        for r in &t.rows {
            writeln!(w, "{},{},{},{},{:e},{:e}", mode_name(t.mode), r.dt_lag, r.dx_lag, r.moment_order, r.estimate, r.stderr)?;
        }
    }
    Ok(())
}

pub fn write_fit_csv<W: Write>(w: &mut W, fits: &[HolderFit]) -> Result<()> {
    writeln!(w, "{FIT_CSV_HEADER}")?;
    for f in fits {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            mode_name(f.mode),
            f.alpha0_hat,
            f.alpha_hat,
            f.ci.0,
            f.ci.1,
            f.r2,
            f.moment_order,
            f.reported,
            f.lags_used.len()
        )?;
    }
    Ok(())
}

/// Two-column `lag moment` data for external log-log plotting.
pub fn write_loglog<W: Write>(w: &mut W, table: &IncrementTable, time_axis: bool) -> Result<()> {
    writeln!(w, "# {} p={} {}", mode_name(table.mode), table.moment_order, if time_axis { "dt" } else { "dx" })?;
    for r in &table.rows {
        writeln!(w, "{:e} {:e}", if time_axis { r.dt_lag } else { r.dx_lag }, r.estimate)?;
    }
    Ok(())
}
