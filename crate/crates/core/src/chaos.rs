//! Wiener chaos side of the model: kernels `f_n`, Monte Carlo chaos
//! variances `n!‖f_n(·,t,x)‖²`, their bounds, the truncated second-moment
//! series and the initial-condition decay exponent.
//!
//! Variances are computed in the Fourier representation. For ordered times
//! `s_(1) < … < s_(n)` the spatial transform of the kernel is
//! `e^{−ix·(Σξ−ζ)} ∏_k e^{−½Δ_k|Ξ_k−ζ|²}` (times `e^{−½(ε+s_(1))|ζ|²}` and a
//! `ζ` integral for a Gaussian bump), with `Δ_k = s_(k+1) − s_(k)`,
//! `s_(n+1) = t` and `Ξ_k` the partial sums of the frequencies in time order.
//! The product of two such factors is a Gaussian in all frequency variables;
//! frequencies are drawn from that Gaussian and `μ` enters as a weight.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{config, domain, Error, Result};
use crate::noise::{BoundExponents, NoiseSpec, Regime, TimeMode};
use crate::quadrature;
use crate::rng::{self, Purpose};
use crate::specfn::heat_kernel;
use crate::stats::{least_squares, MeanAccumulator};

pub const MAX_LEVEL: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    ConstantOne,
    /// `u₀ = p_ε`, so `û₀(ξ) = e^{−ε|ξ|²/2}`.
    GaussianBump { width: f64 },
    /// `u₀ = δ₀`, `û₀ ≡ 1`.
    PointMass,
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCondition::GaussianBump { width } if !(*width > 0.0) => {
                Err(config(format!("gaussian bump width must be positive, got {width}")))
            }
            _ => Ok(()),
        }
    }

    /// `|û₀(ξ)|` away from the origin, `None` for the constant (a point mass
    /// in frequency).
    pub fn fourier_abs(&self, r2: f64) -> Option<f64> {
        match self {
            InitialCondition::ConstantOne => None,
            InitialCondition::GaussianBump { width } => Some((-0.5 * width * r2).exp()),
            InitialCondition::PointMass => Some(1.0),
        }
    }

    /// `(p_s * u₀)(x)`.
    pub fn heat_smoothed(&self, s: f64, x: &[f64]) -> Result<f64> {
        match self {
            InitialCondition::ConstantOne => Ok(1.0),
            InitialCondition::GaussianBump { width } => heat_kernel(s + width, x),
            InitialCondition::PointMass => heat_kernel(s, x),
        }
    }
}

/// `f_n((s_1,x_1),…,(s_n,x_n); t, x)`: the symmetrized chain of heat kernels
/// with the `1/n!` prefactor.
pub fn chaos_kernel_eval(
    times: &[f64],
    points: &[Vec<f64>],
    t: f64,
    x: &[f64],
    u0: &InitialCondition,
) -> Result<f64> {
    let n = times.len();
    if n == 0 || points.len() != n {
        return Err(domain("need one point per time and at least one time"));
    }
    if points.iter().any(|p| p.len() != x.len()) {
        return Err(domain("points and evaluation point differ in dimension"));
    }
    if let Some(s) = times.iter().find(|s| !(**s >= 0.0 && **s < t)) {
        return Err(domain(format!("time {s} outside [0, {t})")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
    if order.windows(2).any(|w| times[w[0]] == times[w[1]]) {
        return Err(Error::Degenerate("coincident times in chaos kernel".into()));
    }
    let first = order[0];
    let mut value = u0.heat_smoothed(times[first], &points[first])?;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dx: Vec<f64> = points[b].iter().zip(&points[a]).map(|(p, q)| p - q).collect();
        value *= heat_kernel(times[b] - times[a], &dx)?;
    }
    let last = order[n - 1];
    let dx: Vec<f64> = x.iter().zip(&points[last]).map(|(p, q)| p - q).collect();
    value *= heat_kernel(t - times[last], &dx)?;
    Ok((value.ln() - ln_gamma(n as f64 + 1.0)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub samples: u64,
    pub seed: u64,
}

/// Undetermined constants of the bounds, with the defaults `c = C = 1`,
/// `α̃₂ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c: f64,
    pub big_c: f64,
    pub alpha2: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self { c: 1.0, big_c: 1.0, alpha2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosEstimate {
    pub n: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub alpha0: f64,
    pub alpha: f64,
    pub variance: f64,
    pub stderr: f64,
    /// `chaos_variance_bound` with default constants.
    pub bound_value: f64,
    pub samples: u64,
    pub seed: u64,
}

impl ChaosEstimate {
    pub fn relative_stderr(&self) -> f64 {
        self.stderr / self.variance.abs()
    }
}

const MAX_VARS: usize = MAX_LEVEL + 2;

/// Dense symmetric matrix of size ≤ `MAX_VARS`, row-major.
#[derive(Clone, Copy)]
struct Small {
    m: usize,
    a: [f64; MAX_VARS * MAX_VARS],
}

impl Small {
    fn zeros(m: usize) -> Self {
        Self { m, a: [0.0; MAX_VARS * MAX_VARS] }
    }

    /// `self += w · c cᵀ` with `c` given by its nonzero (index, coefficient) pairs.
    fn add_outer(&mut self, w: f64, c: &[(usize, f64)]) {
        for &(i, ci) in c {
            for &(j, cj) in c {
                self.a[i * MAX_VARS + j] += w * ci * cj;
            }
        }
    }

    /// In-place lower Cholesky factor; returns `ln det` or `None` if not
    /// positive definite.
    fn cholesky(&mut self) -> Option<f64> {
        let m = self.m;
        let mut logdet = 0.0;
        for j in 0..m {
            let mut d = self.a[j * MAX_VARS + j];
            for k in 0..j {
                d -= self.a[j * MAX_VARS + k].powi(2);
            }
            if !(d > 0.0) {
                return None;
            }
            let l = d.sqrt();
            logdet += 2.0 * l.ln();
            self.a[j * MAX_VARS + j] = l;
            for i in j + 1..m {
                let mut v = self.a[i * MAX_VARS + j];
                for k in 0..j {
                    v -= self.a[i * MAX_VARS + k] * self.a[j * MAX_VARS + k];
                }
                self.a[i * MAX_VARS + j] = v / l;
            }
        }
        Some(logdet)
    }

    /// Solves `Lᵀ v = z` for the factor stored in the lower triangle.
    fn solve_upper(&self, z: &mut [f64]) {
        let m = self.m;
        for i in (0..m).rev() {
            let mut v = z[i];
            for k in i + 1..m {
                v -= self.a[k * MAX_VARS + i] * z[k];
            }
            z[i] = v / self.a[i * MAX_VARS + i];
        }
    }
}

/// Draws `k` ordered times in `(0, t)` by sampling the gaps above each time
/// (last first) with density `∝ g^κ` on the remaining length. Returns the
/// inverse proposal density of the gaps, so `E[h·w] = ∫_{T_k} h`.
fn sample_ordered_times<R: Rng>(rng: &mut R, t: f64, kappa: f64, times: &mut [f64]) -> f64 {
    let k = times.len();
    let e = kappa + 1.0;
    let mut remaining = t;
    let mut top = t;
    let mut weight = 1.0;
    for i in (0..k).rev() {
        let u: f64 = rng.random();
        let g = remaining * u.powf(1.0 / e);
        weight *= remaining.powf(e) / (e * g.powf(kappa));
        remaining -= g;
        top -= g;
        times[i] = top;
    }
    weight
}

/// Pair `(s, s')` on `[0,t]²` with the lag importance-sampled from
/// `|τ|^{−α₀}`; returns the inverse density times `|s−s'|^{−α₀}`.
fn sample_riesz_pair<R: Rng>(rng: &mut R, t: f64, alpha0: f64) -> (f64, f64, f64) {
    let e = 1.0 - alpha0;
    let s = t * rng.random::<f64>();
    let left = s.powf(e);
    let right = (t - s).powf(e);
    let mass = (left + right) / e;
    let u: f64 = rng.random();
    let side = rng.random::<f64>() * (left + right);
    let tau = if side < left { -s * u.powf(1.0 / e) } else { (t - s) * u.powf(1.0 / e) };
    (s, (s + tau).clamp(0.0, t), t * mass)
}

struct Sampler<'a> {
    n: usize,
    t: f64,
    x: &'a [f64],
    d: usize,
    spec: &'a NoiseSpec,
    bump: Option<f64>,
    kappa: f64,
}

impl Sampler<'_> {
    fn vars(&self) -> usize {
        self.n + if self.bump.is_some() { 2 } else { 0 }
    }

    /// Adds the quadratic form of one time configuration; `zeta` is the
    /// index of that side's bump frequency.
    fn add_side(&self, a: &mut Small, times: &[f64], zeta: Option<usize>) {
        let n = self.n;
        let mut order = [0usize; MAX_LEVEL];
        for (i, o) in order.iter_mut().enumerate().take(n) {
            *o = i;
        }
        order[..n].sort_by(|p, q| times[*p].total_cmp(&times[*q]));
        let mut c: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
        if let (Some(z), Some(eps)) = (zeta, self.bump) {
            a.add_outer(0.5 * (eps + times[order[0]]), &[(z, 1.0)]);
            c.push((z, -1.0));
        }
        for k in 0..n {
            c.push((order[k], 1.0));
            let next = if k + 1 < n { times[order[k + 1]] } else { self.t };
            a.add_outer(0.5 * (next - times[order[k]]), &c);
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let n = self.n;
        let m = self.vars();
        let mut a = Small::zeros(m);
        let (zeta, zeta_p) = if self.bump.is_some() { (Some(n), Some(n + 1)) } else { (None, None) };
        let mut s = [0.0; MAX_LEVEL];
        let time_weight = match self.spec.time() {
            TimeMode::White => {
                let w = sample_ordered_times(rng, self.t, self.kappa, &mut s[..n]);
                self.add_side(&mut a, &s[..n], zeta);
                self.add_side(&mut a, &s[..n], zeta_p);
                w
            }
            TimeMode::Riesz { alpha0 } => {
                let mut sp = [0.0; MAX_LEVEL];
                let mut w = 1.0;
                for i in 0..n {
                    let (p, q, wi) = sample_riesz_pair(rng, self.t, alpha0);
                    s[i] = p;
                    sp[i] = q;
                    w *= wi;
                }
                self.add_side(&mut a, &s[..n], zeta);
                self.add_side(&mut a, &sp[..n], zeta_p);
                w
            }
        };
        let Some(logdet) = a.cholesky() else {
            return 0.0;
        };
        let gauss = (0.5 * self.d as f64 * (m as f64 * PI.ln() - logdet)).exp();
        // v = L^{−T} z / √2 has density ∝ e^{−vᵀAv}, one draw per axis.
        let mut v = [[0.0; MAX_VARS]; 2];
        for axis in v.iter_mut().take(self.d) {
            for z in axis.iter_mut().take(m) {
                *z = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
            }
            a.solve_upper(&mut axis[..m]);
        }
        let mut mu = 1.0;
        let mut xi = [0.0; 2];
        for i in 0..n {
            for (ax, val) in xi.iter_mut().enumerate().take(self.d) {
                *val = v[ax][i];
            }
            mu *= self.spec.spectral_density(&xi[..self.d]);
        }
        let phase = match (zeta, zeta_p) {
            (Some(z), Some(zp)) => (0..self.d).map(|ax| self.x[ax] * (v[ax][z] - v[ax][zp])).sum::<f64>().cos(),
            _ => 1.0,
        };
        time_weight * gauss * mu * phase
    }
}

/// Gap exponent matching the small-gap behaviour `Δ^{−(d+Σα)/2}` of the
/// frequency integral, kept integrable.
fn gap_exponent(spec: &NoiseSpec) -> f64 {
    (-(spec.dim() as f64 + spec.spectral_exponent()) / 2.0).max(-0.9)
}

/// Monte Carlo estimate of the chaos variance `n!‖f_n(·,t,x)‖²_{H⊗n}`.
pub fn chaos_variance(
    n: usize,
    t: f64,
    x: &[f64],
    spec: &NoiseSpec,
    u0: &InitialCondition,
    mc: &McParams,
) -> Result<ChaosEstimate> {
    spec.check_hypotheses()?;
    u0.validate()?;
    if n > MAX_LEVEL {
        return Err(config(format!("chaos level {n} exceeds {MAX_LEVEL}")));
    }
    if !(t > 0.0) {
        return Err(config(format!("time must be positive, got {t}")));
    }
    if x.len() != spec.dim() {
        return Err(config(format!("evaluation point has dimension {}, noise {}", x.len(), spec.dim())));
    }
    let bump = match u0 {
        InitialCondition::ConstantOne => None,
        InitialCondition::GaussianBump { width } => Some(*width),
        InitialCondition::PointMass => {
            return Err(config("chaos variances need u0 = constant_one or gaussian_bump"))
        }
    };
    if mc.samples < 2 {
        return Err(config("chaos variance needs at least 2 samples"));
    }
    let e = spec.exponents();
    let bound_value = chaos_variance_bound_with(n, t, &e, &BoundConstants::default()).unwrap_or(f64::NAN);
    let mut estimate = ChaosEstimate {
        n,
        t,
        x: x.to_vec(),
        alpha0: e.alpha0,
        alpha: e.alpha,
        variance: 0.0,
        stderr: 0.0,
        bound_value,
        samples: mc.samples,
        seed: mc.seed,
    };
    if n == 0 {
        estimate.variance = u0.heat_smoothed(t, x)?.powi(2);
        return Ok(estimate);
    }
    let sampler = Sampler { n, t, x, d: spec.dim(), spec, bump, kappa: gap_exponent(spec) };
    let mut prefactor = match spec.time() {
        TimeMode::White => 1.0,
        TimeMode::Riesz { .. } => (-ln_gamma(n as f64 + 1.0)).exp(),
    };
    if bump.is_some() {
        prefactor *= (2.0 * PI).powi(-2 * spec.dim() as i32);
    }
    const BATCH: u64 = 1 << 14;
    let base = rng::derive_seed(mc.seed, Purpose::Chaos);
    let parts: Vec<MeanAccumulator> = (0..mc.samples.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(base, b);
            let mut acc = MeanAccumulator::default();
            for _ in 0..BATCH.min(mc.samples - b * BATCH) {
                acc.push(sampler.sample(&mut rng));
            }
            acc
        })
        .collect();
    let total = parts.iter().fold(MeanAccumulator::default(), |a, b| a.merge(b));
    estimate.variance = prefactor * total.mean();
    estimate.stderr = prefactor * total.stderr();
    Ok(estimate)
}

/// Closed form for the white preset in d = 1 with `u₀ ≡ 1`:
/// `t^{n/2} / (2ⁿ Γ(n/2+1))`.
pub fn white_chaos_variance(n: usize, t: f64) -> f64 {
    let n = n as f64;
    t.powf(n / 2.0) / (2f64.powf(n) * gamma(n / 2.0 + 1.0))
}

/// Closed form of `Σ_n white_chaos_variance(n, t) = e^{t/4}(1 + erf(√t/2))`.
pub fn white_second_moment(t: f64) -> f64 {
    (t / 4.0).exp() * (1.0 + statrs::function::erf::erf(t.sqrt() / 2.0))
}

fn regime_ii_alpha(e: &BoundExponents) -> Result<()> {
    if e.regime == Regime::II && !(e.alpha < 1.0) {
        return Err(domain(format!("regime (ii) bound needs alpha < 1, got {}", e.alpha)));
    }
    Ok(())
}

/// `c^n t^{α̃₂} (n!)^{α/2−1} t^{(4−2α₀−α)n/2}` (regime i) or
/// `c^n t^{α̃₂} (n!)^{−(1−α)/2} t^{(3−2α₀−α)n/2}` (regime ii).
pub fn chaos_variance_bound_with(n: usize, t: f64, e: &BoundExponents, k: &BoundConstants) -> Result<f64> {
    regime_ii_alpha(e)?;
    if !(t > 0.0) || !(k.c > 0.0) {
        return Err(domain("bound needs t > 0 and c > 0"));
    }
    let nf = n as f64;
    let (fact, time) = match e.regime {
        Regime::I => (e.alpha / 2.0 - 1.0, (4.0 - 2.0 * e.alpha0 - e.alpha) / 2.0),
        Regime::II => (-(1.0 - e.alpha) / 2.0, (3.0 - 2.0 * e.alpha0 - e.alpha) / 2.0),
    };
    let ln = nf * k.c.ln() + k.alpha2 * t.ln() + fact * ln_gamma(nf + 1.0) + time * nf * t.ln();
    Ok(ln.exp())
}

pub fn chaos_variance_bound(n: usize, t: f64, spec: &NoiseSpec, k: &BoundConstants) -> Result<f64> {
    chaos_variance_bound_with(n, t, &spec.exponents(), k)
}

/// `C exp(c p^{(3−α)/(1−α)} t^{(3−2α₀−α)/(1−α)})` (regime ii) or
/// `C exp(c t^{(4−2α₀−α)/(2−α)} p^{(4−α)/(2−α)})` (regime i).
pub fn moment_bound_with(p: f64, t: f64, e: &BoundExponents, k: &BoundConstants) -> Result<f64> {
    regime_ii_alpha(e)?;
    if !(p >= 2.0) {
        return Err(domain(format!("moment order must be >= 2, got {p}")));
    }
    if !(t > 0.0) {
        return Err(domain(format!("time must be positive, got {t}")));
    }
    if e.regime == Regime::I && !(e.alpha < 2.0) {
        return Err(domain(format!("regime (i) bound needs alpha < 2, got {}", e.alpha)));
    }
    let (pe, te) = match e.regime {
        Regime::I => ((4.0 - e.alpha) / (2.0 - e.alpha), (4.0 - 2.0 * e.alpha0 - e.alpha) / (2.0 - e.alpha)),
        Regime::II => ((3.0 - e.alpha) / (1.0 - e.alpha), (3.0 - 2.0 * e.alpha0 - e.alpha) / (1.0 - e.alpha)),
    };
    Ok(k.big_c * (k.c * p.powf(pe) * t.powf(te)).exp())
}

pub fn moment_bound(p: f64, t: f64, spec: &NoiseSpec, k: &BoundConstants) -> Result<f64> {
    moment_bound_with(p, t, &spec.exponents(), k)
}

/// Smallest `c` with `value_n ≤ bound(n, c)` for every given level.
pub fn fit_bound_constant(estimates: &[ChaosEstimate], spec: &NoiseSpec) -> Result<f64> {
    let e = spec.exponents();
    let mut c: f64 = f64::MIN_POSITIVE;
    for est in estimates.iter().filter(|e| e.n > 0) {
        let unit = chaos_variance_bound_with(est.n, est.t, &e, &BoundConstants::default())?;
        let ratio = est.variance.max(0.0) / unit;
        c = c.max(ratio.powf(1.0 / est.n as f64));
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEstimate {
    /// `Σ_{n≤N}` of the chaos variances, including level 0.
    pub value: f64,
    pub stderr: f64,
    /// `Σ_{n>N}` of the variance bound with the fitted constant.
    pub tail_bound: f64,
    pub fitted_c: f64,
    pub levels: Vec<ChaosEstimate>,
}

/// `E u(t,x)² = Σ n!‖f_n‖²` truncated at level `n_max`, with an analytic
/// tail bound. Level `n` uses seed `mc.seed + n`.
pub fn second_moment_series(
    t: f64,
    x: &[f64],
    spec: &NoiseSpec,
    u0: &InitialCondition,
    n_max: usize,
    mc: &McParams,
) -> Result<SeriesEstimate> {
    if n_max > MAX_LEVEL {
        return Err(config(format!("truncation level {n_max} exceeds {MAX_LEVEL}")));
    }
    let levels = (0..=n_max)
        .map(|n| chaos_variance(n, t, x, spec, u0, &McParams { samples: mc.samples, seed: mc.seed.wrapping_add(n as u64) }))
        .collect::<Result<Vec<_>>>()?;
    let value = levels.iter().map(|l| l.variance).sum();
    let stderr = levels.iter().map(|l| l.stderr * l.stderr).sum::<f64>().sqrt();
    let fitted_c = fit_bound_constant(&levels, spec)?;
    let tail_bound = series_tail(t, spec, fitted_c, n_max)?;
    Ok(SeriesEstimate { value, stderr, tail_bound, fitted_c, levels })
}

/// `Σ_{n>n_max} chaos_variance_bound(n, t, c)`, summed until terms are
/// negligible. Infinite when the bound does not decay.
pub fn series_tail(t: f64, spec: &NoiseSpec, c: f64, n_max: usize) -> Result<f64> {
    let e = spec.exponents();
    let k = BoundConstants { c, ..Default::default() };
    let mut sum = 0.0;
    let mut small = 0;
    for n in n_max + 1..n_max + 100_000 {
        let term = chaos_variance_bound_with(n, t, &e, &k)?;
        if !term.is_finite() {
            return Ok(f64::INFINITY);
        }
        sum += term;
        if term <= 1e-16 * sum.max(f64::MIN_POSITIVE) {
            small += 1;
            if small >= 3 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Ok(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta: f64,
    pub admissible: bool,
    pub r2: f64,
}

/// `∫ (1 + |ξ|^{α/2}) e^{−s|ξ|²} |û₀(ξ)| dξ`.
pub fn initial_decay_integral(u0: &InitialCondition, spec: &NoiseSpec, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(domain(format!("s must be positive, got {s}")));
    }
    let d = spec.dim();
    let Some(_) = u0.fourier_abs(0.0) else {
        // û₀ = (2π)^d δ₀: the integrand is evaluated at ξ = 0 only.
        return Ok((2.0 * PI).powi(d as i32));
    };
    let half = spec.exponents().alpha / 2.0;
    // Radial form: |S^{d−1}| ∫ r^{d−1} (1 + r^{α/2}) e^{−s r²} |û₀(r)| dr.
    let decay = match u0 {
        InitialCondition::GaussianBump { width } => s + width / 2.0,
        _ => s,
    };
    let radius = (80.0 / decay).sqrt();
    let g = |r: f64| (-s * r * r).exp() * u0.fourier_abs(r * r).unwrap_or(0.0);
    let p = d as f64 - 1.0;
    let sphere = if d == 1 { 2.0 } else { 2.0 * PI };
    let v = quadrature::power_weighted(g, 0.0, radius, p, 1e-12)
        + quadrature::power_weighted(g, 0.0, radius, p + half, 1e-12);
    Ok(sphere * v)
}

/// Fits `β` from `log I(s) ≈ const − β log s` over `s_grid`.
pub fn beta_fit(u0: &InitialCondition, spec: &NoiseSpec, s_grid: &[f64]) -> Result<BetaFit> {
    u0.validate()?;
    if s_grid.len() < 3 {
        return Err(domain("beta fit needs at least 3 grid points"));
    }
    let (lo, hi) = s_grid.iter().fold((f64::INFINITY, 0.0f64), |(l, h), s| (l.min(*s), h.max(*s)));
    if !(lo > 0.0) || hi > 1.0 || (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(domain("s grid must be positive, at most 1 and span >= 3 decades"));
    }
    let mut design = Vec::with_capacity(s_grid.len());
    let mut y = Vec::with_capacity(s_grid.len());
    for s in s_grid {
        let v = initial_decay_integral(u0, spec, *s)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(domain(format!("decay integral not finite at s = {s}")));
        }
        design.push(vec![1.0, s.ln()]);
        y.push(v.ln());
    }
    let constant = y.iter().all(|v| (v - y[0]).abs() < 1e-14 * y[0].abs().max(1.0));
    let (beta, r2) = if constant {
        (0.0, 1.0)
    } else {
        let fit = least_squares(&design, &y)?;
        // Round off quadrature noise on a flat curve.
        let b = -fit.coef[1];
        (if b.abs() < 1e-9 { 0.0 } else { b }, fit.r2)
    };
    Ok(BetaFit { beta, admissible: beta < 1.0 - spec.alpha0() / 2.0, r2 })
}

/// `CSV` header of chaos tables.
pub const CSV_HEADER: &str = "n,t,alpha0,alpha,variance,stderr,bound,samples,seed";

pub fn csv_row(e: &ChaosEstimate) -> String {
    format!(
        "{},{},{},{},{:e},{:e},{:e},{},{}",
        e.n, e.t, e.alpha0, e.alpha, e.variance, e.stderr, e.bound_value, e.samples, e.seed
    )
}
