//! Noise covariance model, discrete synthesis on periodic grids, and
//! probe-based validation of the synthesized covariance.
//!
//! The covariance of the noise is
//! `E[W(φ)W(ψ)] = ∫ Fφ(s,ξ) conj(Fψ(t,ξ)) γ₀(s−t) ds dt μ(ξ) dξ`
//! with the spatial Fourier transform `Ff(ξ) = ∫ e^{−iξ·x} f(x) dx` (no 2π
//! factors). Time covariances are `γ₀ = δ` (white) or `|τ|^{−α₀}` (Riesz);
//! spectral densities are `∏|ξ_i|^{α_i}` (regime i) or `|ξ|^α` (regime ii).

use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{config, domain, Error, Result};
use crate::fft::{self, Spectral};
use crate::rng::{self, Purpose};
use crate::specfn::heat_kernel;
use crate::stats::jackknife_covariance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TimeMode {
    White,
    Riesz { alpha0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime")]
pub enum SpaceMode {
    /// `μ(ξ) = ∏|ξ_i|^{α_i}`, each `α_i ∈ (−1, 0]`, any supported dimension.
    #[serde(rename = "i")]
    RegimeI { alphas: Vec<f64> },
    /// `μ(ξ) = |ξ|^α`, `α ∈ (0, 3/2)`, one space dimension.
    #[serde(rename = "ii")]
    RegimeII { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    I,
    II,
}

/// Exponents entering the moment bounds, increment bounds and admissible
/// regions. In regime (i), `alpha` is the Riesz-kernel exponent `d + Σα_i`
/// of the spatial covariance (1 for space-time white noise in d = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundExponents {
    pub regime: Regime,
    pub alpha0: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NoiseSpecRaw {
    time: TimeMode,
    space: SpaceMode,
    #[serde(default = "unit_amplitude")]
    amplitude: f64,
}

fn unit_amplitude() -> f64 {
    1.0
}

/// Noise covariance model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRaw", into = "NoiseSpecRaw")]
pub struct NoiseSpec {
    time: TimeMode,
    space: SpaceMode,
    amplitude: f64,
}

impl TryFrom<NoiseSpecRaw> for NoiseSpec {
    type Error = Error;

    fn try_from(raw: NoiseSpecRaw) -> Result<Self> {
        NoiseSpec::new(raw.time, raw.space, raw.amplitude)
    }
}

impl From<NoiseSpec> for NoiseSpecRaw {
    fn from(s: NoiseSpec) -> Self {
        NoiseSpecRaw {
            time: s.time,
            space: s.space,
            amplitude: s.amplitude,
        }
    }
}

impl NoiseSpec {
    /// Checks every exponent range. The coupled hypotheses between time and
    /// space exponents are checked separately by [`NoiseSpec::check_hypotheses`].
    pub fn new(time: TimeMode, space: SpaceMode, amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(config(format!("amplitude must be finite and >= 0, got {amplitude}")));
        }
        if let TimeMode::Riesz { alpha0 } = time {
            if !(alpha0 > 0.0 && alpha0 < 1.0) {
                return Err(config(format!("riesz alpha0 must lie in (0, 1), got {alpha0}")));
            }
        }
        match &space {
            SpaceMode::RegimeI { alphas } => {
                if alphas.is_empty() || alphas.len() > 2 {
                    return Err(config(format!(
                        "regime (i) dimension must be 1 or 2, got {}",
                        alphas.len()
                    )));
                }
                if let Some(a) = alphas.iter().find(|a| !(**a > -1.0 && **a <= 0.0)) {
                    return Err(config(format!("regime (i) exponent {a} outside (-1, 0]")));
                }
            }
            SpaceMode::RegimeII { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.5) {
                    return Err(config(format!("regime (ii) alpha must lie in (0, 3/2), got {alpha}")));
                }
            }
        }
        Ok(Self { time, space, amplitude })
    }

    /// White in time, flat spectrum `(2π)^{−d}`: with the un-normalized
    /// inner product this makes `‖φ‖²_H = ∫φ² dx dt`.
    pub fn space_time_white(d: usize) -> Result<Self> {
        Self::new(
            TimeMode::White,
            SpaceMode::RegimeI { alphas: vec![0.0; d] },
            (2.0 * PI).powi(-(d as i32)),
        )
    }

    pub fn time(&self) -> TimeMode {
        self.time
    }

    pub fn space(&self) -> &SpaceMode {
        &self.space
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::new(self.time, self.space.clone(), amplitude)
    }

    pub fn dim(&self) -> usize {
        match &self.space {
            SpaceMode::RegimeI { alphas } => alphas.len(),
            SpaceMode::RegimeII { .. } => 1,
        }
    }

    pub fn is_white(&self) -> bool {
        matches!(self.time, TimeMode::White)
    }

    /// Time exponent, with white noise recorded as `α₀ = 1`.
    pub fn alpha0(&self) -> f64 {
        match self.time {
            TimeMode::White => 1.0,
            TimeMode::Riesz { alpha0 } => alpha0,
        }
    }

    pub fn regime(&self) -> Regime {
        match self.space {
            SpaceMode::RegimeI { .. } => Regime::I,
            SpaceMode::RegimeII { .. } => Regime::II,
        }
    }

    /// Spectral exponent sum: `Σα_i` (regime i) or `α` (regime ii).
    pub fn spectral_exponent(&self) -> f64 {
        match &self.space {
            SpaceMode::RegimeI { alphas } => alphas.iter().sum(),
            SpaceMode::RegimeII { alpha } => *alpha,
        }
    }

    pub fn exponents(&self) -> BoundExponents {
        let alpha = match &self.space {
            SpaceMode::RegimeI { alphas } => alphas.len() as f64 + alphas.iter().sum::<f64>(),
            SpaceMode::RegimeII { alpha } => *alpha,
        };
        BoundExponents {
            regime: self.regime(),
            alpha0: self.alpha0(),
            alpha,
        }
    }

    /// Coupled hypotheses: `2α₀ + α < 4` (regime i) or `α + α₀ < 3/2`
    /// (regime ii), with the exponent convention of [`BoundExponents`].
    pub fn check_hypotheses(&self) -> Result<()> {
        let e = self.exponents();
        match e.regime {
            Regime::I if !(2.0 * e.alpha0 + e.alpha < 4.0) => Err(config(format!(
                "regime (i) requires 2*alpha0 + alpha < 4 (alpha = d + sum alpha_i = {}), got {}",
                e.alpha,
                2.0 * e.alpha0 + e.alpha
            ))),
            Regime::II if !(e.alpha + e.alpha0 < 1.5) => Err(config(format!(
                "regime (ii) requires alpha + alpha0 < 3/2, got {}",
                e.alpha + e.alpha0
            ))),
            _ => Ok(()),
        }
    }

    /// `μ(ξ)`; `+∞` at a zero coordinate with a negative exponent.
    pub fn spectral_density(&self, xi: &[f64]) -> f64 {
        match &self.space {
            SpaceMode::RegimeI { alphas } => {
                self.amplitude * alphas.iter().zip(xi).map(|(a, x)| x.abs().powf(*a)).product::<f64>()
            }
            SpaceMode::RegimeII { alpha } => {
                let r = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
                self.amplitude * r.powf(*alpha)
            }
        }
    }

    /// Temporal covariance kernel `γ₀(τ)`.
    pub fn time_covariance(&self, tau: f64) -> Result<TimeCovariance> {
        match self.time {
            TimeMode::White if tau == 0.0 => Ok(TimeCovariance::Dirac),
            TimeMode::White => Ok(TimeCovariance::Regular(0.0)),
            TimeMode::Riesz { alpha0 } if tau == 0.0 => Err(Error::Singular(format!(
                "riesz time covariance |tau|^-{alpha0} is singular at tau = 0"
            ))),
            TimeMode::Riesz { alpha0 } => Ok(TimeCovariance::Regular(tau.abs().powf(-alpha0))),
        }
    }
}

/// Value of `γ₀(τ)`. White noise has no regular part and a Dirac mass at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeCovariance {
    Regular(f64),
    Dirac,
}

pub fn spectral_density(spec: &NoiseSpec, xi: &[f64]) -> f64 {
    spec.spectral_density(xi)
}

pub fn time_covariance(spec: &NoiseSpec, tau: f64) -> Result<TimeCovariance> {
    spec.time_covariance(tau)
}

/// Periodic space-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension (1 or 2).
    pub d: usize,
    /// Domain length per axis.
    pub length: f64,
    /// Grid points per axis (power of two, >= 64).
    pub points: usize,
    pub dt: f64,
    /// Time horizon.
    pub horizon: f64,
}

impl GridSpec {
    pub fn new(d: usize, length: f64, points: usize, dt: f64, horizon: f64) -> Result<Self> {
        let g = Self { d, length, points, dt, horizon };
        g.validate()?;
        Ok(g)
    }

    /// All violated constraints, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.d == 1 || self.d == 2) {
            v.push(format!("grid.d must be 1 or 2, got {}", self.d));
        }
        if !self.points.is_power_of_two() {
            v.push(format!("grid.points must be a power of two, got {}", self.points));
        }
        if self.points < 64 {
            v.push(format!("grid.points must be >= 64, got {}", self.points));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            v.push(format!("grid.horizon must be positive, got {}", self.horizon));
        }
        if !(self.dt > 0.0) {
            v.push(format!("grid.dt must be positive, got {}", self.dt));
        } else if self.horizon > 0.0 {
            if self.dt > self.horizon / 100.0 * (1.0 + 1e-12) {
                v.push(format!("grid.dt must be <= horizon/100, got {}", self.dt));
            }
            let steps = (self.horizon / self.dt).round();
            if (steps * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
                v.push(format!(
                    "grid.horizon {} is not an integer multiple of grid.dt {}",
                    self.horizon, self.dt
                ));
            }
        }
        if !(self.length > 8.0 * self.horizon.max(0.0).sqrt()) {
            v.push(format!(
                "grid.length must exceed 8*sqrt(horizon) = {}, got {}",
                8.0 * self.horizon.max(0.0).sqrt(),
                self.length
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn dx(&self) -> f64 {
        self.length / self.points as f64
    }

    /// Number of spatial sites `N^d`.
    pub fn sites(&self) -> usize {
        self.points.pow(self.d as u32)
    }

    /// Physical coordinates of site `index` (row-major).
    pub fn site_coords(&self, index: usize) -> Vec<f64> {
        let dx = self.dx();
        match self.d {
            1 => vec![index as f64 * dx],
            _ => vec![(index / self.points) as f64 * dx, (index % self.points) as f64 * dx],
        }
    }
}

fn check_dims(spec: &NoiseSpec, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if spec.dim() != grid.d {
        return Err(config(format!(
            "noise dimension {} does not match grid dimension {}",
            spec.dim(),
            grid.d
        )));
    }
    Ok(())
}

/// Spectral weight of one axis: `|ξ|^a` off the origin, the average of
/// `|ξ|^a` over the cell `|ξ| < π/L` at the origin.
fn axis_weight(xi: f64, a: f64, length: f64) -> f64 {
    if xi == 0.0 {
        (PI / length).powf(a) / (a + 1.0)
    } else {
        xi.abs().powf(a)
    }
}

/// Cell-corrected `μ(ξ_k)` for every mode, FFT order, row-major.
pub fn discrete_density(spec: &NoiseSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    check_dims(spec, grid)?;
    let k = fft::wavenumbers(grid.points, grid.length);
    let amp = spec.amplitude();
    let l = grid.length;
    Ok(match spec.space() {
        SpaceMode::RegimeI { alphas } if alphas.len() == 1 => {
            k.iter().map(|x| amp * axis_weight(*x, alphas[0], l)).collect()
        }
        SpaceMode::RegimeI { alphas } => {
            let mut out = Vec::with_capacity(grid.sites());
            for a in &k {
                let wa = axis_weight(*a, alphas[0], l);
                for b in &k {
                    out.push(amp * wa * axis_weight(*b, alphas[1], l));
                }
            }
            out
        }
        SpaceMode::RegimeII { alpha } => k.iter().map(|x| amp * axis_weight(*x, *alpha, l)).collect(),
    })
}

/// Eigenvalues of the circulant spatial covariance per unit time:
/// `λ_k = N^d (2π/L)^d μ̄(ξ_k)`. Their sum is `N^d` times the per-site
/// variance of a unit-time slice.
pub fn spectral_weights(spec: &NoiseSpec, grid: &GridSpec) -> Result<Vec<f64>> {
    let scale = grid.sites() as f64 * (2.0 * PI / grid.length).powi(grid.d as i32);
    Ok(discrete_density(spec, grid)?.into_iter().map(|m| m * scale).collect())
}

/// Cell-integrated Riesz covariance `Γ_jk = ∫_{cell j}∫_{cell k} |s−s'|^{−α₀}`.
pub fn riesz_cell_covariance(alpha0: f64, dt: f64, steps: usize) -> DMatrix<f64> {
    let c = 1.0 / ((1.0 - alpha0) * (2.0 - alpha0));
    let f = |u: f64| c * u.abs().powf(2.0 - alpha0);
    DMatrix::from_fn(steps, steps, |j, k| {
        let (a, b) = (j as f64 * dt, (j + 1) as f64 * dt);
        let (cc, d) = (k as f64 * dt, (k + 1) as f64 * dt);
        f(b - cc) + f(a - d) - f(b - d) - f(a - cc)
    })
}

/// Largest step count for which the dense temporal factorization is done.
pub const MAX_RIESZ_STEPS: usize = 4096;

/// Discretized noise increments `δW_k(x_j)`, one slice per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    /// `steps × sites`, time-major, row-major space.
    pub increments: Vec<f64>,
    pub seed: u64,
    pub spec: NoiseSpec,
    pub grid: GridSpec,
}

impl NoisePath {
    pub fn slice(&self, step: usize) -> &[f64] {
        let m = self.grid.sites();
        &self.increments[step * m..(step + 1) * m]
    }
}

/// Reusable synthesizer for one (spec, grid); clone one per worker.
#[derive(Clone)]
pub struct NoiseSynth {
    spec: NoiseSpec,
    grid: GridSpec,
    sqrt_weights: Vec<f64>,
    spectral: Spectral,
    buf: Vec<Complex64>,
    temporal_sqrt: Option<Arc<Vec<f64>>>,
}

impl NoiseSynth {
    pub fn new(spec: &NoiseSpec, grid: &GridSpec) -> Result<Self> {
        check_dims(spec, grid)?;
        let sqrt_weights = spectral_weights(spec, grid)?.into_iter().map(f64::sqrt).collect();
        let temporal_sqrt = match spec.time() {
            TimeMode::White => None,
            TimeMode::Riesz { alpha0 } => {
                let steps = grid.steps();
                if steps > MAX_RIESZ_STEPS {
                    return Err(Error::Capacity(format!(
                        "riesz time mode with {steps} steps exceeds the dense factorization limit {MAX_RIESZ_STEPS}"
                    )));
                }
                let gamma = riesz_cell_covariance(alpha0, grid.dt, steps);
                let eig = gamma.symmetric_eigen();
                let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
                let s = &eig.eigenvectors * root * eig.eigenvectors.transpose();
                // row-major copy
                let mut rows = Vec::with_capacity(steps * steps);
                for j in 0..steps {
                    for k in 0..steps {
                        rows.push(s[(j, k)]);
                    }
                }
                Some(Arc::new(rows))
            }
        };
        Ok(Self {
            spec: spec.clone(),
            grid: grid.clone(),
            sqrt_weights,
            spectral: Spectral::new(grid.d, grid.points),
            buf: vec![Complex64::default(); grid.sites()],
            temporal_sqrt,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// One spatial field with the unit-time covariance, scaled by `scale`.
    pub fn unit_field<R: Rng>(&mut self, rng: &mut R, scale: f64, out: &mut [f64]) {
        for v in self.buf.iter_mut() {
            *v = Complex64::new(rng.sample(StandardNormal), 0.0);
        }
        let sp = &mut self.spectral;
        sp.forward(&mut self.buf);
        for (v, w) in self.buf.iter_mut().zip(&self.sqrt_weights) {
            *v *= *w;
        }
        sp.inverse(&mut self.buf);
        for (o, v) in out.iter_mut().zip(&self.buf) {
            *o = scale * v.re;
        }
    }

    /// Increment over one step of white-in-time noise.
    pub fn white_increment<R: Rng>(&mut self, rng: &mut R, out: &mut [f64]) {
        let s = self.grid.dt.sqrt();
        self.unit_field(rng, s, out);
    }

    pub fn sample_path(&mut self, seed: u64) -> NoisePath {
        let steps = self.grid.steps();
        let m = self.grid.sites();
        let mut rng = rng::stream(rng::derive_seed(seed, Purpose::Noise), 0);
        let mut increments = vec![0.0; steps * m];
        match self.temporal_sqrt.clone() {
            None => {
                for k in 0..steps {
                    let out = &mut increments[k * m..(k + 1) * m];
                    self.white_increment(&mut rng, out);
                }
            }
            Some(root) => {
                let mut z = vec![0.0; steps * m];
                for k in 0..steps {
                    self.unit_field(&mut rng, 1.0, &mut z[k * m..(k + 1) * m]);
                }
                for j in 0..steps {
                    let out = &mut increments[j * m..(j + 1) * m];
                    let row = &root[j * steps..(j + 1) * steps];
                    for (k, s) in row.iter().enumerate() {
                        let zk = &z[k * m..(k + 1) * m];
                        out.iter_mut().zip(zk).for_each(|(o, v)| *o += s * v);
                    }
                }
            }
        }
        NoisePath {
            increments,
            seed,
            spec: self.spec.clone(),
            grid: self.grid.clone(),
        }
    }
}

/// Samples one noise path. Deterministic per `(spec, grid, seed)`.
pub fn sample_noise_path(spec: &NoiseSpec, grid: &GridSpec, seed: u64) -> Result<NoisePath> {
    Ok(NoiseSynth::new(spec, grid)?.sample_path(seed))
}

/// Spatial test functions used by probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// Heat kernel `p_w(x − center)`.
    GaussianBump { width: f64, center: Vec<f64> },
    /// Indicator of the box `[lo, hi)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::GaussianBump { width, center } => {
                let shifted: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                heat_kernel(*width, &shifted).unwrap_or(0.0)
            }
            TestFunction::Box { lo, hi } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= *l && *v < *h);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Space-time probe `φ(s, x) = 1_{[t_start, t_end]}(s) · f(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub t_start: f64,
    pub t_end: f64,
    pub space: TestFunction,
}

impl Probe {
    /// Discrete pairing `W(φ) ≈ Σ_k Σ_j δW_k(x_j) f(x_j) Δx^d` over the steps
    /// whose cells lie inside the time window.
    pub fn pair(&self, path: &NoisePath) -> f64 {
        let g = &path.grid;
        let weights = self.site_weights(g);
        let eps = 1e-9 * g.dt;
        (0..g.steps())
            .filter(|k| {
                let (a, b) = (*k as f64 * g.dt, (*k + 1) as f64 * g.dt);
                a >= self.t_start - eps && b <= self.t_end + eps
            })
            .map(|k| path.slice(k).iter().zip(&weights).map(|(w, f)| w * f).sum::<f64>())
            .sum()
    }

    fn site_weights(&self, g: &GridSpec) -> Vec<f64> {
        let cell = g.dx().powi(g.d as i32);
        (0..g.sites()).map(|j| self.space.eval(&g.site_coords(j)) * cell).collect()
    }
}

/// `‖1_{[0,T]} ⊗ p_w‖²_H`, the variance of the noise paired with a Gaussian
/// bump of width `w` over `[0, T]`.
pub fn analytic_test_variance(spec: &NoiseSpec, horizon: f64, width: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(width > 0.0) {
        return Err(domain(format!("bump width must be positive, got {width}")));
    }
    let time = match spec.time() {
        TimeMode::White => horizon,
        TimeMode::Riesz { alpha0 } => {
            2.0 * horizon.powf(2.0 - alpha0) / ((1.0 - alpha0) * (2.0 - alpha0))
        }
    };
    // ∫ e^{−w|ξ|²} μ(ξ) dξ, one Gamma factor per axis.
    let axis = |a: f64| gamma(0.5 * (a + 1.0)) / width.powf(0.5 * (a + 1.0));
    let space = match spec.space() {
        SpaceMode::RegimeI { alphas } => alphas.iter().map(|a| axis(*a)).product::<f64>(),
        SpaceMode::RegimeII { alpha } => axis(*alpha),
    };
    Ok(time * spec.amplitude() * space)
}

/// Exact variance of the discrete pairing of a synthesized path with a probe
/// spanning the whole horizon: the finite-domain, finite-resolution
/// counterpart of [`analytic_test_variance`].
pub fn discrete_probe_variance(spec: &NoiseSpec, grid: &GridSpec, space: &TestFunction) -> Result<f64> {
    let lambda = spectral_weights(spec, grid)?;
    let steps = grid.steps();
    let time = match spec.time() {
        TimeMode::White => grid.dt * steps as f64,
        TimeMode::Riesz { alpha0 } => riesz_cell_covariance(alpha0, grid.dt, steps).sum(),
    };
    let cell = grid.dx().powi(grid.d as i32);
    let mut buf: Vec<Complex64> = (0..grid.sites())
        .map(|j| Complex64::new(space.eval(&grid.site_coords(j)) * cell, 0.0))
        .collect();
    Spectral::new(grid.d, grid.points).forward(&mut buf);
    let n = grid.sites() as f64;
    Ok(time * buf.iter().zip(&lambda).map(|(p, l)| p.norm_sqr() * l).sum::<f64>() / n)
}

/// Probe pairings of `replicas` independent paths, `[probe][replica]`.
/// Paths are synthesized and dropped one at a time; replica `r` uses seed
/// `replica_seed(master_seed, r)`.
pub fn probe_ensemble(
    spec: &NoiseSpec,
    grid: &GridSpec,
    master_seed: u64,
    replicas: usize,
    probes: &[Probe],
) -> Result<Vec<Vec<f64>>> {
    let synth = NoiseSynth::new(spec, grid)?;
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || synth.clone(),
            |s, r| {
                let path = s.sample_path(rng::replica_seed(master_seed, r as u64));
                probes.iter().map(|p| p.pair(&path)).collect()
            },
        )
        .collect();
    Ok((0..probes.len()).map(|i| rows.iter().map(|row| row[i]).collect()).collect())
}

/// Sample covariance matrix of probe pairings with jackknife errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTable {
    /// `[i][j] = (covariance, stderr)`
    pub entries: Vec<Vec<(f64, f64)>>,
    pub replicas: usize,
}

pub fn covariance_from_pairings(values: &[Vec<f64>]) -> Result<CovarianceTable> {
    let replicas = values.first().map(|v| v.len()).unwrap_or(0);
    if replicas < 2 {
        return Err(Error::Statistics(format!("need at least 2 replicas, got {replicas}")));
    }
    let entries = values
        .iter()
        .map(|a| values.iter().map(|b| jackknife_covariance(a, b)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(CovarianceTable { entries, replicas })
}

pub fn empirical_covariance(paths: &[NoisePath], probes: &[Probe]) -> Result<CovarianceTable> {
    if paths.len() < 2 {
        return Err(Error::Statistics(format!("need at least 2 replicas, got {}", paths.len())));
    }
    let values: Vec<Vec<f64>> = probes
        .iter()
        .map(|p| paths.iter().map(|path| p.pair(path)).collect())
        .collect();
    covariance_from_pairings(&values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseManifest {
    pub format: String,
    pub spec: NoiseSpec,
    pub grid: GridSpec,
    pub seeds: Vec<u64>,
    /// `[replicas, steps, points, (points)]`
    pub shape: Vec<usize>,
    pub layout: String,
    pub dtype: String,
}

pub const NOISE_FORMAT: &str = "pamlab-noise-v1";

/// Writes `<stem>.bin` (little-endian f64, replica-major, then time-major,
/// row-major space) and `<stem>.json` (manifest).
pub fn write_noise_paths(dir: &Path, stem: &str, paths: &[NoisePath]) -> Result<()> {
    let first = paths.first().ok_or_else(|| config("no paths to write"))?;
    if paths.iter().any(|p| p.grid != first.grid || p.spec != first.spec) {
        return Err(config("paths in one file must share spec and grid"));
    }
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(format!("{stem}.bin")))?);
    for p in paths {
        for v in &p.increments {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let g = &first.grid;
    let mut shape = vec![paths.len(), g.steps()];
    shape.extend(std::iter::repeat_n(g.points, g.d));
    let manifest = NoiseManifest {
        format: NOISE_FORMAT.into(),
        spec: first.spec.clone(),
        grid: g.clone(),
        seeds: paths.iter().map(|p| p.seed).collect(),
        shape,
        layout: "replica, time step, space (row-major)".into(),
        dtype: "f64 little-endian".into(),
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_noise_paths(dir: &Path, stem: &str) -> Result<Vec<NoisePath>> {
    let manifest: NoiseManifest = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    if manifest.format != NOISE_FORMAT {
        return Err(config(format!("unknown noise format {}", manifest.format)));
    }
    let per = manifest.grid.steps() * manifest.grid.sites();
    let mut r = BufReader::new(fs::File::open(dir.join(format!("{stem}.bin")))?);
    let mut out = Vec::with_capacity(manifest.seeds.len());
    let mut bytes = [0u8; 8];
    for seed in &manifest.seeds {
        let mut increments = Vec::with_capacity(per);
        for _ in 0..per {
            r.read_exact(&mut bytes)?;
            increments.push(f64::from_le_bytes(bytes));
        }
        out.push(NoisePath {
            increments,
            seed: *seed,
            spec: manifest.spec.clone(),
            grid: manifest.grid.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_stderr;

    fn spec(time: TimeMode, space: SpaceMode) -> NoiseSpec {
        NoiseSpec::new(time, space, 1.0).unwrap()
    }

    fn flat() -> SpaceMode {
        SpaceMode::RegimeI { alphas: vec![0.0] }
    }

    fn grid() -> GridSpec {
        GridSpec::new(1, 16.0, 128, 0.01, 1.0).unwrap()
    }

    fn bump(g: &GridSpec) -> TestFunction {
        TestFunction::GaussianBump { width: 1.0, center: vec![g.length / 2.0] }
    }

    #[test]
    fn density_and_time_covariance_examples() {
        let s = spec(TimeMode::White, flat());
        assert_eq!(s.spectral_density(&[3.7]), 1.0);
        let ii = spec(TimeMode::White, SpaceMode::RegimeII { alpha: 0.5 });
        assert_eq!(ii.spectral_density(&[4.0]), 2.0);
        let neg = spec(TimeMode::White, SpaceMode::RegimeI { alphas: vec![-0.5] });
        assert_eq!(neg.spectral_density(&[4.0]), 0.5);
        let r = spec(TimeMode::Riesz { alpha0: 0.5 }, flat());
        assert_eq!(r.time_covariance(4.0).unwrap(), TimeCovariance::Regular(0.5));
        assert_eq!(r.time_covariance(-4.0).unwrap(), TimeCovariance::Regular(0.5));
        assert!(matches!(r.time_covariance(0.0), Err(Error::Singular(_))));
        assert_eq!(s.time_covariance(1.5).unwrap(), TimeCovariance::Regular(0.0));
        assert_eq!(s.time_covariance(0.0).unwrap(), TimeCovariance::Dirac);
    }

    #[test]
    fn construction_and_hypotheses() {
        assert!(NoiseSpec::new(TimeMode::Riesz { alpha0: 1.0 }, flat(), 1.0).is_err());
        assert!(NoiseSpec::new(TimeMode::White, SpaceMode::RegimeI { alphas: vec![-1.0] }, 1.0).is_err());
        assert!(NoiseSpec::new(TimeMode::White, SpaceMode::RegimeI { alphas: vec![0.1] }, 1.0).is_err());
        assert!(NoiseSpec::new(TimeMode::White, SpaceMode::RegimeI { alphas: vec![0.0; 3] }, 1.0).is_err());
        assert!(NoiseSpec::new(TimeMode::White, SpaceMode::RegimeII { alpha: 1.5 }, 1.0).is_err());
        assert!(NoiseSpec::new(TimeMode::White, flat(), -1.0).is_err());
        // White in space and time: alpha = d.
        let w1 = NoiseSpec::space_time_white(1).unwrap();
        assert_eq!(w1.exponents().alpha, 1.0);
        assert!(w1.check_hypotheses().is_ok());
        assert!(NoiseSpec::space_time_white(2).unwrap().check_hypotheses().is_err());
        let ok2 = spec(TimeMode::White, SpaceMode::RegimeI { alphas: vec![-0.5, -0.6] });
        assert!(ok2.check_hypotheses().is_ok());
        assert!(spec(TimeMode::White, SpaceMode::RegimeII { alpha: 0.25 }).check_hypotheses().is_ok());
        assert!(spec(TimeMode::White, SpaceMode::RegimeII { alpha: 0.5 }).check_hypotheses().is_err());
        assert!(spec(TimeMode::Riesz { alpha0: 0.5 }, SpaceMode::RegimeII { alpha: 0.9 })
            .check_hypotheses()
            .is_ok());
    }

    #[test]
    fn serde_roundtrip_validates() {
        let s = spec(TimeMode::Riesz { alpha0: 0.3 }, SpaceMode::RegimeII { alpha: 0.7 });
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<NoiseSpec>(&j).unwrap(), s);
        let bad = r#"{"time":{"mode":"riesz","alpha0":2.0},"space":{"regime":"i","alphas":[0.0]}}"#;
        assert!(serde_json::from_str::<NoiseSpec>(bad).is_err());
    }

    #[test]
    fn analytic_variance_examples() {
        let pi_sqrt = PI.sqrt();
        let w = spec(TimeMode::White, flat());
        assert!((analytic_test_variance(&w, 1.0, 1.0).unwrap() - 1.772454).abs() < 1e-6);
        let two = analytic_test_variance(&w, 2.0, 1.0).unwrap();
        assert!((two - 2.0 * pi_sqrt).abs() < 1e-12);
        let r = spec(TimeMode::Riesz { alpha0: 0.5 }, flat());
        let v = analytic_test_variance(&r, 1.0, 1.0).unwrap();
        assert!((v - 8.0 / 3.0 * pi_sqrt).abs() < 1e-12);
        assert!((v - 4.7265).abs() < 1e-4);
        assert!(analytic_test_variance(&w, 0.0, 1.0).is_err());
    }

    #[test]
    fn riesz_cell_covariance_sums_to_double_integral() {
        // ∫₀¹∫₀¹ |s−s'|^{−1/2} = 8/3.
        let g = riesz_cell_covariance(0.5, 0.01, 100);
        assert!((g.sum() - 8.0 / 3.0).abs() < 1e-10);
        assert!(g.clone().symmetric_eigen().eigenvalues.iter().all(|v| *v > -1e-12));
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 16.0, 100, 0.01, 1.0).is_err());
        assert!(GridSpec::new(1, 16.0, 32, 0.01, 1.0).is_err());
        assert!(GridSpec::new(1, 7.0, 128, 0.01, 1.0).is_err());
        assert!(GridSpec::new(1, 16.0, 128, 0.02, 1.0).is_err());
        assert!(GridSpec::new(3, 16.0, 128, 0.01, 1.0).is_err());
        let g = GridSpec { d: 1, length: 1.0, points: 100, dt: 0.5, horizon: 1.0 };
        assert!(g.violations().len() >= 3);
        assert_eq!(grid().steps(), 100);
    }

    #[test]
    fn riesz_capacity_limit() {
        let g = GridSpec::new(1, 16.0, 64, 1.0 / 5000.0, 1.0).unwrap();
        let r = spec(TimeMode::Riesz { alpha0: 0.5 }, flat());
        assert!(matches!(sample_noise_path(&r, &g, 1), Err(Error::Capacity(_))));
    }

    #[test]
    fn synthesis_is_deterministic() {
        for time in [TimeMode::White, TimeMode::Riesz { alpha0: 0.4 }] {
            let s = spec(time, SpaceMode::RegimeI { alphas: vec![-0.3] });
            let a = sample_noise_path(&s, &grid(), 42).unwrap();
            let b = sample_noise_path(&s, &grid(), 42).unwrap();
            let c = sample_noise_path(&s, &grid(), 43).unwrap();
            assert!(a.increments.iter().zip(&b.increments).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_ne!(a.increments, c.increments);
        }
    }

    #[test]
    fn parseval_consistency() {
        for space in [flat(), SpaceMode::RegimeI { alphas: vec![-0.5, -0.2] }, SpaceMode::RegimeII { alpha: 0.5 }] {
            let s = spec(TimeMode::White, space);
            let g = GridSpec::new(s.dim(), 16.0, 64, 0.01, 1.0).unwrap();
            let lambda = spectral_weights(&s, &g).unwrap();
            // Impulse response of the synthesis filter; its energy is the
            // per-site variance of a unit-time slice.
            let mut h: Vec<Complex64> = lambda.iter().map(|l| Complex64::new(l.sqrt(), 0.0)).collect();
            Spectral::new(g.d, g.points).inverse(&mut h);
            let var: f64 = h.iter().map(|v| v.norm_sqr()).sum();
            let total: f64 = lambda.iter().sum();
            assert!((total - var * g.sites() as f64).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn zero_mode_uses_cell_average() {
        let s = spec(TimeMode::White, SpaceMode::RegimeI { alphas: vec![-0.5] });
        let g = grid();
        let mu = discrete_density(&s, &g).unwrap();
        let cell = PI / g.length;
        assert!((mu[0] - cell.powf(-0.5) / 0.5).abs() < 1e-12);
        assert!(mu[0].is_finite());
    }

    #[test]
    fn discrete_variance_tracks_analytic() {
        let g = grid();
        for time in [TimeMode::White, TimeMode::Riesz { alpha0: 0.5 }] {
            for space in [flat(), SpaceMode::RegimeI { alphas: vec![-0.5] }, SpaceMode::RegimeII { alpha: 0.5 }] {
                let s = spec(time, space);
                let exact = analytic_test_variance(&s, 1.0, 1.0).unwrap();
                let disc = discrete_probe_variance(&s, &g, &bump(&g)).unwrap();
                assert!((disc / exact - 1.0).abs() < 0.02, "{time:?} {:?}: {disc} vs {exact}", s.space());
            }
        }
    }

    #[test]
    fn ensemble_statistics() {
        let g = grid();
        let s = spec(TimeMode::White, flat());
        let whole = Probe { t_start: 0.0, t_end: 1.0, space: bump(&g) };
        let left = Probe { t_start: 0.0, t_end: 1.0, space: TestFunction::Box { lo: vec![2.0], hi: vec![5.0] } };
        let right = Probe { t_start: 0.0, t_end: 1.0, space: TestFunction::Box { lo: vec![9.0], hi: vec![12.0] } };
        let paths: Vec<NoisePath> = (0..400).map(|r| sample_noise_path(&s, &g, rng::replica_seed(5, r)).unwrap()).collect();
        let table = empirical_covariance(&paths, &[whole.clone(), left, right]).unwrap();
        let (v, se) = table.entries[0][0];
        let exact = analytic_test_variance(&s, 1.0, 1.0).unwrap();
        assert!((v - exact).abs() <= 3.0 * se + 0.02 * exact, "{v} ± {se} vs {exact}");
        let (c, cse) = table.entries[1][2];
        assert!(c.abs() <= 3.0 * cse, "{c} ± {cse}");

        // Pointwise means and lag-one correlation of slices.
        let site: Vec<f64> = paths.iter().map(|p| p.slice(50)[17]).collect();
        let (m, mse) = mean_stderr(&site).unwrap();
        assert!(m.abs() <= 3.0 * mse);
        let lag: Vec<f64> = paths.iter().map(|p| p.slice(50)[17] * p.slice(51)[17]).collect();
        let (l, lse) = mean_stderr(&lag).unwrap();
        assert!(l.abs() <= 3.0 * lse);

        let doubled = s.with_amplitude(2.0).unwrap();
        let a = probe_ensemble(&s, &g, 8, 300, std::slice::from_ref(&whole)).unwrap();
        let b = probe_ensemble(&doubled, &g, 8, 300, std::slice::from_ref(&whole)).unwrap();
        let va = covariance_from_pairings(&a).unwrap().entries[0][0].0;
        let vb = covariance_from_pairings(&b).unwrap().entries[0][0].0;
        // Same seeds: the doubled field is √2 times the original.
        assert!((vb / va - 2.0).abs() < 1e-9);
        assert!(empirical_covariance(&paths[..1], &[whole]).is_err());
    }

    #[test]
    fn persistence_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(TimeMode::White, SpaceMode::RegimeI { alphas: vec![-0.2, 0.0] });
        let g = GridSpec::new(2, 16.0, 64, 0.01, 1.0).unwrap();
        let paths: Vec<NoisePath> = (0..2).map(|r| sample_noise_path(&s, &g, r).unwrap()).collect();
        write_noise_paths(dir.path(), "noise", &paths).unwrap();
        let bytes = fs::metadata(dir.path().join("noise.bin")).unwrap().len();
        assert_eq!(bytes as usize, 2 * 100 * 64 * 64 * 8);
        let back = read_noise_paths(dir.path(), "noise").unwrap();
        assert_eq!(back, paths);
    }
}
