//! Special functions and integral identities: heat kernel, simplex
//! (Dirichlet) integrals, Mittag-Leffler type series and the Gaussian
//! smoothing integral against a product spectral density.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};
use crate::noise::{NoiseSpec, SpaceMode};
use crate::quadrature;
use crate::rng::{self, Purpose};
use crate::stats::MeanAccumulator;

/// Gaussian kernel of `½Δ`: `p_t(x) = (2πt)^{−d/2} exp(−|x|²/(2t))`.
pub fn heat_kernel(t: f64, x: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok((2.0 * PI * t).powf(-0.5 * d) * (-r2 / (2.0 * t)).exp())
}

/// Time horizon and gap exponents of `J_m(t, α) = ∫_{T_m(t)} ∏ (r_i − r_{i−1})^{α_i} dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexParams {
    t: f64,
    alphas: Vec<f64>,
}

impl SimplexParams {
    pub fn new(t: f64, alphas: Vec<f64>) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(domain(format!("simplex horizon must be positive, got {t}")));
        }
        if alphas.is_empty() {
            return Err(domain("simplex dimension m must be at least 1"));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a > -1.0 && **a < 1.0)) {
            return Err(domain(format!(
                "gap exponent {a} outside (-1, 1); the simplex integral diverges or is out of range"
            )));
        }
        Ok(Self { t, alphas })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn m(&self) -> usize {
        self.alphas.len()
    }

    /// `|α| + m`, the homogeneity degree in `t`.
    pub fn degree(&self) -> f64 {
        self.alphas.iter().sum::<f64>() + self.m() as f64
    }
}

/// Exact value through the Dirichlet identity
/// `J_m(t, α) = t^{|α|+m} ∏Γ(α_i+1) / Γ(|α|+m+1)`.
pub fn simplex_integral_exact(p: &SimplexParams) -> f64 {
    let deg = p.degree();
    let log_num: f64 = p.alphas.iter().map(|a| ln_gamma(a + 1.0)).sum();
    (deg * p.t.ln() + log_num - ln_gamma(deg + 1.0)).exp()
}

/// Monte Carlo estimate of `J_m(t, α)` with its standard error.
///
/// Ordered points are built gap by gap: gap `i` is drawn with density
/// proportional to `g^{α_i}` on the part of `(0, t)` not yet used, so each
/// sample's weight `∏ R_i^{α_i+1}/(α_i+1)` is bounded by `∏ t^{α_i+1}/(α_i+1)`.
pub fn simplex_integral_mc(p: &SimplexParams, samples: u64, seed: u64) -> Result<(f64, f64)> {
    if samples < 1000 {
        return Err(domain(format!("simplex Monte Carlo needs >= 1000 samples, got {samples}")));
    }
    const BATCH: u64 = 1 << 14;
    let batches = samples.div_ceil(BATCH);
    let base = rng::derive_seed(seed, Purpose::Simplex);
    let parts: Vec<MeanAccumulator> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(base, b);
            let n = BATCH.min(samples - b * BATCH);
            let mut acc = MeanAccumulator::default();
            for _ in 0..n {
                let mut remaining = p.t;
                let mut weight = 1.0;
                for &a in &p.alphas {
                    let e = a + 1.0;
                    weight *= remaining.powf(e) / e;
                    let u: f64 = rng.random();
                    remaining -= remaining * u.powf(1.0 / e);
                }
                acc.push(weight);
            }
            acc
        })
        .collect();
    let total = parts.into_iter().fold(MeanAccumulator::default(), |a, b| a.merge(&b));
    Ok((total.mean(), total.stderr()))
}

/// Upper bound `c^m t^{|α|+m} / Γ(|α|+m+1)`.
pub fn simplex_integral_bound(p: &SimplexParams, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(domain(format!("bound constant must be positive, got {c}")));
    }
    let deg = p.degree();
    Ok((p.m() as f64 * c.ln() + deg * p.t.ln() - ln_gamma(deg + 1.0)).exp())
}

fn check_ml_args(a: f64, z: f64, tol: f64) -> Result<()> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(domain(format!("Mittag-Leffler order must be in (0, 1], got {a}")));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(domain(format!("Mittag-Leffler argument must be finite and >= 0, got {z}")));
    }
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// `Σ_{n≥0} z^n / (n!)^a`.
///
/// Summation stops once three consecutive terms are below `tol` and the
/// geometric remainder bound `term · r/(1−r)` (valid once the term ratio
/// `r = z/(n+1)^a` is below one, since it then keeps decreasing) is below
/// `tol` as well. Overflows to `+∞` for large arguments; use
/// [`ln_mittag_leffler_sum`] there.
pub fn mittag_leffler_sum(a: f64, z: f64, tol: f64) -> Result<f64> {
    check_ml_args(a, z, tol)?;
    if z == 0.0 {
        return Ok(1.0);
    }
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut small = 0;
    let mut n = 0u64;
    loop {
        n += 1;
        term *= z / (n as f64).powf(a);
        sum += term;
        if !sum.is_finite() {
            return Ok(f64::INFINITY);
        }
        let ratio = z / ((n + 1) as f64).powf(a);
        small = if term < tol { small + 1 } else { 0 };
        if small >= 3 && ratio < 1.0 && term * ratio / (1.0 - ratio) < tol {
            return Ok(sum);
        }
    }
}

/// Natural log of `Σ_{n≥0} z^n / (n!)^a`, truncated at relative accuracy
/// `rel_tol`. Safe for arguments where the sum itself overflows.
///
/// Large arguments are summed outward from the largest term
/// `n* = ⌊z^{1/a}⌋`, whose log comes from `lnΓ`; the result then carries
/// the absolute error of `lnΓ(n*+1)`, about `1e-16 · n* ln n*`.
pub fn ln_mittag_leffler_sum(a: f64, z: f64, rel_tol: f64) -> Result<f64> {
    check_ml_args(a, z, rel_tol)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    let lz = z.ln();
    let peak = z.powf(1.0 / a).floor();
    if peak < 1024.0 {
        return Ok(ln_ml_forward(a, lz, z, rel_tol));
    }
    // Terms relative to the peak term.
    let ln_peak = peak * lz - a * ln_gamma(peak + 1.0);
    let mut sum = 1.0_f64;
    let (mut n, mut lt) = (peak, 0.0_f64);
    loop {
        n += 1.0;
        lt += lz - a * n.ln();
        let term = lt.exp();
        sum += term;
        let ratio = z / (n + 1.0).powf(a);
        if ratio < 1.0 && term * ratio / (1.0 - ratio) < rel_tol * sum {
            break;
        }
    }
    // Below the peak terms increase with n, so n·term bounds the rest.
    let (mut n, mut lt) = (peak, 0.0_f64);
    while n > 0.0 {
        lt += a * n.ln() - lz;
        n -= 1.0;
        let term = lt.exp();
        sum += term;
        if n * term < rel_tol * sum {
            break;
        }
    }
    Ok(ln_peak + sum.ln())
}

fn ln_ml_forward(a: f64, lz: f64, z: f64, rel_tol: f64) -> f64 {
    let ln_tol = rel_tol.ln();
    let mut ln_term = 0.0_f64;
    let mut ln_sum = 0.0_f64;
    let mut n = 0u64;
    loop {
        n += 1;
        ln_term += lz - a * (n as f64).ln();
        ln_sum = if ln_term > ln_sum {
            ln_term + (ln_sum - ln_term).exp().ln_1p()
        } else {
            ln_sum + (ln_term - ln_sum).exp().ln_1p()
        };
        let ratio = z / ((n + 1) as f64).powf(a);
        if ratio < 1.0 {
            let ln_rem = ln_term + ratio.ln() - (1.0 - ratio).ln();
            if ln_rem < ln_tol + ln_sum {
                return ln_sum;
            }
        }
    }
}

/// `∫_{ℝ^d} e^{−2s|ξ−ζ|²} |ξ−ζ|^β μ(ξ) dξ` for a regime-(i) density
/// `μ(ξ) = amplitude · ∏|ξ_i|^{α_i}`.
///
/// Each axis is integrated over `|ξ_i − ζ_i| ≤ 10/√s` with breakpoints at the
/// origin and at `ζ_i`; the Gaussian tail beyond is below `e^{−200}`.
pub fn smoothing_integral(s: f64, beta: f64, zeta: &[f64], spec: &NoiseSpec) -> Result<f64> {
    if !(s > 0.0) {
        return Err(domain(format!("smoothing integral needs s > 0, got {s}")));
    }
    if !(beta >= 0.0) {
        return Err(domain(format!("smoothing integral needs beta >= 0, got {beta}")));
    }
    let alphas = match spec.space() {
        SpaceMode::RegimeI { alphas } => alphas,
        SpaceMode::RegimeII { .. } => {
            return Err(domain("smoothing integral is defined for regime (i) densities"))
        }
    };
    if zeta.len() != alphas.len() {
        return Err(domain(format!(
            "zeta has dimension {}, spec has dimension {}",
            zeta.len(),
            alphas.len()
        )));
    }
    const TOL: f64 = 1e-12;
    let radius = 10.0 / s.sqrt();
    let amp = spec.amplitude();
    let value = match alphas.len() {
        1 => quadrature::line_with_origin_weight(
            |x| {
                let r = (x - zeta[0]).abs();
                (-2.0 * s * r * r).exp() * r.powf(beta)
            },
            alphas[0],
            zeta[0],
            radius,
            TOL,
        ),
        2 if beta == 0.0 => (0..2)
            .map(|i| {
                quadrature::line_with_origin_weight(
                    |x| (-2.0 * s * (x - zeta[i]).powi(2)).exp(),
                    alphas[i],
                    zeta[i],
                    radius,
                    TOL,
                )
            })
            .product(),
        2 => quadrature::line_with_origin_weight(
            |x0| {
                let d0 = x0 - zeta[0];
                quadrature::line_with_origin_weight(
                    |x1| {
                        let r2 = d0 * d0 + (x1 - zeta[1]).powi(2);
                        (-2.0 * s * r2).exp() * r2.powf(0.5 * beta)
                    },
                    alphas[1],
                    zeta[1],
                    radius,
                    1e-10,
                )
            },
            alphas[0],
            zeta[0],
            radius,
            1e-10,
        ),
        d => return Err(domain(format!("dimension {d} not supported (d must be 1 or 2)"))),
    };
    Ok(amp * value)
}
