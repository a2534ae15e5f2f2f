//! Built-in oracle checks: closed forms and fast statistical comparisons
//! across specfn, noise and chaos.

use std::f64::consts::PI;

use pamlab::chaos::{self, BoundConstants, InitialCondition, McParams};
use pamlab::error::Error;
use pamlab::holder::{self, IncrementMode, Lag};
use pamlab::noise::{self, GridSpec, NoiseSpec, Probe, SpaceMode, TestFunction, TimeMode};
use pamlab::specfn::{self, SimplexParams};
use pamlab::stats;

use crate::commands::write_csv;
use crate::config::{ExperimentConfig, SelftestBlock};
use crate::exit;

struct Check {
    name: String,
    observed: f64,
    expected: f64,
    tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, observed: f64, expected: f64, tolerance: f64) -> Self {
        Self { name: name.into(), observed, expected, tolerance }
    }

    fn pass(&self) -> bool {
        (self.observed - self.expected).abs() <= self.tolerance
    }
}

fn checks(cfg: &ExperimentConfig, opts: &SelftestBlock) -> Result<Vec<Check>, Error> {
    let seed = cfg.master_seed;
    let mut out = Vec::new();

    out.push(Check::new("heat_kernel t=1 x=0", specfn::heat_kernel(1.0, &[0.0])?, 1.0 / (2.0 * PI).sqrt(), 1e-14));

    // Dirichlet identity: J_2(1; -1/2, -1/2) = Γ(1/2)²/Γ(2) = π.
    let p = SimplexParams::new(1.0, vec![-0.5, -0.5])?;
    out.push(Check::new("simplex_integral_exact m=2", specfn::simplex_integral_exact(&p), PI, 1e-12));
    for (i, (t, alphas)) in [(1.0, vec![0.0]), (2.0, vec![-0.5, 0.3]), (0.5, vec![0.2, -0.7, 0.1])]
        .into_iter()
        .enumerate()
    {
        let p = SimplexParams::new(t, alphas)?;
        let (est, se) = specfn::simplex_integral_mc(&p, opts.samples, seed.wrapping_add(i as u64))?;
        let exact = specfn::simplex_integral_exact(&p);
        // m = 1 has zero stderr; allow for rounding.
        out.push(Check::new(
            format!("simplex_integral_mc m={} (3 stderr)", p.m()),
            est,
            exact,
            3.0 * se + 1e-12 * exact.abs(),
        ));
    }

    out.push(Check::new("mittag_leffler_sum a=1 z=2", specfn::mittag_leffler_sum(1.0, 2.0, 1e-15)?, 2f64.exp(), 1e-12));
    out.push(Check::new(
        "ln_mittag_leffler_sum a=1 z=50",
        specfn::ln_mittag_leffler_sum(1.0, 50.0, 1e-15)?,
        50.0,
        1e-12,
    ));

    // Smoothing integral at the origin: s^{-(d+Σα+β)/2} exactly.
    let flat = NoiseSpec::new(TimeMode::White, SpaceMode::RegimeI { alphas: vec![-0.5] }, 1.0)?;
    let ratio = specfn::smoothing_integral(4.0, 0.5, &[0.0], &flat)? / specfn::smoothing_integral(1.0, 0.5, &[0.0], &flat)?;
    out.push(Check::new("smoothing_integral slope d=1 a=-1/2 b=1/2", ratio.log(4.0), -0.5, 1e-8));

    let white = NoiseSpec::space_time_white(1)?;
    out.push(Check::new(
        "analytic_test_variance white w=1",
        noise::analytic_test_variance(&white, 1.0, 1.0)?,
        PI.sqrt() / (2.0 * PI),
        1e-14,
    ));
    let grid = GridSpec::new(1, 16.0, 128, 0.01, 1.0)?;
    let bump = TestFunction::GaussianBump { width: 1.0, center: vec![8.0] };
    let riesz = NoiseSpec::new(TimeMode::Riesz { alpha0: 0.5 }, SpaceMode::RegimeI { alphas: vec![-0.5] }, 1.0)?;
    for (label, spec) in [("white", &white), ("riesz 1/2 |xi|^-1/2", &riesz)] {
        let exact = noise::analytic_test_variance(spec, 1.0, 1.0)?;
        out.push(Check::new(
            format!("discrete_probe_variance {label} (2%)"),
            noise::discrete_probe_variance(spec, &grid, &bump)?,
            exact,
            0.02 * exact,
        ));
        let probe = Probe { t_start: 0.0, t_end: 1.0, space: bump.clone() };
        let vals = noise::probe_ensemble(spec, &grid, seed, opts.replicas, std::slice::from_ref(&probe))?;
        let (var, se) = stats::jackknife_covariance(&vals[0], &vals[0])?;
        out.push(Check::new(format!("sampled probe variance {label} (3 stderr + 2%)"), var, exact, 3.0 * se + 0.02 * exact));
    }

    for n in 1..=2 {
        let exact = chaos::white_chaos_variance(n, 1.0);
        let mc = McParams { samples: opts.samples, seed: seed.wrapping_add(10 + n as u64) };
        let e = chaos::chaos_variance(n, 1.0, &[0.0], &white, &InitialCondition::ConstantOne, &mc)?;
        out.push(Check::new(
            format!("chaos_variance white n={n} t=1 (3 stderr or 2%)"),
            e.variance,
            exact,
            (3.0 * e.stderr).max(0.02 * exact),
        ));
    }
    out.push(Check::new("white second moment t=0.25", chaos::white_second_moment(0.25), 1.3587, 1e-4));
    out.push(Check::new(
        "chaos_variance_bound white n=2 c=1",
        chaos::chaos_variance_bound(2, 1.0, &white, &BoundConstants::default())?,
        0.5f64.sqrt(),
        1e-14,
    ));
    out.push(Check::new("predicted_region white B", holder::predicted_region(&white).b, 0.5, 1e-14));

    // Fit on an exact fractional Brownian sheet.
    let sheet_grid = GridSpec::new(1, 16.0, 64, 2f64.powi(-10), 1.0)?;
    let times: Vec<f64> = (0..=6).map(|k| 0.5 + 2f64.powi(-8 + k)).chain([0.5]).collect();
    let ens = holder::synthetic_fbm_sheet(0.3, 0.6, &times, &sheet_grid, 200, seed)?;
    let lags: Vec<Lag> = (-8..=-2).map(|k| Lag { dt: 2f64.powi(k), dx: 0.0 }).collect();
    let fit = holder::fit_exponents(&holder::increment_moments(&ens, &lags, IncrementMode::TimeMarginal, 2)?)?;
    out.push(Check::new("time exponent of fBm sheet h=0.3 (ci + 0.02)", fit.alpha0_hat, 0.3, fit.ci.0 + 0.02));
    Ok(out)
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<i32, Error> {
    let opts = cfg.selftest.clone().unwrap_or_default();
    let checks = checks(cfg, &opts)?;
    let mut body = String::from("name,observed,expected,tolerance,pass\n");
    let mut failures = 0;
    for c in &checks {
        let pass = c.pass();
        failures += usize::from(!pass);
        println!(
            "{:<4} {:<52} observed {:<12.6e} expected {:<12.6e} tol {:.1e}",
            if pass { "ok" } else { "FAIL" },
            c.name,
            c.observed,
            c.expected,
            c.tolerance
        );
        body.push_str(&format!("{},{:e},{:e},{:e},{pass}\n", c.name, c.observed, c.expected, c.tolerance));
    }
    write_csv(&cfg.output_dir.join("selftest.csv"), body.as_bytes())?;
    println!("{} checks, {failures} failed", checks.len());
    Ok(if failures == 0 { exit::OK } else { exit::THRESHOLD })
}
