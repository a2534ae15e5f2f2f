//! Acceptance suite. Runs as a plain binary (`harness = false`) so every
//! criterion prints exactly one line; exits non-zero if any fails.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use pamlab::chaos::{self, BoundConstants, InitialCondition, McParams};
use pamlab::holder::{self, IncrementMode, Lag};
use pamlab::noise::{self, GridSpec, NoiseSpec, Probe, SpaceMode, TestFunction, TimeMode};
use pamlab::solver::{self, EnsembleConfig};
use pamlab::specfn::{self, SimplexParams};
use pamlab::stats;

const MASTER_SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
    /// Every statistic the criterion computed, in a fixed order.
    stats: Vec<f64>,
}

impl Outcome {
    fn digest(&self) -> String {
        self.stats.iter().fold(String::new(), |mut s, v| {
            let _ = write!(s, "{:016x}", v.to_bits());
            s
        })
    }
}

fn white() -> NoiseSpec {
    NoiseSpec::space_time_white(1).unwrap()
}

/// Regime (ii) with `α = 1/4` and white time; the amplitude `1/(2π)` makes
/// `μ(ξ) = |ξ|^{1/4}/(2π)`, the same normalization as the white preset.
fn rough() -> NoiseSpec {
    NoiseSpec::new(TimeMode::White, SpaceMode::RegimeII { alpha: 0.25 }, 1.0 / (2.0 * PI)).unwrap()
}

// ---------------------------------------------------------------- 1

fn simplex_oracle(p: &SimplexParams) -> f64 {
    let a = p.alphas();
    let deg: f64 = a.iter().sum::<f64>() + a.len() as f64;
    let num: f64 = a.iter().map(|x| gamma(x + 1.0)).product();
    p.t().powf(deg) * num / gamma(deg + 1.0)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut worst: f64 = 0.0;
    let mut stats = Vec::new();
    for case in 0..50u64 {
        let m = rng.random_range(1..=4);
        let t = rng.random_range(0.1..3.0);
        let alphas: Vec<f64> = (0..m).map(|_| rng.random_range(-0.9..0.9)).collect();
        let p = SimplexParams::new(t, alphas).unwrap();
        let (est, se) = specfn::simplex_integral_mc(&p, 1_000_000, MASTER_SEED + case).unwrap();
        // m = 1 has a constant weight: zero stderr, only rounding error left.
        let exact = simplex_oracle(&p);
        let z = (est - exact).abs() / (se + 1e-13 * exact);
        worst = worst.max(z);
        stats.extend([est, se]);
    }
    Outcome { pass: worst <= 3.0, detail: format!("50 cases, worst |est - exact|/stderr = {worst:.2} (limit 3)"), stats }
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut stats = Vec::new();
    let mut parts = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for a in [0.25, 0.5, 0.75, 1.0] {
        let gap = |z: f64| specfn::ln_mittag_leffler_sum(a, z, 1e-15).unwrap() - z.powf(1.0 / a);
        // Fit ln C on a coarse grid, refine around the best point, then
        // check on a finer grid offset from the fitting one.
        let coarse: Vec<f64> = (0..=3000).map(|i| 30.0 * i as f64 / 3000.0).collect();
        let (mut best_z, mut ln_c) = (0.0, f64::NEG_INFINITY);
        for &z in &coarse {
            let g = gap(z);
            if g > ln_c {
                best_z = z;
                ln_c = g;
            }
        }
        let (mut lo, mut hi) = ((best_z - 0.01).max(0.0), (best_z + 0.01).min(30.0));
        for _ in 0..100 {
            let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if gap(m1) < gap(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        ln_c = ln_c.max(gap(0.5 * (lo + hi))) + 1e-12;
        let violation = (0..3000)
            .map(|i| 30.0 * (i as f64 + 0.37) / 3000.0)
            .filter(|z| *z <= 30.0)
            .map(|z| gap(z) - ln_c)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        worst = worst.max(violation);
        parts.push(format!("a={a}: C={:.4}", ln_c.exp()));
        stats.extend([ln_c, violation]);
    }
    Outcome { pass: worst == 0.0, detail: format!("{}; max violation {worst:e}", parts.join(", ")), stats }
}

// ---------------------------------------------------------------- 3

/// `‖1_{[0,T]} ⊗ p_w‖²_H` from the time double integral and one Gamma
/// factor per axis of `∫ e^{−w|ξ|²}|ξ|^a dξ`.
fn probe_variance_oracle(time: &TimeMode, a: f64, amp: f64, horizon: f64, w: f64) -> f64 {
    let time = match time {
        TimeMode::White => horizon,
        TimeMode::Riesz { alpha0 } => {
            // ∫∫_{[0,T]²} |s−r|^{−α₀} = 2T^{2−α₀}/((1−α₀)(2−α₀))
            2.0 * horizon.powf(2.0 - alpha0) / ((1.0 - alpha0) * (2.0 - alpha0))
        }
    };
    time * amp * gamma((a + 1.0) / 2.0) * w.powf(-(a + 1.0) / 2.0)
}

fn criterion_3() -> Outcome {
    let grid = GridSpec::new(1, 16.0, 128, 0.01, 1.0).unwrap();
    let width = 1.0;
    let probe = Probe {
        t_start: 0.0,
        t_end: 1.0,
        space: TestFunction::GaussianBump { width, center: vec![8.0] },
    };
    let mut stats = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (ti, time) in [TimeMode::White, TimeMode::Riesz { alpha0: 0.5 }].into_iter().enumerate() {
        for (si, a) in [0.0, -0.5, 0.5].into_iter().enumerate() {
            let space = if a > 0.0 {
                SpaceMode::RegimeII { alpha: a }
            } else {
                SpaceMode::RegimeI { alphas: vec![a] }
            };
            let spec = NoiseSpec::new(time.clone(), space, 1.0).unwrap();
            let seed = MASTER_SEED + (10 * ti + si) as u64;
            let values = noise::probe_ensemble(&spec, &grid, seed, 10_000, std::slice::from_ref(&probe)).unwrap();
            let (var, se) = stats::jackknife_covariance(&values[0], &values[0]).unwrap();
            let exact = probe_variance_oracle(&time, a, 1.0, 1.0, width);
            let lib = noise::analytic_test_variance(&spec, 1.0, width).unwrap();
            let ok = (var - exact).abs() <= 3.0 * se + 0.02 * exact && (lib - exact).abs() <= 1e-12 * exact;
            pass &= ok;
            let label = if ti == 0 { "white" } else { "riesz" };
            parts.push(format!("{label}/{a:+}: {:+.2}%", 100.0 * (var / exact - 1.0)));
            stats.extend([var, se]);
        }
    }
    Outcome { pass, detail: format!("rel. deviation {}", parts.join(" ")), stats }
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let spec = white();
    let mut stats = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for t in [0.25f64, 1.0] {
        for n in 1..=3usize {
            let nf = n as f64;
            let exact = t.powf(nf / 2.0) / (2f64.powf(nf) * gamma(nf / 2.0 + 1.0));
            let mc = McParams { samples: 1_000_000, seed: MASTER_SEED + n as u64 };
            let e = chaos::chaos_variance(n, t, &[0.0], &spec, &InitialCondition::ConstantOne, &mc).unwrap();
            let ok = (e.variance - exact).abs() <= (3.0 * e.stderr).max(0.02 * exact);
            pass &= ok;
            parts.push(format!("t={t} n={n}: {:.4}/{exact:.4}", e.variance));
            stats.extend([e.variance, e.stderr]);
        }
    }
    Outcome { pass, detail: parts.join(", "), stats }
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let t = 0.25;
    let cfg = EnsembleConfig {
        spec: white(),
        grid: GridSpec::new(1, 8.0, 512, 1e-3, t).unwrap(),
        u0: InitialCondition::ConstantOne,
        snapshot_times: vec![t],
        replicas: 2000,
        master_seed: MASTER_SEED,
    };
    let ens = solver::run_ensemble(&cfg).unwrap();
    let (m2, se2) = solver::spatial_moment(&ens, 0, 2.0).unwrap();
    let series = (t / 4.0).exp() * (1.0 + erf(t.sqrt() / 2.0));
    let rel = m2 / series - 1.0;
    let report = solver::mean_check(&ens).unwrap();
    let pass = rel.abs() <= 0.05 && report.max_abs_z <= 3.0;
    Outcome {
        pass,
        detail: format!(
            "E u^2 = {m2:.4} +- {se2:.4} vs {series:.4} ({:+.2}%); mean max |z| = {:.2} over {} sites",
            100.0 * rel,
            report.max_abs_z,
            cfg.grid.sites()
        ),
        stats: vec![m2, se2, report.max_abs_z, report.mean_z, report.max_abs_dev],
    }
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let mut stats = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, spec) in [("white", white()), ("regime ii", rough())] {
        let levels: Vec<_> = (1..=5usize)
            .map(|n| {
                let mc = McParams { samples: 200_000, seed: MASTER_SEED + 100 + n as u64 };
                chaos::chaos_variance(n, 1.0, &[0.0], &spec, &InitialCondition::ConstantOne, &mc).unwrap()
            })
            .collect();
        let c = chaos::fit_bound_constant(&levels, &spec).unwrap();
        let k = BoundConstants { c, ..BoundConstants::default() };
        let mut ok = c.is_finite() && c > 0.0;
        for e in &levels {
            let bound = chaos::chaos_variance_bound(e.n, 1.0, &spec, &k).unwrap();
            ok &= e.variance <= bound * (1.0 + 1e-12);
            stats.extend([e.variance, e.stderr, bound]);
        }
        pass &= ok;
        stats.push(c);
        let ratios: Vec<String> = levels
            .iter()
            .map(|e| {
                let unit = chaos::chaos_variance_bound(e.n, 1.0, &spec, &BoundConstants::default()).unwrap();
                format!("{:.3}", (e.variance / unit).powf(1.0 / e.n as f64))
            })
            .collect();
        parts.push(format!("{label}: c = {c:.4} (per-level {})", ratios.join(" ")));
    }
    Outcome { pass, detail: parts.join("; "), stats }
}

// ---------------------------------------------------------------- 7, 8

struct HolderRun {
    time: holder::HolderFit,
    space: holder::HolderFit,
    rect: holder::HolderFit,
}

/// `L = 8`, `N = 512`, `dt = 2^{−14} ≈ Δx²/4`, `T = 1/2`. Time lags
/// `2^{−8}..2^{−4}` from two base snapshots, space lags `2Δx..32Δx`; both
/// sit inside `[4dt, T/8]` and `[2L/N, L/16]`.
fn holder_run(spec: NoiseSpec, replicas: usize, seed: u64) -> HolderRun {
    let grid = GridSpec::new(1, 8.0, 512, 2f64.powi(-14), 0.5).unwrap();
    let taus: Vec<f64> = (-8..=-4).map(|k| 2f64.powi(k)).collect();
    let dxs: Vec<f64> = (1..=5).map(|k| grid.dx() * 2f64.powi(k)).collect();
    let mut times: Vec<f64> = vec![0.5];
    for base in [0.375, 0.4375] {
        times.push(base);
        times.extend(taus.iter().map(|t| base + t));
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let cfg = EnsembleConfig {
        spec,
        grid,
        u0: InitialCondition::ConstantOne,
        snapshot_times: times,
        replicas,
        master_seed: seed,
    };
    let ens = solver::run_ensemble(&cfg).unwrap();
    let time_lags: Vec<Lag> = taus.iter().map(|&dt| Lag { dt, dx: 0.0 }).collect();
    let space_lags: Vec<Lag> = dxs.iter().map(|&dx| Lag { dt: 0.0, dx }).collect();
    let rect_lags: Vec<Lag> = taus.iter().flat_map(|&dt| dxs.iter().map(move |&dx| Lag { dt, dx })).collect();
    let fit = |lags: &[Lag], mode| holder::fit_exponents(&holder::increment_moments(&ens, lags, mode, 2).unwrap()).unwrap();
    HolderRun {
        time: fit(&time_lags, IncrementMode::TimeMarginal),
        space: fit(&space_lags, IncrementMode::SpaceMarginal),
        rect: fit(&rect_lags, IncrementMode::Rectangular),
    }
}

fn fit_stats(f: &holder::HolderFit) -> [f64; 5] {
    [f.alpha0_hat, f.alpha_hat, f.ci.0, f.ci.1, f.r2]
}

fn criterion_7() -> Outcome {
    let run = holder_run(white(), 1000, MASTER_SEED);
    let (a0, a) = (run.time.alpha0_hat, run.space.alpha_hat);
    let sum = 2.0 * run.rect.alpha0_hat + run.rect.alpha_hat;
    let pass = (a0 - 0.25).abs() <= 0.05
        && run.time.r2 > 0.98
        && (a - 0.5).abs() <= 0.06
        && run.space.r2 > 0.98
        && (sum - 0.5).abs() <= 0.1;
    let mut stats = Vec::new();
    for f in [&run.time, &run.space, &run.rect] {
        stats.extend(fit_stats(f));
    }
    Outcome {
        pass,
        detail: format!(
            "time {a0:.4} (r2 {:.4}), space {a:.4} (r2 {:.4}), rectangular 2a0+a = {sum:.4} (r2 {:.3})",
            run.time.r2, run.space.r2, run.rect.r2
        ),
        stats,
    }
}

fn criterion_8() -> Outcome {
    let run = holder_run(rough(), 1000, MASTER_SEED + 1);
    let a = run.space.alpha_hat;
    let target = (1.0 - 0.25) / 2.0;
    let mut stats = Vec::new();
    for f in [&run.time, &run.space, &run.rect] {
        stats.extend(fit_stats(f));
    }
    Outcome {
        pass: (a - target).abs() <= 0.07,
        detail: format!(
            "space {a:.4} +- {:.4} (r2 {:.4}) vs {target}; time {:.4}",
            run.space.ci.1, run.space.r2, run.time.alpha0_hat
        ),
        stats,
    }
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let cases: [(Vec<f64>, f64); 6] = [
        (vec![0.0], 0.0),
        (vec![-0.5], 0.0),
        (vec![-0.3], 1.0),
        (vec![0.0], 0.5),
        (vec![-0.5, -0.25], 0.0),
        (vec![0.0, -0.5], 1.0),
    ];
    let s_grid: Vec<f64> = (0..=16).map(|k| 10f64.powf(-2.0 + 0.25 * k as f64)).collect();
    let mut stats = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (alphas, beta) in cases {
        let d = alphas.len();
        let spec = NoiseSpec::new(TimeMode::White, SpaceMode::RegimeI { alphas: alphas.clone() }, 1.0).unwrap();
        let zeta = vec![0.0; d];
        let y: Vec<f64> = s_grid
            .iter()
            .map(|&s| specfn::smoothing_integral(s, beta, &zeta, &spec).unwrap().ln())
            .collect();
        let design: Vec<Vec<f64>> = s_grid.iter().map(|s| vec![1.0, s.ln()]).collect();
        let fit = stats::least_squares(&design, &y).unwrap();
        let alpha: f64 = alphas.iter().sum();
        let expected = -(d as f64 + alpha + beta) / 2.0;
        let ok = (fit.coef[1] - expected).abs() < 1e-6 && fit.r2 > 0.999;
        pass &= ok;
        parts.push(format!("{:.4}/{expected}", fit.coef[1]));
        stats.extend([fit.coef[1], fit.r2]);
    }
    Outcome { pass, detail: format!("slope/expected {}", parts.join(" ")), stats }
}

// ---------------------------------------------------------------- driver

type Criterion = fn() -> Outcome;

const CRITERIA: [(usize, &str, Criterion); 9] = [
    (1, "simplex integral MC vs exact", criterion_1),
    (2, "fitted Mittag-Leffler constant", criterion_2),
    (3, "noise probe variances", criterion_3),
    (4, "white chaos variances", criterion_4),
    (5, "solver second moment and mean", criterion_5),
    (6, "factorial decay with fitted c", criterion_6),
    (7, "white-noise Holder exponents", criterion_7),
    (8, "rough-noise space exponent", criterion_8),
    (9, "smoothing integral scaling", criterion_9),
];

fn main() {
    // `cargo test -- --list` and similar harness probes.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut failures = 0;
    let mut digests = Vec::new();
    for (id, name, run) in CRITERIA {
        let start = Instant::now();
        let out = run();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id:>2} {} {name}: {} [{secs:.1}s]", verdict(out.pass), out.detail);
        failures += usize::from(!out.pass);
        if (3..=8).contains(&id) {
            digests.push((id, out.digest()));
        }
    }

    // Determinism: rerun 3..8 on a pool with a different worker count.
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let mismatched: Vec<usize> = pool.install(|| {
        CRITERIA
            .iter()
            .filter(|(id, _, _)| (3..=8).contains(id))
            .zip(&digests)
            .filter(|((_, _, run), (_, digest))| run().digest() != *digest)
            .map(|(_, (id, _))| *id)
            .collect()
    });
    let pass = mismatched.is_empty();
    failures += usize::from(!pass);
    println!(
        "criterion 10 {} rerun of 3-8 is byte-identical: {} [{:.1}s]",
        verdict(pass),
        if pass { "all digests match".to_string() } else { format!("mismatch in {mismatched:?}") },
        start.elapsed().as_secs_f64()
    );

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
