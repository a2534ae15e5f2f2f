use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use pamlab::chaos::{self, InitialCondition, McParams};
use pamlab::error::Error;
use pamlab::holder::{self, HolderFit, IncrementMode, IncrementTable, Lag};
use pamlab::noise::{NoiseSpec, Regime};
use pamlab::solver::{self, EnsembleConfig, MeanReport};

use crate::config::ExperimentConfig;
use crate::{exit, selftest, Command};

/// Writes `body` to `path` behind a `# generated unix=<seconds>` line. The
/// timestamp is the only part that differs between identical runs.
pub(crate) fn write_csv(path: &Path, body: &[u8]) -> std::io::Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut out = format!("# generated unix={secs}\n").into_bytes();
    out.extend_from_slice(body);
    fs::write(path, out)
}

/// Runs a validated configuration; returns the exit code.
pub fn run_command(command: Command, cfg: &ExperimentConfig) -> i32 {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return exit::RUNTIME;
        }
    };
    let result = pool.install(|| -> Result<i32, Error> {
        fs::create_dir_all(&cfg.output_dir)?;
        match command {
            Command::Selftest => selftest::run(cfg),
            Command::Chaos => chaos_cmd(cfg).map(|_| exit::OK),
            Command::Simulate => simulate_cmd(cfg).map(|_| exit::OK),
            Command::Holder => holder_cmd(cfg).map(|_| exit::OK),
            Command::Bounds => bounds_cmd(cfg).map(|_| exit::OK),
        }
    });
    match result {
        Ok(code) => code,
        Err(e @ Error::Config(_)) => {
            eprintln!("{e}");
            exit::VALIDATION
        }
        Err(e) => {
            eprintln!("{e}");
            exit::RUNTIME
        }
    }
}

fn spec_of(cfg: &ExperimentConfig) -> &NoiseSpec {
    cfg.spec.as_ref().expect("validated")
}

fn chaos_cmd(cfg: &ExperimentConfig) -> Result<(), Error> {
    let spec = spec_of(cfg);
    let block = cfg.chaos.as_ref().expect("validated");
    let u0 = cfg.u0.unwrap_or(InitialCondition::ConstantOne);
    let x = block.x.clone().unwrap_or_else(|| vec![0.0; spec.dim()]);
    let mut body = format!("{}\n", chaos::CSV_HEADER);
    for (ti, &t) in block.times.iter().enumerate() {
        for &n in &block.levels {
            let seed = cfg.master_seed.wrapping_add((ti * (chaos::MAX_LEVEL + 1) + n) as u64);
            let e = chaos::chaos_variance(n, t, &x, spec, &u0, &McParams { samples: block.samples, seed })?;
            println!(
                "t={t} n={n}: variance {:.6e} +- {:.2e}, bound(c=1) {:.6e}",
                e.variance, e.stderr, e.bound_value
            );
            body.push_str(&chaos::csv_row(&e));
            body.push('\n');
        }
    }
    write_csv(&cfg.output_dir.join("chaos.csv"), body.as_bytes())?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateSummary {
    replicas: usize,
    snapshot_times: Vec<f64>,
    /// `(mean, stderr)` of the space-averaged `u²` per snapshot.
    second_moment: Vec<(f64, f64)>,
    mean_check: MeanReport,
}

fn simulate_cmd(cfg: &ExperimentConfig) -> Result<(), Error> {
    let block = cfg.simulate.as_ref().expect("validated");
    let ecfg = EnsembleConfig {
        spec: spec_of(cfg).clone(),
        grid: cfg.grid.clone().expect("validated"),
        u0: cfg.u0.unwrap_or(InitialCondition::ConstantOne),
        snapshot_times: block.snapshot_times.clone(),
        replicas: block.replicas,
        master_seed: cfg.master_seed,
    };
    let ens = solver::run_ensemble(&ecfg)?;
    solver::write_ensemble(&cfg.output_dir, &block.stem, &ens)?;
    let mut body = Vec::new();
    solver::write_statistics_csv(&mut body, &solver::site_statistics(&ens))?;
    write_csv(&cfg.output_dir.join(format!("{}_statistics.csv", block.stem)), &body)?;
    let second_moment = (0..ens.snapshots())
        .map(|s| solver::spatial_moment(&ens, s, 2.0))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = SimulateSummary {
        replicas: ens.replicas,
        snapshot_times: ens.snapshot_times.clone(),
        second_moment,
        mean_check: solver::mean_check(&ens)?,
    };
    for (t, (m, se)) in summary.snapshot_times.iter().zip(&summary.second_moment) {
        println!("t={t}: E u^2 = {m:.5} +- {se:.5}");
    }
    println!("mean check: max |z| = {:.3}", summary.mean_check.max_abs_z);
    fs::write(
        cfg.output_dir.join(format!("{}_summary.json", block.stem)),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FitSummary {
    mode: IncrementMode,
    moment_order: u32,
    alpha0: Option<f64>,
    alpha: Option<f64>,
    r2: f64,
    reported: bool,
}

impl From<&HolderFit> for FitSummary {
    fn from(f: &HolderFit) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            mode: f.mode,
            moment_order: f.moment_order,
            alpha0: finite(f.alpha0_hat),
            alpha: finite(f.alpha_hat),
            r2: f.r2,
            reported: f.reported,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct HolderSummary {
    b: f64,
    fits: Vec<FitSummary>,
}

fn holder_cmd(cfg: &ExperimentConfig) -> Result<(), Error> {
    let block = cfg.holder.as_ref().expect("validated");
    let ens = solver::read_ensemble(&cfg.output_dir, &block.ensemble)?;
    let time: Vec<Lag> = block.time_lags.iter().map(|&dt| Lag { dt, dx: 0.0 }).collect();
    let space: Vec<Lag> = block.space_lags.iter().map(|&dx| Lag { dt: 0.0, dx }).collect();
    let rect: Vec<Lag> = block
        .time_lags
        .iter()
        .flat_map(|&dt| block.space_lags.iter().map(move |&dx| Lag { dt, dx }))
        .collect();
    let mut tables: Vec<IncrementTable> = Vec::new();
    let mut fits: Vec<HolderFit> = Vec::new();
    for &p in &block.moment_orders {
        for (lags, mode) in [
            (&time, IncrementMode::TimeMarginal),
            (&space, IncrementMode::SpaceMarginal),
            (&rect, IncrementMode::Rectangular),
        ] {
            let table = holder::increment_moments(&ens, lags, mode, p)?;
            fits.push(holder::fit_exponents(&table)?);
            tables.push(table);
        }
    }
    let dir = &cfg.output_dir;
    let mut body = Vec::new();
    holder::write_increment_csv(&mut body, &tables)?;
    write_csv(&dir.join("increments.csv"), &body)?;
    let mut body = Vec::new();
    holder::write_fit_csv(&mut body, &fits)?;
    write_csv(&dir.join("holder_fit.csv"), &body)?;
    // Tables come in (time, space, rect) triples; the first triple has the
    // first moment order.
    let mut body = Vec::new();
    holder::write_loglog(&mut body, &tables[0], true)?;
    fs::write(dir.join("loglog_time.dat"), body)?;
    let mut body = Vec::new();
    holder::write_loglog(&mut body, &tables[1], false)?;
    fs::write(dir.join("loglog_space.dat"), body)?;

    let summary = HolderSummary {
        b: holder::predicted_region(&ens.spec).b,
        fits: fits.iter().map(FitSummary::from).collect(),
    };
    print!("{}", holder_table(&summary));
    fs::write(dir.join("holder_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

fn holder_table(s: &HolderSummary) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut out = format!("holder fits (B = {:.4})\n", s.b);
    out.push_str(&format!("{:<16}{:>3}{:>10}{:>10}{:>12}{:>10}  reported\n", "mode", "p", "a0", "a", "2a0+a", "r2"));
    for f in &s.fits {
        let sum = match (f.alpha0, f.alpha) {
            (Some(a0), Some(a)) => Some(2.0 * a0 + a),
            (Some(a0), None) => Some(2.0 * a0),
            (None, a) => a,
        };
        out.push_str(&format!(
            "{:<16}{:>3}{:>10}{:>10}{:>12}{:>10.4}  {}\n",
            holder::mode_name(f.mode),
            f.moment_order,
            fmt(f.alpha0),
            fmt(f.alpha),
            fmt(sum),
            f.r2,
            f.reported
        ));
    }
    out
}

fn bounds_cmd(cfg: &ExperimentConfig) -> Result<(), Error> {
    let spec = spec_of(cfg);
    let block = cfg.bounds.as_ref().expect("validated");
    let e = spec.exponents();
    let k = &block.constants;
    let mut body = String::from("quantity,order,t,value\n");
    for &t in &block.times {
        for &n in &block.levels {
            let v = chaos::chaos_variance_bound(n, t, spec, k)?;
            body.push_str(&format!("chaos_variance_bound,{n},{t},{v:e}\n"));
        }
        for &p in &block.moments {
            let v = chaos::moment_bound(p, t, spec, k)?;
            body.push_str(&format!("moment_bound,{p},{t},{v:e}\n"));
        }
    }
    write_csv(&cfg.output_dir.join("bounds.csv"), body.as_bytes())?;
    let region = holder::predicted_region(spec);
    let regime = if e.regime == Regime::I { "i" } else { "ii" };
    let body = format!("regime,alpha0,alpha,b\n{regime},{},{},{}\n", e.alpha0, e.alpha, region.b);
    write_csv(&cfg.output_dir.join("region.csv"), body.as_bytes())?;
    println!("regime {regime}: alpha0 = {}, alpha = {}, admissible 2a0+a < {}", e.alpha0, e.alpha, region.b);
    Ok(())
}

fn read_csv_rows(path: &Path) -> Result<Vec<csv::StringRecord>, String> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    r.records().collect::<Result<Vec<_>, _>>().map_err(|e| format!("{}: {e}", path.display()))
}

/// Prints a summary of the artifacts in `dir`; exit 1 if there are none.
pub fn report(dir: &Path) -> i32 {
    let mut found = false;
    let mut failed = false;
    let chaos = dir.join("chaos.csv");
    if chaos.exists() {
        found = true;
        match read_csv_rows(&chaos) {
            Ok(rows) => {
                println!("chaos variances");
                println!("{:>3}{:>8}{:>14}{:>12}{:>14}{:>14}", "n", "t", "variance", "stderr", "bound", "ratio");
                for r in rows {
                    let v: f64 = r[4].parse().unwrap_or(f64::NAN);
                    let b: f64 = r[6].parse().unwrap_or(f64::NAN);
                    println!("{:>3}{:>8}{:>14}{:>12}{:>14}{:>14.4e}", &r[0], &r[1], &r[4], &r[5], &r[6], v / b);
                }
            }
            Err(e) => {
                eprintln!("{e}");
                failed = true;
            }
        }
    }
    let holder = dir.join("holder_summary.json");
    if holder.exists() {
        found = true;
        match fs::read_to_string(&holder).map_err(|e| e.to_string()).and_then(|s| {
            serde_json::from_str::<HolderSummary>(&s).map_err(|e| e.to_string())
        }) {
            Ok(s) => print!("{}", holder_table(&s)),
            Err(e) => {
                eprintln!("{}: {e}", holder.display());
                failed = true;
            }
        }
    }
    let selftest = dir.join("selftest.csv");
    if selftest.exists() {
        found = true;
        match read_csv_rows(&selftest) {
            Ok(rows) => {
                println!("selftest");
                for r in rows {
                    println!(
                        "  {:<4} {:<44} observed {:<14} expected {:<14} tol {}",
                        if &r[4] == "true" { "ok" } else { "FAIL" },
                        &r[0],
                        &r[1],
                        &r[2],
                        &r[3]
                    );
                }
            }
            Err(e) => {
                eprintln!("{e}");
                failed = true;
            }
        }
    }
    if !found {
        eprintln!("no artifacts (chaos.csv, holder_summary.json, selftest.csv) in {}", dir.display());
        return exit::VALIDATION;
    }
    if failed {
        exit::RUNTIME
    } else {
        exit::OK
    }
}
