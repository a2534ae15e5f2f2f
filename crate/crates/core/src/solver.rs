//! Pseudospectral exponential-Euler solver for the white-in-time equation
//! `∂_t u = ½Δu + u Ẇ` on a periodic grid:
//! `û_{k+1} = e^{−|ξ|²dt/2} (û_k + FFT[u_k δW_k])`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chaos::InitialCondition;
use crate::error::{config, Error, Result};
use crate::fft::{self, Spectral};
use crate::noise::{GridSpec, NoisePath, NoiseSpec, NoiseSynth, TimeMode};
use crate::rng::{self, Purpose};
use crate::stats::MeanAccumulator;

/// Initial field sampled on the grid. Bumps are centred at `L/2` on each axis.
pub fn initial_field(u0: &InitialCondition, grid: &GridSpec) -> Result<Vec<f64>> {
    u0.validate()?;
    let c = grid.length / 2.0;
    match u0 {
        InitialCondition::ConstantOne => Ok(vec![1.0; grid.sites()]),
        InitialCondition::GaussianBump { .. } => (0..grid.sites())
            .map(|j| {
                let x: Vec<f64> = grid.site_coords(j).iter().map(|v| v - c).collect();
                u0.heat_smoothed(0.0, &x)
            })
            .collect(),
        InitialCondition::PointMass => Err(config("point_mass initial condition cannot be sampled on a grid")),
    }
}

/// Exact heat evolution `p_t * u₀` of the sampled initial field on the grid.
pub fn heat_evolution(u0: &InitialCondition, grid: &GridSpec, t: f64) -> Result<Vec<f64>> {
    let mut buf: Vec<Complex64> = initial_field(u0, grid)?.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
    let mut sp = Spectral::new(grid.d, grid.points);
    sp.forward(&mut buf);
    for (v, k2) in buf.iter_mut().zip(fft::squared_wavenumbers(grid.d, grid.points, grid.length)) {
        *v *= (-0.5 * k2 * t).exp();
    }
    sp.inverse(&mut buf);
    Ok(buf.iter().map(|v| v.re).collect())
}

/// Step indices of snapshot times, which must lie on the time lattice.
pub fn snapshot_steps(grid: &GridSpec, times: &[f64]) -> Result<Vec<usize>> {
    if times.is_empty() {
        return Err(config("at least one snapshot time is required"));
    }
    let mut prev: Option<usize> = None;
    times
        .iter()
        .map(|t| {
            let k = (t / grid.dt).round();
            if !(*t >= 0.0) || (k * grid.dt - t).abs() > 1e-9 * grid.dt.max(*t) || k as usize > grid.steps() {
                return Err(config(format!(
                    "snapshot time {t} is not a multiple of dt = {} within [0, {}]",
                    grid.dt, grid.horizon
                )));
            }
            let k = k as usize;
            if prev.is_some_and(|p| p >= k) {
                return Err(config("snapshot times must be strictly increasing"));
            }
            prev = Some(k);
            Ok(k)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshot_times: Vec<f64>,
    /// `snapshot × sites`
    pub fields: Vec<f64>,
    pub seed: u64,
}

/// Per-worker stepping state.
#[derive(Clone)]
struct Stepper {
    synth: NoiseSynth,
    spectral: Spectral,
    decay: Vec<f64>,
    buf: Vec<Complex64>,
    noise: Vec<f64>,
    u: Vec<f64>,
    u0: Vec<f64>,
    steps: Vec<usize>,
}

impl Stepper {
    fn new(spec: &NoiseSpec, grid: &GridSpec, u0: &InitialCondition, times: &[f64]) -> Result<Self> {
        if !matches!(spec.time(), TimeMode::White) {
            return Err(Error::UnsupportedRegime(
                "the solver time-steps white-in-time noise only; use chaos variances for riesz time".into(),
            ));
        }
        spec.check_hypotheses()?;
        let steps = snapshot_steps(grid, times)?;
        let u0 = initial_field(u0, grid)?;
        let decay = fft::squared_wavenumbers(grid.d, grid.points, grid.length)
            .into_iter()
            .map(|k2| (-0.5 * k2 * grid.dt).exp())
            .collect();
        Ok(Self {
            synth: NoiseSynth::new(spec, grid)?,
            spectral: Spectral::new(grid.d, grid.points),
            decay,
            buf: vec![Complex64::default(); grid.sites()],
            noise: vec![0.0; grid.sites()],
            u: u0.clone(),
            u0,
            steps,
        })
    }

    /// One step with the increment currently in `self.noise`.
    fn step(&mut self) {
        for ((b, u), w) in self.buf.iter_mut().zip(&self.u).zip(&self.noise) {
            *b = Complex64::new(u + u * w, 0.0);
        }
        self.spectral.forward(&mut self.buf);
        for (b, d) in self.buf.iter_mut().zip(&self.decay) {
            *b *= *d;
        }
        self.spectral.inverse(&mut self.buf);
        for (u, b) in self.u.iter_mut().zip(&self.buf) {
            *u = b.re;
        }
    }

    /// Runs one replica, writing snapshots into `out` (`snapshot × sites`).
    fn run<F: FnMut(usize, &mut [f64])>(&mut self, mut increment: F, out: &mut [f64]) -> Result<()> {
        let m = self.u.len();
        self.u.copy_from_slice(&self.u0);
        let last = *self.steps.last().unwrap_or(&0);
        let mut next = 0;
        for k in 0..=last {
            while next < self.steps.len() && self.steps[next] == k {
                out[next * m..(next + 1) * m].copy_from_slice(&self.u);
                next += 1;
            }
            if k == last {
                break;
            }
            increment(k, &mut self.noise);
            self.step();
            if self.u.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { step: k + 1 });
            }
        }
        Ok(())
    }

    fn run_seeded(&mut self, seed: u64, out: &mut [f64]) -> Result<()> {
        let mut rng = rng::stream(rng::derive_seed(seed, Purpose::Noise), 0);
        let mut synth = self.synth.clone();
        self.run(|_, buf| synth.white_increment(&mut rng, buf), out)
    }
}

/// One replica driven by the noise of `sample_noise_path(spec, grid, seed)`.
pub fn solve_one_path(
    spec: &NoiseSpec,
    grid: &GridSpec,
    u0: &InitialCondition,
    snapshot_times: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let mut st = Stepper::new(spec, grid, u0, snapshot_times)?;
    let mut fields = vec![0.0; snapshot_times.len() * grid.sites()];
    st.run_seeded(seed, &mut fields)?;
    Ok(Trajectory { snapshot_times: snapshot_times.to_vec(), fields, seed })
}

/// One replica driven by a stored noise path.
pub fn solve_with_noise(path: &NoisePath, u0: &InitialCondition, snapshot_times: &[f64]) -> Result<Trajectory> {
    let mut st = Stepper::new(&path.spec, &path.grid, u0, snapshot_times)?;
    let mut fields = vec![0.0; snapshot_times.len() * path.grid.sites()];
    st.run(|k, buf| buf.copy_from_slice(path.slice(k)), &mut fields)?;
    Ok(Trajectory { snapshot_times: snapshot_times.to_vec(), fields, seed: path.seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub spec: NoiseSpec,
    pub grid: GridSpec,
    pub u0: InitialCondition,
    pub snapshot_times: Vec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnsemble {
    pub replicas: usize,
    /// `replica × snapshot × sites`
    pub fields: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub grid: GridSpec,
    pub spec: NoiseSpec,
    pub u0: InitialCondition,
    pub master_seed: u64,
}

impl FieldEnsemble {
    pub fn field(&self, replica: usize, snapshot: usize) -> &[f64] {
        let m = self.grid.sites();
        let s = self.snapshot_times.len();
        let start = (replica * s + snapshot) * m;
        &self.fields[start..start + m]
    }

    pub fn snapshots(&self) -> usize {
        self.snapshot_times.len()
    }
}

/// Replica `r` is the trajectory of `solve_one_path` with seed
/// `replica_seed(master_seed, r)`.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<FieldEnsemble> {
    if cfg.replicas < 2 {
        return Err(config(format!("replicas must be >= 2, got {}", cfg.replicas)));
    }
    let stepper = Stepper::new(&cfg.spec, &cfg.grid, &cfg.u0, &cfg.snapshot_times)?;
    let per = cfg.snapshot_times.len() * cfg.grid.sites();
    let mut fields = vec![0.0; cfg.replicas * per];
    fields
        .par_chunks_mut(per)
        .enumerate()
        .map_init(
            || stepper.clone(),
            |st, (r, out)| st.run_seeded(rng::replica_seed(cfg.master_seed, r as u64), out),
        )
        .collect::<Result<Vec<()>>>()?;
    Ok(FieldEnsemble {
        replicas: cfg.replicas,
        fields,
        snapshot_times: cfg.snapshot_times.clone(),
        grid: cfg.grid.clone(),
        spec: cfg.spec.clone(),
        u0: cfg.u0,
        master_seed: cfg.master_seed,
    })
}

/// Pointwise ensemble statistics of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteStats {
    pub t: f64,
    pub site: usize,
    pub mean: f64,
    pub var: f64,
    pub p2: f64,
    pub p4: f64,
    /// Standard error of the mean.
    pub stderr: f64,
}

pub fn site_statistics(ens: &FieldEnsemble) -> Vec<SiteStats> {
    let m = ens.grid.sites();
    let mut out = Vec::with_capacity(ens.snapshots() * m);
    for s in 0..ens.snapshots() {
        for j in 0..m {
            let mut acc = MeanAccumulator::default();
            let (mut p2, mut p4) = (0.0, 0.0);
            for r in 0..ens.replicas {
                let v = ens.field(r, s)[j];
                acc.push(v);
                p2 += v * v;
                p4 += v.powi(4);
            }
            let n = ens.replicas as f64;
            out.push(SiteStats {
                t: ens.snapshot_times[s],
                site: j,
                mean: acc.mean(),
                var: acc.variance(),
                p2: p2 / n,
                p4: p4 / n,
                stderr: acc.stderr(),
            });
        }
    }
    out
}

pub const STATS_CSV_HEADER: &str = "t,x_index,mean,var,p2,p4,stderr";

pub fn write_statistics_csv<W: Write>(w: &mut W, stats: &[SiteStats]) -> Result<()> {
    writeln!(w, "{STATS_CSV_HEADER}")?;
    for s in stats {
        writeln!(w, "{},{},{:e},{:e},{:e},{:e},{:e}", s.t, s.site, s.mean, s.var, s.p2, s.p4, s.stderr)?;
    }
    Ok(())
}

/// Space-averaged `E|u|^p` at one snapshot: each replica contributes its
/// spatial mean of `|u|^p`, errors are over replicas.
pub fn spatial_moment(ens: &FieldEnsemble, snapshot: usize, p: f64) -> Result<(f64, f64)> {
    if ens.replicas < 2 {
        return Err(Error::Statistics("need at least 2 replicas".into()));
    }
    let mut acc = MeanAccumulator::default();
    for r in 0..ens.replicas {
        let f = ens.field(r, snapshot);
        acc.push(f.iter().map(|v| v.abs().powf(p)).sum::<f64>() / f.len() as f64);
    }
    Ok((acc.mean(), acc.stderr()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    /// Largest `|mean − exact| / stderr` over all snapshots and sites.
    pub max_abs_z: f64,
    /// Average standardized deviation.
    pub mean_z: f64,
    /// Largest absolute deviation.
    pub max_abs_dev: f64,
    pub per_snapshot_max_z: Vec<f64>,
}

/// Compares the ensemble mean with the deterministic heat evolution of `u₀`.
pub fn mean_check(ens: &FieldEnsemble) -> Result<MeanReport> {
    let m = ens.grid.sites();
    let stats = site_statistics(ens);
    let mut report = MeanReport { max_abs_z: 0.0, mean_z: 0.0, max_abs_dev: 0.0, per_snapshot_max_z: Vec::new() };
    let mut zsum = 0.0;
    let mut count = 0usize;
    for (s, t) in ens.snapshot_times.iter().enumerate() {
        let exact = heat_evolution(&ens.u0, &ens.grid, *t)?;
        let mut smax: f64 = 0.0;
        for j in 0..m {
            let st = &stats[s * m + j];
            let dev = st.mean - exact[j];
            report.max_abs_dev = report.max_abs_dev.max(dev.abs());
            let z = if st.stderr > 0.0 {
                dev / st.stderr
            } else if dev.abs() <= 1e-12 * exact[j].abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY * dev.signum()
            };
            smax = smax.max(z.abs());
            zsum += z;
            count += 1;
        }
        report.max_abs_z = report.max_abs_z.max(smax);
        report.per_snapshot_max_z.push(smax);
    }
    report.mean_z = zsum / count as f64;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub status: String,
    pub spec: NoiseSpec,
    pub grid: GridSpec,
    pub u0: InitialCondition,
    pub snapshot_times: Vec<f64>,
    pub replicas: usize,
    pub master_seed: u64,
    /// `[replicas, snapshots, points, (points)]`
    pub shape: Vec<usize>,
    pub layout: String,
    pub dtype: String,
}

pub const ENSEMBLE_FORMAT: &str = "pamlab-ensemble-v1";

fn manifest(ens: &FieldEnsemble, status: &str) -> EnsembleManifest {
    let mut shape = vec![ens.replicas, ens.snapshots()];
    shape.extend(std::iter::repeat_n(ens.grid.points, ens.grid.d));
    EnsembleManifest {
        format: ENSEMBLE_FORMAT.into(),
        status: status.into(),
        spec: ens.spec.clone(),
        grid: ens.grid.clone(),
        u0: ens.u0,
        snapshot_times: ens.snapshot_times.clone(),
        replicas: ens.replicas,
        master_seed: ens.master_seed,
        shape,
        layout: "replica, snapshot, space (row-major)".into(),
        dtype: "f64 little-endian".into(),
    }
}

/// Writes `<stem>.json` (manifest, `status: "partial"` until the data file
/// is complete) and `<stem>.bin`.
pub fn write_ensemble(dir: &Path, stem: &str, ens: &FieldEnsemble) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&manifest(ens, "partial"))?)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(format!("{stem}.bin")))?);
    for v in &ens.fields {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    fs::write(&json, serde_json::to_string_pretty(&manifest(ens, "complete"))?)?;
    Ok(())
}

pub fn read_ensemble(dir: &Path, stem: &str) -> Result<FieldEnsemble> {
    let m: EnsembleManifest = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    if m.format != ENSEMBLE_FORMAT {
        return Err(config(format!("unknown ensemble format {}", m.format)));
    }
    if m.status != "complete" {
        return Err(config(format!("ensemble {stem} is incomplete (status {})", m.status)));
    }
    let bytes = fs::read(dir.join(format!("{stem}.bin")))?;
    let expected = m.replicas * m.snapshot_times.len() * m.grid.sites();
    if bytes.len() != expected * 8 {
        return Err(config(format!("ensemble data has {} bytes, expected {}", bytes.len(), expected * 8)));
    }
    let fields = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(FieldEnsemble {
        replicas: m.replicas,
        fields,
        snapshot_times: m.snapshot_times,
        grid: m.grid,
        spec: m.spec,
        u0: m.u0,
        master_seed: m.master_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_noise_path, SpaceMode};
    use crate::specfn::heat_kernel;

    fn grid() -> GridSpec {
        GridSpec::new(1, 8.0, 128, 0.0025, 0.25).unwrap()
    }

    fn quiet() -> NoiseSpec {
        NoiseSpec::space_time_white(1).unwrap().with_amplitude(0.0).unwrap()
    }

    #[test]
    fn zero_noise_constant_stays_one() {
        let tr = solve_one_path(&quiet(), &grid(), &InitialCondition::ConstantOne, &[0.0, 0.1, 0.25], 3).unwrap();
        assert!(tr.fields.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn zero_noise_bump_follows_heat_kernel() {
        let g = grid();
        let eps = 0.2;
        let tr = solve_one_path(&quiet(), &g, &InitialCondition::GaussianBump { width: eps }, &[0.25], 0).unwrap();
        for (j, v) in tr.fields.iter().enumerate() {
            let x = g.site_coords(j)[0] - g.length / 2.0;
            let exact: f64 = (-2..=2).map(|m| heat_kernel(0.25 + eps, &[x + m as f64 * g.length]).unwrap()).sum();
            assert!((v - exact).abs() < 1e-8, "site {j}: {v} vs {exact}");
        }
    }

    #[test]
    fn colored_time_is_rejected() {
        let spec = NoiseSpec::new(TimeMode::Riesz { alpha0: 0.5 }, SpaceMode::RegimeI { alphas: vec![0.0] }, 1.0).unwrap();
        let r = solve_one_path(&spec, &grid(), &InitialCondition::ConstantOne, &[0.25], 0);
        assert!(matches!(r, Err(Error::UnsupportedRegime(_))));
    }

    #[test]
    fn off_lattice_snapshots_are_rejected() {
        let spec = NoiseSpec::space_time_white(1).unwrap();
        assert!(solve_one_path(&spec, &grid(), &InitialCondition::ConstantOne, &[0.001], 0).is_err());
        assert!(solve_one_path(&spec, &grid(), &InitialCondition::ConstantOne, &[0.1, 0.05], 0).is_err());
        assert!(solve_one_path(&spec, &grid(), &InitialCondition::ConstantOne, &[0.5], 0).is_err());
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let spec = NoiseSpec::space_time_white(1).unwrap().with_amplitude(1e300).unwrap();
        let r = solve_one_path(&spec, &grid(), &InitialCondition::ConstantOne, &[0.25], 1);
        assert!(matches!(r, Err(Error::BlowUp { step }) if step >= 1), "{r:?}");
    }

    #[test]
    fn solver_uses_the_sampled_noise_path() {
        let spec = NoiseSpec::space_time_white(1).unwrap();
        let g = grid();
        let path = sample_noise_path(&spec, &g, 77).unwrap();
        let a = solve_with_noise(&path, &InitialCondition::ConstantOne, &[0.1, 0.25]).unwrap();
        let b = solve_one_path(&spec, &g, &InitialCondition::ConstantOne, &[0.1, 0.25], 77).unwrap();
        assert_eq!(a.fields, b.fields);
    }

    #[test]
    fn ensemble_mean_and_determinism() {
        let cfg = EnsembleConfig {
            spec: NoiseSpec::space_time_white(1).unwrap(),
            grid: grid(),
            u0: InitialCondition::ConstantOne,
            snapshot_times: vec![0.125, 0.25],
            replicas: 400,
            master_seed: 19,
        };
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert!(a.fields.iter().zip(&b.fields).all(|(x, y)| x.to_bits() == y.to_bits()));
        let rep = mean_check(&a).unwrap();
        assert!(rep.max_abs_z < 4.5, "{rep:?}");
        assert!(rep.mean_z.abs() < 1.0);
        let bad = EnsembleConfig { replicas: 1, ..cfg };
        assert!(run_ensemble(&bad).is_err());
    }

    #[test]
    fn zero_noise_ensemble_has_exact_mean() {
        let cfg = EnsembleConfig {
            spec: quiet(),
            grid: grid(),
            u0: InitialCondition::GaussianBump { width: 0.3 },
            snapshot_times: vec![0.0, 0.25],
            replicas: 3,
            master_seed: 0,
        };
        let rep = mean_check(&run_ensemble(&cfg).unwrap()).unwrap();
        assert!(rep.max_abs_dev < 1e-14);
        assert_eq!(rep.max_abs_z, 0.0);
    }

    #[test]
    fn ensemble_roundtrip() {
        let cfg = EnsembleConfig {
            spec: NoiseSpec::space_time_white(1).unwrap(),
            grid: grid(),
            u0: InitialCondition::ConstantOne,
            snapshot_times: vec![0.25],
            replicas: 3,
            master_seed: 1,
        };
        let ens = run_ensemble(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_ensemble(dir.path(), "ens", &ens).unwrap();
        assert_eq!(read_ensemble(dir.path(), "ens").unwrap(), ens);
        let mut csv = Vec::new();
        write_statistics_csv(&mut csv, &site_statistics(&ens)).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 128);
    }
}
