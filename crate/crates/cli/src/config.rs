//! Experiment configuration: one JSON document, dotted-path overrides, and
//! validation that reports every problem at once.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use pamlab::chaos::{BoundConstants, InitialCondition, MAX_LEVEL};
use pamlab::noise::{GridSpec, NoiseSpec};

use crate::Command;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosBlock {
    pub levels: Vec<usize>,
    pub times: Vec<f64>,
    /// Evaluation point; the origin when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub replicas: usize,
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_stem")]
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderBlock {
    /// Ensemble stem inside `output_dir`.
    #[serde(default = "default_stem")]
    pub ensemble: String,
    pub time_lags: Vec<f64>,
    pub space_lags: Vec<f64>,
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub levels: Vec<usize>,
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    #[serde(default)]
    pub constants: BoundConstants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelftestBlock {
    /// Monte Carlo samples per chaos or simplex check.
    pub samples: u64,
    /// Noise replicas for the sampled-variance check.
    pub replicas: usize,
}

impl Default for SelftestBlock {
    fn default() -> Self {
        Self { samples: 200_000, replicas: 2000 }
    }
}

fn default_stem() -> String {
    "ensemble".into()
}

fn default_orders() -> Vec<u32> {
    vec![2, 4]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Worker threads; all cores when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chaos: Option<ChaosBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holder: Option<HolderBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selftest: Option<SelftestBlock>,
}

/// Every problem found in a configuration, one line each.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KNOWN_KEYS: [&str; 11] = [
    "master_seed",
    "workers",
    "output_dir",
    "spec",
    "grid",
    "u0",
    "chaos",
    "simulate",
    "holder",
    "bounds",
    "selftest",
];

/// Sets `path` (dot-separated) inside `root`, creating objects as needed.
/// The value is parsed as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form path=value"))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(format!("override path `{path}` is malformed"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            other => {
                *other = Value::Object(Map::new());
                other.as_object_mut().unwrap()
            }
        };
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj.entry(*key).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("path has at least one key")
}

fn block<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, errors: &mut Vec<String>) -> Option<T> {
    let v = obj.get(key)?;
    if v.is_null() {
        return None;
    }
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            errors.push(format!("{key}: {e}"));
            None
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON value, collecting one message per malformed block.
    pub fn from_value(v: &Value) -> Result<Self, ConfigErrors> {
        let obj = v
            .as_object()
            .ok_or_else(|| ConfigErrors(vec!["configuration must be a JSON object".into()]))?;
        let mut errors = Vec::new();
        for k in obj.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            errors.push(format!("{k}: unknown field"));
        }
        let master_seed = match obj.get("master_seed") {
            None => {
                errors.push("master_seed: required field is missing".into());
                None
            }
            Some(s) => match s.as_u64() {
                Some(n) => Some(n),
                None => {
                    errors.push(format!("master_seed: expected a non-negative integer, got {s}"));
                    None
                }
            },
        };
        let workers = block(obj, "workers", &mut errors);
        let output_dir = block(obj, "output_dir", &mut errors).unwrap_or_else(default_output);
        let cfg = ExperimentConfig {
            master_seed: master_seed.unwrap_or(0),
            workers,
            output_dir,
            spec: block(obj, "spec", &mut errors),
            grid: block(obj, "grid", &mut errors),
            u0: block(obj, "u0", &mut errors),
            chaos: block(obj, "chaos", &mut errors),
            simulate: block(obj, "simulate", &mut errors),
            holder: block(obj, "holder", &mut errors),
            bounds: block(obj, "bounds", &mut errors),
            selftest: block(obj, "selftest", &mut errors),
        };
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Reads `path`, applies the overrides in order and parses.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigErrors> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| ConfigErrors(vec![format!("{} is not valid JSON: {e}", path.display())]))?;
        let errs: Vec<String> = overrides.iter().filter_map(|o| apply_override(&mut value, o).err()).collect();
        if !errs.is_empty() {
            return Err(ConfigErrors(errs));
        }
        Self::from_value(&value)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every precondition `command` depends on.
    pub fn validate(&self, command: Command) -> Result<(), ConfigErrors> {
        let mut e = Vec::new();
        if self.workers == Some(0) {
            e.push("workers: must be >= 1".into());
        }
        let need_spec = matches!(command, Command::Chaos | Command::Simulate | Command::Bounds);
        if need_spec {
            match &self.spec {
                None => e.push("spec: required for this command".into()),
                Some(s) => {
                    if let Err(err) = s.check_hypotheses() {
                        e.push(format!("spec: {err}"));
                    }
                }
            }
        }
        match command {
            Command::Chaos => {
                let u0 = self.u0.unwrap_or(InitialCondition::ConstantOne);
                if let Err(err) = u0.validate() {
                    e.push(format!("u0: {err}"));
                }
                if u0 == InitialCondition::PointMass {
                    e.push("u0: point_mass has an infinite second moment and cannot be estimated".into());
                }
                match &self.chaos {
                    None => e.push("chaos: required for this command".into()),
                    Some(c) => {
                        if c.levels.is_empty() {
                            e.push("chaos.levels: must not be empty".into());
                        }
                        if let Some(n) = c.levels.iter().find(|n| **n > MAX_LEVEL) {
                            e.push(format!("chaos.levels: level {n} exceeds {MAX_LEVEL}"));
                        }
                        positive_list(&c.times, "chaos.times", &mut e);
                        if c.samples < 1000 {
                            e.push(format!("chaos.samples: must be >= 1000, got {}", c.samples));
                        }
                        if let (Some(x), Some(s)) = (&c.x, &self.spec) {
                            if x.len() != s.dim() {
                                e.push(format!("chaos.x: dimension {} does not match spec dimension {}", x.len(), s.dim()));
                            }
                        }
                    }
                }
            }
            Command::Simulate => {
                let u0 = self.u0.unwrap_or(InitialCondition::ConstantOne);
                if let Err(err) = u0.validate() {
                    e.push(format!("u0: {err}"));
                }
                if u0 == InitialCondition::PointMass {
                    e.push("u0: point_mass cannot be represented on the grid".into());
                }
                match &self.grid {
                    None => e.push("grid: required for this command".into()),
                    Some(g) => {
                        e.extend(g.violations());
                        if let Some(s) = &self.spec {
                            if s.dim() != g.d {
                                e.push(format!("grid.d: {} does not match spec dimension {}", g.d, s.dim()));
                            }
                        }
                    }
                }
                match &self.simulate {
                    None => e.push("simulate: required for this command".into()),
                    Some(s) => {
                        if s.replicas < 2 {
                            e.push(format!("simulate.replicas: must be >= 2, got {}", s.replicas));
                        }
                        if s.snapshot_times.is_empty() {
                            e.push("simulate.snapshot_times: must not be empty".into());
                        }
                        if let Some(g) = &self.grid {
                            for t in &s.snapshot_times {
                                let k = (t / g.dt).round();
                                if !(*t >= 0.0 && *t <= g.horizon * (1.0 + 1e-12)) || (k * g.dt - t).abs() > 1e-9 * g.dt.max(*t) {
                                    e.push(format!("simulate.snapshot_times: {t} is not a grid time in [0, {}]", g.horizon));
                                }
                            }
                        }
                        if s.stem.is_empty() {
                            e.push("simulate.stem: must not be empty".into());
                        }
                    }
                }
            }
            Command::Holder => match &self.holder {
                None => e.push("holder: required for this command".into()),
                Some(h) => {
                    positive_list(&h.time_lags, "holder.time_lags", &mut e);
                    positive_list(&h.space_lags, "holder.space_lags", &mut e);
                    if h.moment_orders.is_empty() || h.moment_orders.iter().any(|p| *p != 2 && *p != 4) {
                        e.push("holder.moment_orders: each order must be 2 or 4".into());
                    }
                }
            },
            Command::Bounds => match &self.bounds {
                None => e.push("bounds: required for this command".into()),
                Some(b) => {
                    positive_list(&b.times, "bounds.times", &mut e);
                    if b.moments.iter().any(|p| !(*p >= 2.0)) {
                        e.push("bounds.moments: each moment order must be >= 2".into());
                    }
                    let k = &b.constants;
                    if !(k.c > 0.0 && k.big_c > 0.0 && k.alpha2 >= 0.0) {
                        e.push("bounds.constants: c and big_c must be positive, alpha2 >= 0".into());
                    }
                }
            },
            Command::Selftest => {
                if let Some(s) = &self.selftest {
                    if s.samples < 1000 {
                        e.push(format!("selftest.samples: must be >= 1000, got {}", s.samples));
                    }
                    if s.replicas < 100 {
                        e.push(format!("selftest.replicas: must be >= 100, got {}", s.replicas));
                    }
                }
            }
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(e))
        }
    }
}

fn positive_list(v: &[f64], name: &str, e: &mut Vec<String>) {
    if v.is_empty() {
        e.push(format!("{name}: must not be empty"));
    } else if let Some(x) = v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        e.push(format!("{name}: values must be positive, got {x}"));
    }
}
