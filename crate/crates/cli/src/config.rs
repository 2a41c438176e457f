//! Run configuration files and `--set` overrides.

use std::path::{Path, PathBuf};

use physfit::discovery::DiscoveryConfig;
use physfit::knots::KnotConfig;
use physfit::model::{LossWeights, Observation};
use physfit::optimize::BscaConfig;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub problem: ProblemConfig,
    pub basis: BasisConfig,
    pub weights: WeightsConfig,
    pub bsca: BscaConfig,
    pub init: InitConfig,
    pub knots: KnotSchedule,
    pub discovery: DiscoverySettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output: PathBuf::from("out"),
            problem: ProblemConfig::default(),
            basis: BasisConfig::default(),
            weights: WeightsConfig::default(),
            bsca: BscaConfig::default(),
            init: InitConfig::default(),
            knots: KnotSchedule::default(),
            discovery: DiscoverySettings::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConfig {
    /// Built-in physics spec name.
    pub spec: Option<String>,
    /// Physics spec file (TOML), used instead of `spec`.
    pub spec_file: Option<PathBuf>,
    /// Dataset file: `.json` binary-grid sidecar or `.csv`.
    pub dataset: Option<PathBuf>,
    /// Generate the dataset in memory instead of reading it.
    pub generator: Option<GeneratorConfig>,
    /// Collocation dataset whose first field is the forcing `f`.
    pub collocation: Option<PathBuf>,
    /// Defaults to one direct observation per spec field, matched by name.
    pub observations: Vec<Observation>,
    /// Domain for CSV datasets; the bounding box when absent.
    pub domain: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// `ks`, `burgers`, `advdiff` or `multiscale`.
    pub name: String,
    pub nx: usize,
    pub nt: usize,
    pub lx: f64,
    pub lt: f64,
    pub seed: u64,
    pub nu: f64,
    pub noise: f64,
    pub noise_seed: u64,
    /// Data and collocation grid shapes of `advdiff`.
    pub data_shape: [usize; 3],
    pub colloc_shape: [usize; 3],
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            name: "ks".into(),
            nx: 128,
            nt: 75,
            lx: 63.5,
            lt: 37.0,
            seed: 0,
            nu: 0.1,
            noise: 0.0,
            noise_seed: 1,
            data_shape: [20, 12, 8],
            colloc_shape: [20, 12, 8],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasisConfig {
    /// Degree per dimension.
    pub degrees: Vec<usize>,
    /// Uniform breakpoints (endpoints included) per dimension.
    pub breakpoints: Vec<usize>,
    /// Knot file overriding `degrees`/`breakpoints`.
    pub knot_file: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightsConfig {
    pub data: Vec<f64>,
    pub ic: Vec<f64>,
    pub bc: Vec<f64>,
    pub mu: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig {
            data: vec![3.0],
            ic: vec![5.0],
            bc: vec![5.0],
            mu: 0.0,
        }
    }
}

impl WeightsConfig {
    pub fn to_weights(&self) -> LossWeights {
        LossWeights {
            data: self.data.clone(),
            ic: self.ic.clone(),
            bc: self.bc.clone(),
            mu: self.mu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Zeros,
    /// Ridge data fit for β, zero θ.
    Fit,
    /// `β ~ N(0, scale²)`, `θ ~ U(−1, 1)`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub kind: InitKind,
    pub scale: f64,
    /// Seed of the random initialization; the run seed when absent.
    pub seed: Option<u64>,
    pub theta: Option<Vec<f64>>,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: InitKind::Zeros,
            scale: 0.1,
            seed: None,
            theta: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnotSchedule {
    /// Rounds driven by the pure data fit before optimization starts.
    pub data_rounds: usize,
    pub data_n_new: Vec<usize>,
    #[serde(flatten)]
    pub adaptive: KnotConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoverySettings {
    /// Built-in library name.
    pub library: Option<String>,
    /// Library file (TOML), used instead of `library`.
    pub library_file: Option<PathBuf>,
    #[serde(flatten)]
    pub settings: DiscoveryConfig,
}

impl Default for DiscoverySettings {
    fn default() -> Self {
        DiscoverySettings {
            library: None,
            library_file: None,
            settings: DiscoveryConfig::default(),
        }
    }
}

/// Parses `key.path=value`; the value is read as TOML, falling back to a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), Failure> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::usage(format!("override `{assignment}` is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::usage(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Failure::usage(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Reads `path` (if any), applies overrides and resolves relative paths
/// against the config file's directory.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, Failure> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            let t: toml::Table = text
                .parse()
                .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
            (t, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::usage(format!("config: {e}")))?;
    let fix = |p: &mut Option<PathBuf>| {
        if let Some(q) = p {
            if q.is_relative() {
                let joined = base.join(&*q);
                *q = std::path::absolute(&joined).unwrap_or(joined);
            }
        }
    };
    fix(&mut cfg.problem.spec_file);
    fix(&mut cfg.problem.dataset);
    fix(&mut cfg.problem.collocation);
    fix(&mut cfg.basis.knot_file);
    fix(&mut cfg.discovery.library_file);
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        let p = &self.problem;
        if p.dataset.is_none() && p.generator.is_none() {
            return Err(Failure::usage("problem needs `dataset` or `generator`"));
        }
        for f in [&p.spec_file, &p.dataset, &p.collocation, &self.basis.knot_file, &self.discovery.library_file]
            .into_iter()
            .flatten()
        {
            if !f.exists() {
                return Err(Failure::usage(format!("file {} does not exist", f.display())));
            }
        }
        if self.basis.knot_file.is_none() {
            if self.basis.degrees.is_empty() || self.basis.degrees.len() != self.basis.breakpoints.len() {
                return Err(Failure::usage("basis needs matching `degrees` and `breakpoints`"));
            }
            if self.basis.breakpoints.iter().any(|&b| b < 2) {
                return Err(Failure::usage("every axis needs at least 2 breakpoints"));
            }
        }
        if !(self.init.scale >= 0.0 && self.init.scale.is_finite()) {
            return Err(Failure::usage("init.scale must be finite and non-negative"));
        }
        let d = &self.discovery.settings;
        if !(d.mu >= 0.0) || !(d.tau >= 0.0) {
            return Err(Failure::usage("discovery.mu and discovery.tau must be non-negative"));
        }
        self.bsca.validate().map_err(Failure::from)?;
        Ok(())
    }
}
