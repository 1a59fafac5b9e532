//! Run configuration: one JSON file, overridden by flags and environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use spdest::data_io::{GeoPoint, Schema};
use spdest::mesh::MeshConfig;
use spdest::model::{InferenceConfig, ModelKind, ModelSpec};
use spdest::priors::PriorConfig;
use spdest::spde::SpdeConfig;
use spdest::synthetic::{site_lattice, random_sites, CovariateGenerator, TruthRecord};

use crate::error::CliError;
use crate::output::{sha256_hex, to_json_compact};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Observation table; written by `simulate`, read by everything else.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads (0 = all cores).
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Models fitted by `compare`.
    #[serde(default)]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub schema: Schema,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub spde: SpdeConfig,
    #[serde(default)]
    pub inference: InferenceConfig,
    /// Months `1..=train_months` are fitted, the rest validate. All months
    /// are fitted when absent.
    #[serde(default)]
    pub train_months: Option<usize>,
    #[serde(default)]
    pub prediction: Option<PredictionConfig>,
    #[serde(default = "default_seasons")]
    pub seasons: Vec<Season>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_model() -> ModelKind {
    ModelKind::FullSt
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Season {
    pub name: String,
    pub months: Vec<u32>,
}

/// Ethiopian seasons: bega (DJF), belg (MAM), kiremt (JJA), thedey (SON).
pub fn default_seasons() -> Vec<Season> {
    [("DJF", [12, 1, 2]), ("MAM", [3, 4, 5]), ("JJA", [6, 7, 8]), ("SON", [9, 10, 11])]
        .into_iter()
        .map(|(n, m)| Season {
            name: n.to_string(),
            months: m.to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionConfig {
    /// Prediction grid: lon, lat, year, month and every covariate column.
    pub grid: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SiteDesign {
    Lattice {
        lon: [f64; 2],
        lat: [f64; 2],
        nx: usize,
        ny: usize,
    },
    Random {
        lon: [f64; 2],
        lat: [f64; 2],
        n: usize,
    },
}

impl SiteDesign {
    pub fn sites(&self, seed: u64) -> Vec<GeoPoint> {
        match *self {
            SiteDesign::Lattice { lon, lat, nx, ny } => site_lattice((lon[0], lon[1]), (lat[0], lat[1]), nx, ny),
            SiteDesign::Random { lon, lat, n } => random_sites((lon[0], lon[1]), (lat[0], lat[1]), n, seed),
        }
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            SiteDesign::Lattice { lon, lat, .. } | SiteDesign::Random { lon, lat, .. } => (lon, lat),
        }
    }
}

/// Known parameters of a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub kind: ModelKind,
    pub beta: Vec<f64>,
    pub sigma_eps: f64,
    #[serde(default)]
    pub range_r: Option<f64>,
    #[serde(default)]
    pub sigma_omega: Option<f64>,
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub sigma_f: Option<f64>,
    #[serde(default)]
    pub phi_f: Option<f64>,
}

impl TruthConfig {
    pub fn record(&self, seed: u64) -> TruthRecord {
        TruthRecord {
            kind: self.kind,
            beta: self.beta.clone(),
            sigma_eps: self.sigma_eps,
            range_r: self.range_r,
            sigma_omega: self.sigma_omega,
            phi: self.phi,
            sigma_f: self.sigma_f,
            phi_f: self.phi_f,
            latent: Vec::new(),
            seed,
        }
    }
}

/// Quasi-random prediction grid over the site box, one row per point and
/// calendar month of `year`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGenerator {
    pub n_points: usize,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub sites: SiteDesign,
    pub n_times: usize,
    pub year0: i32,
    pub truth: TruthConfig,
    #[serde(default)]
    pub covariates: CovariateGenerator,
    #[serde(default)]
    pub grid: Option<GridGenerator>,
}

/// Values given on the command line or through the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub model: Option<ModelKind>,
    pub models: Option<Vec<ModelKind>>,
    pub train_months: Option<usize>,
    pub grid: Option<PathBuf>,
}

/// A loaded configuration with its source directory and hash.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: RunConfig,
    pub base_dir: PathBuf,
    pub hash: String,
}

impl Loaded {
    /// Resolves a configured path against the config file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_path(&self) -> Result<PathBuf, CliError> {
        let p = self
            .cfg
            .data
            .as_ref()
            .ok_or_else(|| CliError::config("config has no `data` path"))?;
        Ok(self.resolve(p))
    }

    /// Data path that must already exist.
    pub fn existing_data_path(&self) -> Result<PathBuf, CliError> {
        let p = self.data_path()?;
        if !p.is_file() {
            return Err(CliError::missing_path("data file", &p));
        }
        Ok(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.cfg.output_dir)
    }

    pub fn grid_path(&self) -> Option<PathBuf> {
        self.cfg.prediction.as_ref().map(|p| self.resolve(&p.grid))
    }

    pub fn spec(&self, kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            prior: self.cfg.prior,
            spde: self.cfg.spde,
            mesh_cfg: self.cfg.mesh,
            inference: InferenceConfig {
                threads: 0,
                ..self.cfg.inference.clone()
            },
        }
    }
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn set(obj: &mut Map<String, Value>, key: &str, v: Value) {
    obj.insert(key.to_string(), v);
}

fn path_value(p: &Path) -> Value {
    Value::String(absolute(p).to_string_lossy().into_owned())
}

/// Reads the config file and applies overrides (flags and environment
/// take precedence over the file).
pub fn load(path: &Path, ov: &Overrides) -> Result<Loaded, CliError> {
    if !path.is_file() {
        return Err(CliError::missing_path("config file", path));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())).with("path", path.display().to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::config("config must be a JSON object").with("path", path.display().to_string()))?;
    if let Some(s) = ov.seed {
        set(obj, "seed", Value::from(s));
    }
    if let Some(p) = &ov.data {
        set(obj, "data", path_value(p));
    }
    if let Some(p) = &ov.output_dir {
        set(obj, "output_dir", path_value(p));
    }
    if let Some(t) = ov.threads {
        set(obj, "threads", Value::from(t));
    }
    if let Some(m) = ov.model {
        set(obj, "model", Value::String(m.to_string()));
    }
    if let Some(ms) = &ov.models {
        set(obj, "models", Value::from(ms.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
    }
    if let Some(c) = ov.train_months {
        set(obj, "train_months", Value::from(c));
    }
    if let Some(g) = &ov.grid {
        let mut pred = obj.get("prediction").and_then(Value::as_object).cloned().unwrap_or_default();
        set(&mut pred, "grid", path_value(g));
        set(obj, "prediction", Value::Object(pred));
    }
    if !obj.contains_key("seed") {
        return Err(CliError::config("`seed` is mandatory").with("path", path.display().to_string()));
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())).with("path", path.display().to_string()))?;
    validate(&cfg)?;
    let base_dir = absolute(path).parent().map(Path::to_path_buf).unwrap_or_default();
    let hash = config_hash(&cfg)?;
    Ok(Loaded { cfg, base_dir, hash })
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.prior.validate()?;
    cfg.spde.validate()?;
    cfg.mesh.validate()?;
    for s in &cfg.seasons {
        if s.months.is_empty() || s.months.iter().any(|m| !(1..=12).contains(m)) {
            return Err(CliError::config(format!("season `{}` needs months in 1..=12", s.name)));
        }
    }
    if cfg.train_months == Some(0) {
        return Err(CliError::config("`train_months` must be at least 1"));
    }
    Ok(())
}

/// sha256 of the canonical config, without the output location and
/// thread settings (they do not change results).
pub fn config_hash(cfg: &RunConfig) -> Result<String, CliError> {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    c.threads = 0;
    c.inference.threads = 0;
    let mut v = serde_json::to_value(&c).map_err(|e| CliError::internal(e.to_string()))?;
    if let Some(o) = v.as_object_mut() {
        o.remove("output_dir");
        o.remove("threads");
    }
    Ok(sha256_hex(to_json_compact(&v)?.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn seed_is_mandatory() {
        let f = write(r#"{"data": "x.csv"}"#);
        let e = load(f.path(), &Overrides::default()).unwrap_err();
        assert_eq!(e.code, "config");
        let ok = load(
            f.path(),
            &Overrides {
                seed: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(ok.cfg.seed, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let f = write(r#"{"seed": 1, "mesh": {"max_edge": 3}}"#);
        assert!(load(f.path(), &Overrides::default()).is_err());
    }

    #[test]
    fn hash_ignores_output_and_threads() {
        let f = write(r#"{"seed": 1, "output_dir": "a", "threads": 2}"#);
        let a = load(f.path(), &Overrides::default()).unwrap();
        let b = load(
            f.path(),
            &Overrides {
                output_dir: Some("/tmp/other".into()),
                threads: Some(7),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.hash, b.hash);
        let c = load(
            f.path(),
            &Overrides {
                seed: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn flags_beat_file() {
        let f = write(r#"{"seed": 1, "model": "additive", "train_months": 12}"#);
        let l = load(
            f.path(),
            &Overrides {
                model: Some(ModelKind::CovariateOnly),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(l.cfg.model, ModelKind::CovariateOnly);
        assert_eq!(l.cfg.train_months, Some(12));
        assert_eq!(l.cfg.seasons.len(), 4);
    }
}
