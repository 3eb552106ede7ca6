//! Pipeline configuration: JSON file, dotted `--set` overrides, hashing and
//! per-stage seeds.

use std::path::{Path, PathBuf};

use chartkit::charting::TrainConfig;
use chartkit::metrics::{Normalization, ReferenceKind};
use chartkit::preprocess::default_lags;
use chartkit::synthgen::{ArrayGeometry, ImpairmentConfig, Scatterer, Scene, TrajectoryConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Bundled configurations, selectable by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("toy", include_str!("../configs/toy.json")),
    ("walk", include_str!("../configs/walk.json")),
    ("circle", include_str!("../configs/circle.json")),
    ("circle-semi", include_str!("../configs/circle-semi.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomScatterers {
    pub count: usize,
    #[serde(default)]
    pub center: [f64; 2],
    pub half_width: f64,
    #[serde(default = "default_max_height")]
    pub max_height: f64,
    #[serde(default = "default_strength")]
    pub strength: f64,
}

fn default_max_height() -> f64 {
    10.0
}

fn default_strength() -> f64 {
    1.0
}

/// Scene parameters; omitted fields take the library defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneBlock {
    pub array: ArrayGeometry,
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub subcarrier_count: usize,
    pub bs_position: [f64; 3],
    pub bs_azimuth: f64,
    pub ue_height: f64,
    pub los: bool,
    pub los_gain: Vec<[f64; 2]>,
    pub scatterers: Vec<Scatterer>,
    /// Placed with a seed derived from the pipeline seed.
    pub random_scatterers: Option<RandomScatterers>,
    /// `null` disables receiver noise.
    pub snr_db: Option<f64>,
}

impl Default for SceneBlock {
    fn default() -> Self {
        let s = Scene::default();
        Self {
            array: s.array,
            carrier_frequency: s.carrier_frequency,
            bandwidth: s.bandwidth,
            subcarrier_count: s.subcarrier_count,
            bs_position: s.bs_position,
            bs_azimuth: s.bs_azimuth,
            ue_height: s.ue_height,
            los: s.los,
            los_gain: s.los_gain,
            scatterers: s.scatterers,
            random_scatterers: None,
            snr_db: s.snr_db,
        }
    }
}

impl SceneBlock {
    pub fn build(&self, seed: u64) -> Scene {
        let scene = Scene {
            array: self.array.clone(),
            carrier_frequency: self.carrier_frequency,
            bandwidth: self.bandwidth,
            subcarrier_count: self.subcarrier_count,
            bs_position: self.bs_position,
            bs_azimuth: self.bs_azimuth,
            ue_height: self.ue_height,
            los: self.los,
            los_gain: self.los_gain.clone(),
            scatterers: self.scatterers.clone(),
            snr_db: self.snr_db,
        };
        match &self.random_scatterers {
            Some(r) => scene.with_random_scatterers(r.count, r.center, r.half_width, r.max_height, r.strength, seed),
            None => scene,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessBlock {
    pub lags: Vec<usize>,
    /// Past snapshots stacked with each one (L).
    pub meta_window: usize,
}

impl Default for PreprocessBlock {
    fn default() -> Self {
        Self { lags: default_lags(), meta_window: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Triplet,
    Siamese,
    Autoencoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Pca,
    Mds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationBlock {
    pub k: usize,
    pub reference: ReferenceKind,
    pub normalization: Normalization,
    pub baselines: Vec<Baseline>,
    /// MDS runs on an evenly spaced subsample of at most this many rows.
    pub mds_max_points: usize,
}

impl Default for EvaluationBlock {
    fn default() -> Self {
        Self {
            k: 50,
            reference: ReferenceKind::Geographic,
            normalization: Normalization::Canonical,
            baselines: vec![Baseline::Pca],
            mds_max_points: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every random draw in the pipeline derives from this value.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub scene: SceneBlock,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub impairments: ImpairmentConfig,
    #[serde(default)]
    pub preprocess: PreprocessBlock,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub evaluation: EvaluationBlock,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("chartkit-out")
}

/// Stage labels for [`PipelineConfig::stage_seed`].
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Scene,
    Trajectory,
    Synthesis,
    Training,
}

impl Stage {
    fn label(self) -> &'static str {
        match self {
            Stage::Scene => "scene",
            Stage::Trajectory => "trajectory",
            Stage::Synthesis => "synthesis",
            Stage::Training => "training",
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: PipelineConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `source`, which is a file path or the name of a bundled config.
    pub fn load(source: &str, overrides: &[String]) -> Result<Self, CliError> {
        let path = Path::new(source);
        let text = if path.exists() {
            std::fs::read_to_string(path).map_err(CliError::io(path))?
        } else if let Some(text) = bundled(source) {
            text.to_string()
        } else {
            return Err(CliError::Config(format!("`{source}` is neither a file nor a bundled config")));
        };
        Self::from_json(&text, overrides)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.trajectory.seed != 0 || self.training.seed != 0 {
            return Err(CliError::Config("stage seeds are derived from the top-level `seed`; remove trajectory.seed and training.seed".into()));
        }
        self.scene.build(0).validate()?;
        self.impairments.validate()?;
        self.training.validate()?;
        if self.preprocess.lags.is_empty() {
            return Err(CliError::Config("preprocess.lags is empty".into()));
        }
        if self.evaluation.k == 0 {
            return Err(CliError::Config("evaluation.k must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stage.label().as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    pub fn scene(&self) -> Scene {
        self.scene.build(self.stage_seed(Stage::Scene))
    }

    pub fn trajectory(&self) -> TrajectoryConfig {
        TrajectoryConfig { seed: self.stage_seed(Stage::Trajectory), ..self.trajectory.clone() }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig { seed: self.stage_seed(Stage::Training), ..self.training.clone() }
    }
}

/// Applies `a.b.c=value`; the value is parsed as JSON and falls back to a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override path `{path}`")));
    }
    let mut node = root;
    for (n, key) in keys.iter().enumerate() {
        let last = n + 1 == keys.len();
        let obj = match node {
            Value::Object(map) => map,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just created")
            }
            _ => return Err(CliError::Config(format!("override `{path}`: `{}` is not an object", keys[..n].join(".")))),
        };
        if last {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    Ok(())
}
