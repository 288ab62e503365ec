//! Run configuration: one JSON document defining the experiment, with
//! dotted-path overrides, plus the run manifest format.

use crate::diffusion::{DenoiserConfig, LossTarget, SampleMode, ScheduleShape};
use crate::error::{Error, Result};
use crate::layers::codec::AtomMode;
use crate::layers::model::ModelConfig;
use crate::losses::LossWeights;
use crate::train::TrainSettings;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    /// Scan a directory of PDB files.
    PdbDir,
    /// Generate ideal-geometry fragments at desk scale.
    Synthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub dir: String,
    pub fragment_length: usize,
    pub stride: usize,
    pub resolution_cutoff: f64,
    pub max_sequence_length: usize,
    pub max_fragments: usize,
    /// Synthetic source: number of fragments and length range.
    pub synthetic_count: usize,
    pub synthetic_min_length: usize,
    pub synthetic_max_length: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: DatasetSource::Synthetic,
            dir: String::new(),
            fragment_length: 160,
            stride: 160,
            resolution_cutoff: 2.5,
            max_sequence_length: 512,
            max_fragments: 0,
            synthetic_count: 10,
            synthetic_min_length: 48,
            synthetic_max_length: 62,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainTarget {
    Autoencoder,
    Diffusion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionRunConfig {
    pub t_steps: usize,
    pub schedule: ScheduleShape,
    pub denoiser: DenoiserConfig,
    pub target: LossTarget,
    pub train_steps: usize,
    pub batch_draws: usize,
    pub sample_steps: usize,
    pub sample_mode: SampleMode,
    /// Autoencoder checkpoint whose bottleneck the diffusion model lives on.
    pub ae_checkpoint: String,
}

impl Default for DiffusionRunConfig {
    fn default() -> Self {
        DiffusionRunConfig {
            t_steps: 1000,
            schedule: ScheduleShape::Cosine,
            denoiser: DenoiserConfig::default(),
            target: LossTarget::Z0,
            train_steps: 5000,
            batch_draws: 4,
            sample_steps: 50,
            sample_mode: SampleMode::Deterministic,
            ae_checkpoint: String::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub train_target: TrainTarget,
    pub model: ModelConfig,
    pub loss: LossWeights,
    pub train: TrainSettings,
    pub dataset: DatasetConfig,
    pub diffusion: DiffusionRunConfig,
    /// Resume from checkpoints in out_dir when present.
    pub resume: bool,
    /// Dump bottleneck scalar coefficients during eval.
    pub dump_latents: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: "out".to_string(),
            train_target: TrainTarget::Autoencoder,
            model: ModelConfig::default(),
            loss: LossWeights::default(),
            train: TrainSettings::default(),
            dataset: DatasetConfig::default(),
            diffusion: DiffusionRunConfig::default(),
            resume: false,
            dump_latents: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = std::fs::read(path)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        RunConfig::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Mode shortcut used by the CLI --mode flag.
    pub fn set_mode(&mut self, mode: AtomMode) {
        self.model.mode = mode;
    }
}

/// Apply one `KEY=VALUE` override with a dotted path; the value is parsed
/// as JSON with a string fallback.
pub fn apply_override(config: &mut serde_json::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} must be KEY=VALUE")))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = config;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cursor {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                _ => return Err(Error::Config(format!("path {path:?} is not an object"))),
            }
        }
        cursor = cursor
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("path {path:?} is not an object")))?
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Append-only run manifest: config echo plus metric rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub seed: u64,
    pub content_hash: String,
    pub rows: Vec<serde_json::Value>,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, seed: u64, content_hash: String) -> RunManifest {
        RunManifest { config, seed, content_hash, rows: Vec::new(), wall_seconds: 0.0 }
    }

    pub fn push(&mut self, row: serde_json::Value) {
        self.rows.push(row);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }
}

/// Write via a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrip() {
        let cfg = RunConfig::default();
        let value = cfg.to_value();
        let back = RunConfig::from_value(value.clone()).unwrap();
        assert_eq!(back.to_value(), value);
    }

    #[test]
    fn overrides_apply_with_type_parsing() {
        let mut value = RunConfig::default().to_value();
        apply_override(&mut value, "seed=42").unwrap();
        apply_override(&mut value, "model.kernel=3").unwrap();
        apply_override(&mut value, "model.channels=[8,12]").unwrap();
        apply_override(&mut value, "model.levels=1").unwrap();
        apply_override(&mut value, "out_dir=runs/a").unwrap();
        let cfg = RunConfig::from_value(value).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.model.kernel, 3);
        assert_eq!(cfg.model.channels, vec![8, 12]);
        assert_eq!(cfg.out_dir, "runs/a");
    }

    #[test]
    fn bad_override_is_an_error() {
        let mut value = RunConfig::default().to_value();
        assert!(apply_override(&mut value, "no-equals-sign").is_err());
    }

    #[test]
    fn invalid_model_rejected() {
        let mut value = RunConfig::default().to_value();
        apply_override(&mut value, "model.levels=3").unwrap();
        // channels stays at 3 entries -> mismatch.
        assert!(RunConfig::from_value(value).is_err());
    }
}
