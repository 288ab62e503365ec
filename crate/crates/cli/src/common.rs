//! Shared plumbing: config resolution, dataset assembly, checkpoint and
//! optimizer persistence, CSV emission.

use hourglass_core::config::{DatasetSource, RunConfig};
use hourglass_core::error::{Error, Result};
use hourglass_core::graddiff::adam::{OptimizerConfig, OptimizerState};
use hourglass_core::graddiff::checkpoint::{load_file, save_file};
use hourglass_core::graddiff::params::ParameterStore;
use hourglass_core::layers::codec::AtomMode;
use hourglass_core::layers::model::HourglassModel;
use hourglass_core::protein_io::fragment::{build_index, load_fragments};
use hourglass_core::protein_io::ideal::ideal_test_fragment;
use hourglass_core::protein_io::types::{content_hash, FilterProvenance, ProteinFragment};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct CommonArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub mode: Option<String>,
}

pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let bytes = std::fs::read(&args.config)?;
    let mut value: serde_json::Value = serde_json::from_slice(&bytes)?;
    for spec in &args.overrides {
        hourglass_core::config::apply_override(&mut value, spec)?;
    }
    let mut cfg = RunConfig::from_value(value)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(mode) = &args.mode {
        cfg.set_mode(match mode.as_str() {
            "all-atom" => AtomMode::AllAtom,
            "backbone" => AtomMode::Backbone,
            other => {
                return Err(Error::Config(format!(
                    "unknown mode {other:?}, expected all-atom or backbone"
                )))
            }
        });
    }
    Ok(cfg)
}

/// Dataset fragments plus a content hash for the manifest.
pub fn build_dataset(cfg: &RunConfig) -> Result<(Vec<ProteinFragment>, String)> {
    match cfg.dataset.source {
        DatasetSource::Synthetic => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xda7a_5e7);
            let mut fragments = Vec::with_capacity(cfg.dataset.synthetic_count);
            let (lo, hi) = (
                cfg.dataset.synthetic_min_length,
                cfg.dataset.synthetic_max_length.max(cfg.dataset.synthetic_min_length),
            );
            let mut attempts = 0;
            while fragments.len() < cfg.dataset.synthetic_count {
                attempts += 1;
                if attempts > 100 * cfg.dataset.synthetic_count {
                    return Err(Error::Config(
                        "no synthetic lengths compatible with the model levels".into(),
                    ));
                }
                let len = rand::Rng::random_range(&mut rng, lo..=hi);
                if cfg.model.level_lengths(len).is_err() {
                    continue;
                }
                let id = format!("synthetic-{:04}", fragments.len());
                fragments.push(ideal_test_fragment(&mut rng, len, &id));
            }
            let mut hash_input = Vec::new();
            for f in &fragments {
                hash_input.extend_from_slice(f.source_id.as_bytes());
                for r in &f.residues {
                    hash_input.push(r.label.index() as u8);
                    for c in r.ca {
                        hash_input.extend_from_slice(&c.to_le_bytes());
                    }
                }
            }
            Ok((fragments, content_hash(&hash_input)))
        }
        DatasetSource::PdbDir => {
            let filters = FilterProvenance {
                resolution_cutoff: cfg.dataset.resolution_cutoff,
                max_sequence_length: cfg.dataset.max_sequence_length,
                fragment_length: cfg.dataset.fragment_length,
                stride: cfg.dataset.stride,
                require_chirality: true,
            };
            let index = build_index(Path::new(&cfg.dataset.dir), &filters)?;
            let mut fragments = load_fragments(&index)?;
            if cfg.dataset.max_fragments > 0 {
                fragments.truncate(cfg.dataset.max_fragments);
            }
            if fragments.is_empty() {
                return Err(Error::Config("dataset produced no fragments".into()));
            }
            Ok((fragments, index.content_hash))
        }
    }
}

/// Register the model for a config and swap in loaded parameter values,
/// verifying names and shapes.
pub fn model_with_store(
    cfg: &RunConfig,
    loaded: ParameterStore<f32>,
) -> Result<(HourglassModel, ParameterStore<f32>)> {
    let mut fresh: ParameterStore<f32> = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = HourglassModel::register(&mut fresh, &mut rng, cfg.model.clone())?;
    if fresh.len() != loaded.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model needs {}",
            loaded.len(),
            fresh.len()
        )));
    }
    for (a, b) in fresh.iter().zip(loaded.iter()) {
        if a.name != b.name || a.shape != b.shape {
            return Err(Error::Checkpoint(format!(
                "checkpoint entry {} ({:?}) does not match model entry {} ({:?})",
                b.name, b.shape, a.name, a.shape
            )));
        }
    }
    Ok((model, loaded))
}

pub fn load_ae_checkpoint(path: &Path) -> Result<(RunConfig, HourglassModel, ParameterStore<f32>)> {
    let (header, store) = load_file(path)?;
    let cfg = RunConfig::from_value(header.config.clone())?;
    let (model, store) = model_with_store(&cfg, store)?;
    Ok((cfg, model, store))
}

pub fn save_ae_checkpoint(
    path: &Path,
    cfg: &RunConfig,
    model: &HourglassModel,
    store: &ParameterStore<f32>,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_file(path, store, cfg.to_value(), model.config.signatures())
}

/// Optimizer persistence in the same container format: moments as arrays
/// named adam.m.* / adam.v.* plus the step counter and trainer epoch.
pub fn save_optimizer(
    path: &Path,
    params: &ParameterStore<f32>,
    opt: &OptimizerState<f32>,
    epoch: usize,
) -> Result<()> {
    let mut store: ParameterStore<f32> = ParameterStore::new();
    let (m, v) = opt.moments();
    for (i, e) in params.iter().enumerate() {
        store.insert(&format!("adam.m.{}", e.name), e.shape.clone(), m[i].clone(), "state");
        store.insert(&format!("adam.v.{}", e.name), e.shape.clone(), v[i].clone(), "state");
    }
    store.insert("adam.step", vec![1], vec![opt.step as f32], "state");
    store.insert("trainer.epoch", vec![1], vec![epoch as f32], "state");
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_file(path, &store, serde_json::json!({}), BTreeMap::new())
}

pub fn load_optimizer(
    path: &Path,
    params: &ParameterStore<f32>,
    config: OptimizerConfig,
) -> Result<(OptimizerState<f32>, usize)> {
    let (_, store) = load_file(path)?;
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    for e in params.iter() {
        m.push(store.values(&format!("adam.m.{}", e.name)).to_vec());
        v.push(store.values(&format!("adam.v.{}", e.name)).to_vec());
    }
    let step = store.values("adam.step")[0] as u64;
    let epoch = store.values("trainer.epoch")[0] as usize;
    let opt = OptimizerState::restore(params, config, step, m, v)?;
    Ok((opt, epoch))
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    hourglass_core::config::write_atomic(path, text.as_bytes())
}

pub fn fmt_mean_std(values: &[f64]) -> String {
    let (mean, std) = hourglass_core::metrics::mean_std(values);
    format!("{mean:.2} \u{b1} {std:.2}")
}
