//! `train`: autoencoder or diffusion training depending on the config's
//! train_target.

use crate::common::{
    build_dataset, load_ae_checkpoint, load_optimizer, resolve_config, save_ae_checkpoint,
    save_optimizer, CommonArgs,
};
use hourglass_core::config::{write_atomic, RunConfig, RunManifest, TrainTarget};
use hourglass_core::diffusion::{DenoiserParams, NoiseSchedule};
use hourglass_core::error::{Error, Result};
use hourglass_core::graddiff::adam::OptimizerState;
use hourglass_core::graddiff::checkpoint::save_file;
use hourglass_core::graddiff::params::ParameterStore;
use hourglass_core::irreps::IrrepTensor;
use hourglass_core::layers::model::{run_autoencoder, HourglassModel};
use hourglass_core::metrics::{mean_std, recovery_metrics};
use hourglass_core::protein_io::types::ProteinFragment;
use hourglass_core::train::{train_autoencoder, train_denoiser, FragmentBatch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn run(args: &CommonArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out)?;
    match cfg.train_target {
        TrainTarget::Autoencoder => train_ae(&cfg, &out),
        TrainTarget::Diffusion => train_diffusion(&cfg, &out),
    }
}

fn metrics_writer(out: &Path) -> Result<std::fs::File> {
    Ok(std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("metrics.jsonl"))?)
}

pub fn validation_row(
    model: &HourglassModel,
    store: &ParameterStore<f32>,
    fragments: &[ProteinFragment],
) -> Result<serde_json::Value> {
    let mut ca = Vec::new();
    let mut aa = Vec::new();
    let mut ts = Vec::new();
    let mut ha = Vec::new();
    let mut acc = Vec::new();
    for frag in fragments {
        let outp = run_autoencoder(model, store, frag)?;
        let pred_labels: Vec<_> = outp.decoded.iter().map(|d| d.label).collect();
        let geo = hourglass_core::layers::model::decode_against_labels(
            &model.layout,
            &outp.codec_states,
            &frag.labels(),
        );
        let pred_frag = hourglass_core::layers::codec::decoded_to_fragment(&geo, &frag.source_id);
        let m = recovery_metrics(&pred_frag, &pred_labels, frag, &model.layout)?;
        ca.push(m.ca_rmsd);
        if let Some(v) = m.all_atom_rmsd {
            aa.push(v);
        }
        ts.push(m.gdt_ts);
        ha.push(m.gdt_ha);
        acc.push(m.residue_accuracy);
    }
    let pack = |vals: &Vec<f64>| {
        let (mean, std) = mean_std(vals);
        serde_json::json!({"mean": mean, "std": std})
    };
    Ok(serde_json::json!({
        "kind": "validation",
        "ca_rmsd": pack(&ca),
        "all_atom_rmsd": if aa.is_empty() { serde_json::Value::Null } else { pack(&aa) },
        "gdt_ts": pack(&ts),
        "gdt_ha": pack(&ha),
        "residue_accuracy": pack(&acc),
    }))
}

fn train_ae(cfg: &RunConfig, out: &Path) -> Result<()> {
    let start = std::time::Instant::now();
    let (fragments, data_hash) = build_dataset(cfg)?;
    let ckpt_path = out.join("checkpoint.bin");
    let opt_path = out.join("optimizer.bin");
    let (model, mut store, mut opt, start_epoch) = if cfg.resume && ckpt_path.exists() {
        let (ck_cfg, model, store) = load_ae_checkpoint(&ckpt_path)?;
        if ck_cfg.model.signatures() != cfg.model.signatures() {
            return Err(Error::Checkpoint(
                "checkpoint model layout does not match the config".into(),
            ));
        }
        let (opt, epoch) = load_optimizer(&opt_path, &store, cfg.train.optimizer)?;
        (model, store, opt, epoch)
    } else {
        let mut store: ParameterStore<f32> = ParameterStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = HourglassModel::register(&mut store, &mut rng, cfg.model.clone())?;
        let opt = OptimizerState::new(&store, cfg.train.optimizer);
        (model, store, opt, 0)
    };
    let batch = FragmentBatch::prepare(&model, fragments)?;
    let mut manifest = RunManifest::new(cfg.to_value(), cfg.seed, data_hash);
    let mut metrics = metrics_writer(out)?;
    let cadence = cfg.train.checkpoint_every;
    let settings = cfg.train.clone();
    train_autoencoder(
        &model,
        &mut store,
        &mut opt,
        &batch,
        &cfg.loss,
        &settings,
        start_epoch,
        |epoch, report, store, opt| {
            let row = serde_json::json!({"kind": "epoch", "epoch": epoch, "loss": report});
            writeln!(metrics, "{row}")?;
            if cadence > 0 && (epoch + 1) % cadence == 0 {
                save_ae_checkpoint(&ckpt_path, cfg, &model, store)?;
                save_optimizer(&opt_path, store, opt, epoch + 1)?;
            }
            Ok(())
        },
    )?;
    save_ae_checkpoint(&ckpt_path, cfg, &model, &store)?;
    save_optimizer(&opt_path, &store, &opt, settings.epochs)?;
    let row = validation_row(&model, &store, &batch.fragments)?;
    writeln!(metrics, "{row}")?;
    manifest.push(row);
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&out.join("manifest.json"))?;
    Ok(())
}

/// Encode the dataset through a trained autoencoder and fit the denoiser
/// on the bottleneck features.
fn train_diffusion(cfg: &RunConfig, out: &Path) -> Result<()> {
    let start = std::time::Instant::now();
    if cfg.diffusion.ae_checkpoint.is_empty() {
        return Err(Error::Config(
            "diffusion training needs diffusion.ae_checkpoint".into(),
        ));
    }
    let (_, model, ae_store) = load_ae_checkpoint(Path::new(&cfg.diffusion.ae_checkpoint))?;
    let (fragments, data_hash) = build_dataset(cfg)?;
    let mut latents: Vec<IrrepTensor> = Vec::new();
    let mut sample_length = None;
    for frag in &fragments {
        let outp = run_autoencoder(&model, &ae_store, frag)?;
        if outp.latent.len() != 1 {
            return Err(Error::Config(format!(
                "latent diffusion requires a unit-length bottleneck, got {} nodes; \
                 use a fragment length that coarsens to one node",
                outp.latent.len()
            )));
        }
        sample_length.get_or_insert(frag.len());
        if sample_length != Some(frag.len()) {
            return Err(Error::Config(
                "diffusion training requires a uniform fragment length".into(),
            ));
        }
        latents.push(outp.latent[0].1.clone());
    }
    let sig = model.config.latent_sig();
    let mut dn_store: ParameterStore<f32> = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd1ff);
    let denoiser = DenoiserParams::register(
        &mut dn_store,
        &mut rng,
        cfg.diffusion.denoiser.clone(),
        sig.clone(),
    )?;
    let schedule = NoiseSchedule::build(cfg.diffusion.t_steps, cfg.diffusion.schedule)?;
    let mut opt = OptimizerState::new(&dn_store, cfg.train.optimizer);
    let mut metrics = metrics_writer(out)?;
    let mut manifest = RunManifest::new(cfg.to_value(), cfg.seed, data_hash);
    let log_every = (cfg.diffusion.train_steps / 50).max(1);
    let history = train_denoiser(
        &denoiser,
        &mut dn_store,
        &mut opt,
        &latents,
        &schedule,
        cfg.diffusion.target,
        cfg.diffusion.train_steps,
        cfg.diffusion.batch_draws,
        cfg.seed ^ 0x10ad,
        |step, loss| {
            if step % log_every == 0 {
                writeln!(
                    metrics,
                    "{}",
                    serde_json::json!({"kind": "diffusion-step", "step": step, "loss": loss})
                )?;
            }
            Ok(())
        },
    )?;
    let mut ckpt_cfg = cfg.to_value();
    ckpt_cfg["diffusion"]["sample_length"] = serde_json::json!(sample_length.unwrap_or(0));
    let mut signatures = BTreeMap::new();
    signatures.insert("latent".to_string(), sig.to_string());
    std::fs::create_dir_all(out)?;
    save_file(
        &out.join("diffusion.bin"),
        &dn_store,
        ckpt_cfg,
        signatures,
    )?;
    manifest.push(serde_json::json!({
        "kind": "diffusion-final",
        "final_loss": history.last(),
        "steps": history.len(),
    }));
    manifest.wall_seconds = start.elapsed().as_secs_f64();
    manifest.save(&out.join("manifest.json"))?;
    write_atomic(
        &out.join("loss_history.csv"),
        history
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{i},{l}"))
            .collect::<Vec<_>>()
            .join("\n")
            .as_bytes(),
    )?;
    Ok(())
}
