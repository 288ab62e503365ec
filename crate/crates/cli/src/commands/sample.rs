//! `sample`: draw latents from a trained diffusion model, decode them to
//! structures, and emit validity reports and marginal statistics.

use crate::common::{load_ae_checkpoint, resolve_config, write_csv, CommonArgs};
use hourglass_core::config::{write_atomic, RunConfig, RunManifest};
use hourglass_core::diffusion::{sample, DenoiserParams, NoiseSchedule};
use hourglass_core::error::{Error, Result};
use hourglass_core::geom::{norm, sub};
use hourglass_core::graddiff::checkpoint::{load_file, save_file};
use hourglass_core::graddiff::params::ParameterStore;
use hourglass_core::irreps::IrrepTensor;
use hourglass_core::layers::codec::decoded_to_fragment;
use hourglass_core::layers::model::decode_latent;
use hourglass_core::losses::plan::LossPlan;
use hourglass_core::metrics::chemical_validity_scan;
use hourglass_core::protein_io::write::write_pdb;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Histogram {
        Histogram { lo, hi, counts: vec![0; bins] }
    }

    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let t = ((v - self.lo) / (self.hi - self.lo) * bins as f64).floor();
        let idx = (t.max(0.0) as usize).min(bins - 1);
        self.counts[idx] += 1;
    }

    pub fn rows(&self, name: &str) -> Vec<String> {
        let bins = self.counts.len();
        let w = (self.hi - self.lo) / bins as f64;
        (0..bins)
            .map(|i| {
                format!(
                    "{name},{:.4},{:.4},{}",
                    self.lo + i as f64 * w,
                    self.lo + (i + 1) as f64 * w,
                    self.counts[i]
                )
            })
            .collect()
    }
}

pub fn run(
    args: &CommonArgs,
    ae_checkpoint: &Path,
    diffusion_checkpoint: &Path,
    count: usize,
) -> Result<()> {
    let cfg = resolve_config(args)?;
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out)?;
    let (_, model, ae_store) = load_ae_checkpoint(ae_checkpoint)?;
    let (dn_header, dn_store) = load_file(diffusion_checkpoint)?;
    let latent_sig = model.config.latent_sig();
    let stored_sig = dn_header
        .signatures
        .get("latent")
        .ok_or_else(|| Error::Checkpoint("diffusion checkpoint lacks a latent signature".into()))?;
    if stored_sig != &latent_sig.to_string() {
        return Err(Error::Checkpoint(format!(
            "signature mismatch: diffusion checkpoint has {stored_sig}, autoencoder bottleneck is {latent_sig}"
        )));
    }
    let dn_cfg = RunConfig::from_value(dn_header.config.clone())?;
    let sample_length = dn_header.config["diffusion"]["sample_length"]
        .as_u64()
        .unwrap_or(0) as usize;
    if sample_length == 0 {
        return Err(Error::Checkpoint(
            "diffusion checkpoint lacks diffusion.sample_length".into(),
        ));
    }
    let mut dn_reg: ParameterStore<f32> = ParameterStore::new();
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(0);
    let denoiser = DenoiserParams::register(
        &mut dn_reg,
        &mut rng,
        dn_cfg.diffusion.denoiser.clone(),
        latent_sig.clone(),
    )?;
    for (a, b) in dn_reg.iter().zip(dn_store.iter()) {
        if a.name != b.name || a.shape != b.shape {
            return Err(Error::Checkpoint(format!(
                "diffusion checkpoint entry {} does not match denoiser layout",
                b.name
            )));
        }
    }
    let schedule = NoiseSchedule::build(dn_cfg.diffusion.t_steps, dn_cfg.diffusion.schedule)?;
    let lengths = model.config.level_lengths(sample_length)?;
    let tracker: Vec<usize> = lengths[..model.config.levels].to_vec();

    let mut latent_dump: ParameterStore<f32> = ParameterStore::new();
    let mut validity_rows = Vec::new();
    let mut ca_hist = Histogram::new(2.0, 6.0, 40);
    let mut bond_hist = Histogram::new(1.0, 2.0, 50);
    let mut manifest = RunManifest::new(cfg.to_value(), cfg.seed, String::new());
    for i in 0..count {
        let z: IrrepTensor = sample(
            &denoiser,
            &dn_store,
            &schedule,
            dn_cfg.diffusion.sample_steps,
            cfg.seed.wrapping_add(i as u64),
            dn_cfg.diffusion.sample_mode,
        )?;
        latent_dump.insert(
            &format!("sample_{i:04}"),
            vec![z.signature().dim()],
            z.to_flat().iter().map(|&x| x as f32).collect(),
            "sampled",
        );
        // De-canonicalize: bottleneck anchor at the origin.
        let decoded = decode_latent(&model, &ae_store, &[([0.0; 3], z)], &tracker)?;
        let frag = decoded_to_fragment(&decoded, &format!("sample-{i:04}"));
        write_atomic(
            &out.join(format!("sample_{i:04}.pdb")),
            write_pdb(&frag)?.as_bytes(),
        )?;
        let report = chemical_validity_scan(&frag, &model.layout, cfg.loss.clash_tau)?;
        validity_rows.push(format!(
            "{i},{},{},{},{}",
            report.bond_mean_dev, report.angle_mean_dev, report.clash_count, report.n_bonds
        ));
        manifest.push(serde_json::json!({"kind": "sample", "index": i, "validity": report}));
        for w in frag.residues.windows(2) {
            ca_hist.add(norm(sub(w[1].ca, w[0].ca)));
        }
        let plan = LossPlan::new(&frag, &model.layout, false);
        for &(a, b, _) in &plan.bonds {
            bond_hist.add(norm(sub(plan.gt[a], plan.gt[b])));
        }
    }
    save_file(
        &out.join("latents.bin"),
        &latent_dump,
        serde_json::json!({"latent_signature": latent_sig.to_string(), "count": count}),
        BTreeMap::from([("latent".to_string(), latent_sig.to_string())]),
    )?;
    write_csv(
        &out.join("validity.csv"),
        "sample,bond_mean_dev,angle_mean_dev,clash_count,n_bonds",
        &validity_rows,
    )?;
    let mut hist_rows = ca_hist.rows("ca_ca_distance");
    hist_rows.extend(bond_hist.rows("bond_length"));
    write_csv(
        &out.join("histograms.csv"),
        "series,bin_lo,bin_hi,count",
        &hist_rows,
    )?;
    manifest.push(serde_json::json!({
        "kind": "sampling-config",
        "schedule_steps": dn_cfg.diffusion.t_steps,
        "sample_steps": dn_cfg.diffusion.sample_steps,
        "mode": dn_cfg.diffusion.sample_mode,
        "count": count,
    }));
    manifest.save(&out.join("manifest.json"))?;
    Ok(())
}
