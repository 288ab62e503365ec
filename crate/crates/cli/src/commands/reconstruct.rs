//! `reconstruct`: run one PDB file through a trained autoencoder, emit the
//! decoded structure and the recovery metrics.

use crate::common::{load_ae_checkpoint, resolve_config, CommonArgs};
use hourglass_core::config::{write_atomic, RunManifest};
use hourglass_core::error::{Error, Result};
use hourglass_core::layers::codec::decoded_to_fragment;
use hourglass_core::layers::model::{decode_against_labels, run_autoencoder};
use hourglass_core::metrics::recovery_metrics;
use hourglass_core::protein_io::parse::parse_pdb;
use hourglass_core::protein_io::types::ProteinFragment;
use hourglass_core::protein_io::write::write_pdb;
use std::path::{Path, PathBuf};

/// First chain of a PDB file as a complete, contiguous fragment.
pub fn fragment_from_pdb(path: &Path) -> Result<ProteinFragment> {
    let file = std::fs::File::open(path)?;
    let parsed = parse_pdb(std::io::BufReader::new(file))?;
    let chain = parsed
        .chains
        .first()
        .ok_or_else(|| Error::Parse { line: 0, message: "no chains found".into() })?;
    for w in chain.residues.windows(2) {
        if w[1].seq_num != w[0].seq_num + 1 {
            return Err(Error::Precondition(format!(
                "chain has a numbering gap at residue {}",
                w[0].seq_num
            )));
        }
    }
    if let Some(r) = chain.residues.iter().find(|r| !r.complete) {
        return Err(Error::Precondition(format!(
            "residue {} is incomplete",
            r.seq_num
        )));
    }
    Ok(ProteinFragment {
        residues: chain.residues.clone(),
        source_id: path.display().to_string(),
        chain: chain.id,
        start: 0,
    })
}

pub fn run(args: &CommonArgs, checkpoint: &Path, input: &Path) -> Result<()> {
    let cfg = resolve_config(args)?;
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out)?;
    let (ck_cfg, model, store) = load_ae_checkpoint(checkpoint)?;
    let fragment = fragment_from_pdb(input)?;
    model.config.level_lengths(fragment.len())?;
    let outp = run_autoencoder(&model, &store, &fragment)?;
    // Decoded PDB uses predicted labels; metrics use the ground-truth
    // label geometry so atom correspondence is defined.
    let decoded_frag = decoded_to_fragment(&outp.decoded, &fragment.source_id);
    write_atomic(&out.join("decoded.pdb"), write_pdb(&decoded_frag)?.as_bytes())?;
    let pred_labels: Vec<_> = outp.decoded.iter().map(|d| d.label).collect();
    let geo = decode_against_labels(&model.layout, &outp.codec_states, &fragment.labels());
    let pred_geo_frag = decoded_to_fragment(&geo, &fragment.source_id);
    let metrics = recovery_metrics(&pred_geo_frag, &pred_labels, &fragment, &model.layout)?;
    write_atomic(
        &out.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?.as_bytes(),
    )?;
    let mut manifest = RunManifest::new(
        cfg.to_value(),
        cfg.seed,
        hourglass_core::protein_io::types::content_hash(
            std::fs::read(input)?.as_slice(),
        ),
    );
    manifest.push(serde_json::json!({
        "kind": "reconstruct",
        "input": input.display().to_string(),
        "checkpoint_config": ck_cfg.to_value(),
        "metrics": metrics,
    }));
    manifest.save(&out.join("manifest.json"))?;
    Ok(())
}
