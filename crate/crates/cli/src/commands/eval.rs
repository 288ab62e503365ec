//! `eval`: per-fragment and aggregate recovery metrics over a dataset,
//! plus an optional bottleneck scalar dump for external embedding tools.

use crate::common::{build_dataset, fmt_mean_std, load_ae_checkpoint, resolve_config, write_csv, CommonArgs};
use hourglass_core::config::{write_atomic, RunManifest};
use hourglass_core::error::{Error, Result};
use hourglass_core::layers::codec::decoded_to_fragment;
use hourglass_core::layers::model::{decode_against_labels, run_autoencoder};
use hourglass_core::metrics::{mean_std, recovery_metrics};
use std::path::{Path, PathBuf};

pub fn run(args: &CommonArgs, checkpoint: &Path) -> Result<()> {
    let cfg = resolve_config(args)?;
    let out = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out)?;
    let (_, model, store) = load_ae_checkpoint(checkpoint)?;
    let (fragments, data_hash) = build_dataset(&cfg)?;
    if fragments.is_empty() {
        return Err(Error::Config("empty dataset".into()));
    }
    let mut rows = Vec::new();
    let mut dump_rows = Vec::new();
    let mut ca = Vec::new();
    let mut aa = Vec::new();
    let mut ts = Vec::new();
    let mut ha = Vec::new();
    let mut acc = Vec::new();
    for frag in &fragments {
        let outp = run_autoencoder(&model, &store, frag)?;
        let pred_labels: Vec<_> = outp.decoded.iter().map(|d| d.label).collect();
        let geo = decode_against_labels(&model.layout, &outp.codec_states, &frag.labels());
        let pred_frag = decoded_to_fragment(&geo, &frag.source_id);
        let m = recovery_metrics(&pred_frag, &pred_labels, frag, &model.layout)?;
        ca.push(m.ca_rmsd);
        if let Some(v) = m.all_atom_rmsd {
            aa.push(v);
        }
        ts.push(m.gdt_ts);
        ha.push(m.gdt_ha);
        acc.push(m.residue_accuracy);
        rows.push(serde_json::json!({
            "source": frag.source_id,
            "length": frag.len(),
            "metrics": m,
        }));
        if cfg.dump_latents {
            // Bottleneck scalar coefficients, one row per fragment.
            let scalars: Vec<String> = outp
                .latent
                .iter()
                .flat_map(|(_, z)| z.block(0).unwrap_or(&[]).to_vec())
                .map(|v| format!("{v:.6}"))
                .collect();
            dump_rows.push(format!("{},{}", frag.source_id, scalars.join(",")));
        }
    }
    let aggregate = serde_json::json!({
        "ca_rmsd": fmt_mean_std(&ca),
        "all_atom_rmsd": if aa.is_empty() {
            serde_json::Value::Null
        } else {
            serde_json::Value::String(fmt_mean_std(&aa))
        },
        "gdt_ts": fmt_mean_std(&ts),
        "gdt_ha": fmt_mean_std(&ha),
        "residue_accuracy": fmt_mean_std(&acc),
        "ca_rmsd_mean": mean_std(&ca).0,
        "residue_accuracy_mean": mean_std(&acc).0,
        "fragments": fragments.len(),
    });
    write_atomic(
        &out.join("metrics.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "per_fragment": rows,
            "aggregate": aggregate,
        }))?
        .as_bytes(),
    )?;
    if cfg.dump_latents {
        write_csv(&out.join("latents.csv"), "source,scalars...", &dump_rows)?;
    }
    let mut manifest = RunManifest::new(cfg.to_value(), cfg.seed, data_hash);
    manifest.push(serde_json::json!({"kind": "eval", "aggregate": aggregate}));
    manifest.save(&out.join("manifest.json"))?;
    Ok(())
}
