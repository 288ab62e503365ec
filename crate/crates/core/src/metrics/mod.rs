//! Structural evaluation: Kabsch alignment, RMSD over atom subsets,
//! GDT-TS/GDT-HA, residue recovery and chemical-validity scans.

pub mod gdt;
pub mod kabsch;
pub mod validity;

pub use gdt::{gdt, gdt_ha, gdt_single, gdt_ts, GDT_HA_THRESHOLDS, GDT_TS_THRESHOLDS};
pub use kabsch::{kabsch_align, AlignmentResult};
pub use validity::{chemical_validity_scan, trajectory_validity, ValidityReport};

use crate::error::{Error, Result};
use crate::geom::{add, Vec3};
#[cfg(test)]
use crate::geom::{norm, sub};
use crate::layers::codec::CodecLayout;
use crate::losses::plan::LossPlan;
use crate::losses::resolve_pair_flips;
use crate::protein_io::types::{ProteinFragment, ResidueLabel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subset {
    CAlpha,
    Backbone,
    AllAtom,
}

fn subset_points(frag: &ProteinFragment, subset: Subset, layout: &CodecLayout) -> Vec<Vec3> {
    match subset {
        Subset::CAlpha => frag.ca_positions(),
        Subset::Backbone => {
            let mut out = Vec::new();
            for r in &frag.residues {
                out.push(add(r.ca, r.relative[0].unwrap())); // N
                out.push(r.ca);
                out.push(add(r.ca, r.relative[1].unwrap())); // C
                out.push(add(r.ca, r.relative[2].unwrap())); // O
            }
            out
        }
        Subset::AllAtom => {
            let plan = LossPlan::new(frag, layout, false);
            plan.gt
        }
    }
}

/// Post-alignment RMSD over a subset. In all-atom mode the side-chain
/// permutation resolution runs first (prediction against ground truth), so
/// a swapped unorderable pair costs nothing.
pub fn rmsd(
    pred: &ProteinFragment,
    truth: &ProteinFragment,
    subset: Subset,
    layout: &CodecLayout,
) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape("residue count mismatch".into()));
    }
    let pred_pts = subset_points(pred, subset, layout);
    let truth_pts = match subset {
        Subset::AllAtom => {
            if pred.labels() != truth.labels() {
                return Err(Error::Shape(
                    "all-atom correspondence requires matching labels".into(),
                ));
            }
            // Resolve pair flips on rigid-motion-free coordinates: align
            // under the original labeling first, then choose flips.
            let plan = LossPlan::new(truth, layout, false);
            let pre = kabsch_align(&pred_pts, &plan.gt)?;
            let moved: Vec<Vec3> = pred_pts.iter().map(|&p| pre.apply(p)).collect();
            let (flipped, _) = resolve_pair_flips(&plan, &moved, 1.0);
            flipped
        }
        _ => subset_points(truth, subset, layout),
    };
    let align = kabsch_align(&pred_pts, &truth_pts)?;
    Ok(align.rmsd)
}

/// Exact-match label recovery in percent.
pub fn residue_accuracy(pred: &[ResidueLabel], truth: &[ResidueLabel]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "label count mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Precondition("empty label lists".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// The Table-1-style metric row for one reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub ca_rmsd: f64,
    pub all_atom_rmsd: Option<f64>,
    pub gdt_ts: f64,
    pub gdt_ha: f64,
    pub residue_accuracy: f64,
}

pub fn recovery_metrics(
    pred: &ProteinFragment,
    pred_labels: &[ResidueLabel],
    truth: &ProteinFragment,
    layout: &CodecLayout,
) -> Result<RecoveryMetrics> {
    let ca_rmsd = rmsd(pred, truth, Subset::CAlpha, layout)?;
    let all_atom_rmsd = match layout.mode {
        crate::layers::codec::AtomMode::AllAtom => {
            Some(rmsd(pred, truth, Subset::AllAtom, layout)?)
        }
        crate::layers::codec::AtomMode::Backbone => None,
    };
    let a = pred.ca_positions();
    let b = truth.ca_positions();
    Ok(RecoveryMetrics {
        ca_rmsd,
        all_atom_rmsd,
        gdt_ts: gdt_ts(&a, &b)?,
        gdt_ha: gdt_ha(&a, &b)?,
        residue_accuracy: residue_accuracy(pred_labels, &truth.labels())?,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}
