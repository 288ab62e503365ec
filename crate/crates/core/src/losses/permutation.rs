//! Resolution of side-chain permutation ambiguity: the decoder breaks pair
//! symmetry arbitrarily, so before any global loss the ground truth is
//! relabeled per residue to whichever pair assignment minimizes the
//! residue-internal vector-map loss. Enumeration over all flip
//! combinations (at most 4 per residue) guarantees the argmin; ties keep
//! the original order.

use crate::geom::Vec3;
use crate::losses::plan::LossPlan;
use crate::losses::vector_map_huber;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FlipChoice {
    pub residue: usize,
    pub pair: usize,
    pub flipped: bool,
}

/// Returns the flipped ground-truth positions and the chosen flips.
pub fn resolve_pair_flips(
    plan: &LossPlan,
    pred: &[Vec3],
    delta: f64,
) -> (Vec<Vec3>, Vec<FlipChoice>) {
    assert_eq!(pred.len(), plan.n_atoms);
    let mut flipped = plan.gt.clone();
    let mut choices = Vec::new();
    for (ri, slots) in plan.residues.iter().enumerate() {
        if slots.pairs.is_empty() {
            continue;
        }
        let range = slots.flat_range();
        let pred_slice = &pred[range.clone()];
        let n_pairs = slots.pairs.len();
        let mut best_mask = 0usize;
        let mut best_loss = f64::INFINITY;
        for mask in 0..(1usize << n_pairs) {
            let mut candidate: Vec<Vec3> = plan.gt[range.clone()].to_vec();
            for (k, &(fa, fb, _)) in slots.pairs.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    candidate.swap(fa - slots.flat_start, fb - slots.flat_start);
                }
            }
            let loss = vector_map_huber(pred_slice, &candidate, delta);
            if loss < best_loss {
                best_loss = loss;
                best_mask = mask;
            }
        }
        for (k, &(fa, fb, pair_idx)) in slots.pairs.iter().enumerate() {
            let flip = best_mask & (1 << k) != 0;
            if flip {
                flipped.swap(fa, fb);
            }
            choices.push(FlipChoice { residue: ri, pair: pair_idx, flipped: flip });
        }
    }
    (flipped, choices)
}
