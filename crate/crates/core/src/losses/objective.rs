//! The weighted training objective assembled on the tape.

use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use crate::layers::blocks::{normalize3_safe, NodeVar};
use crate::layers::model::DecodedNodeVars;
use crate::losses::permutation::{resolve_pair_flips, FlipChoice};
use crate::losses::plan::{full_of_rel, LossPlan};
use crate::losses::LossWeights;
use crate::protein_io::ideal::measure_torsion;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct LossVars {
    pub total: Var,
    pub vector_map: Var,
    pub cross_entropy: Var,
    pub bond: Var,
    pub angle: Var,
    pub dihedral: Var,
    pub clash: Var,
    pub latent_reg: Option<Var>,
    pub flips: Vec<FlipChoice>,
}

/// Per-term values and the weighted total of one evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub vector_map: f64,
    pub cross_entropy: f64,
    pub bond: f64,
    pub angle: f64,
    pub dihedral: f64,
    pub clash: f64,
    pub latent_reg: f64,
    pub total: f64,
    pub flips: Vec<FlipChoice>,
}

/// Build the full objective. Decoded nodes must align with the plan
/// (ground-truth labels select the slots); permutation resolution runs
/// first on the forward values and relabels the ground truth for every
/// global term.
pub fn total_loss_tape<F: Real>(
    tape: &mut Tape<F>,
    plan: &LossPlan,
    weights: &LossWeights,
    decoded: &[DecodedNodeVars],
    latent: Option<&[NodeVar]>,
) -> LossVars {
    assert_eq!(decoded.len(), plan.residues.len());
    // Flat atom vars: CA then covered atoms, matching the plan order.
    let mut atom_vars: Vec<Var> = Vec::with_capacity(plan.n_atoms);
    for (node, slots) in decoded.iter().zip(&plan.residues) {
        atom_vars.push(node.anchor);
        debug_assert_eq!(node.atoms.len(), slots.covered_rel.len());
        for (&(rel, var), &want_rel) in node.atoms.iter().zip(&slots.covered_rel) {
            debug_assert_eq!(rel, want_rel, "atom order mismatch");
            let _ = full_of_rel(rel);
            atom_vars.push(var);
        }
    }
    let pred_concat = tape.concat(&atom_vars);
    // Permutation resolution on the forward values.
    let pred_values: Vec<[f64; 3]> = atom_vars
        .iter()
        .map(|&v| {
            let p = tape.value(v);
            [p[0].as_f64(), p[1].as_f64(), p[2].as_f64()]
        })
        .collect();
    let (flipped_gt, flips) = resolve_pair_flips(plan, &pred_values, weights.huber_delta);
    let gt_flat: Arc<Vec<f64>> = Arc::new(flipped_gt.iter().flatten().copied().collect());

    let vector_map = tape.huber_vector_map(pred_concat, Arc::clone(&gt_flat), weights.huber_delta);

    let logit_vars: Vec<Var> = decoded.iter().map(|d| d.logits).collect();
    let logits_cat = tape.concat(&logit_vars);
    let cross_entropy = tape.cross_entropy(logits_cat, Arc::new(plan.labels.clone()), 20);

    let bond = tape.bond_term(pred_concat, Arc::new(plan.bonds.clone()));
    let angle = angle_term(tape, &atom_vars, &plan.angles);
    let dihedral = dihedral_term(tape, &atom_vars, &plan.torsion_quads, &flipped_gt);
    let clash = tape.clash_term(
        pred_concat,
        Arc::new(plan.clash_pairs.clone()),
        weights.clash_tau,
    );

    let latent_reg = latent.map(|nodes| {
        let mut parts = Vec::new();
        for n in nodes {
            for (idx, &(l, d)) in n.feat.sig.entries().iter().enumerate() {
                parts.push(tape.latent_reg_block(n.feat.blocks[idx], d, 2 * l + 1));
            }
        }
        let cat = tape.concat(&parts);
        let s = tape.sum(cat);
        tape.scale(s, 1.0 / nodes.len() as f64)
    });

    let mut weighted = vec![
        tape.scale(vector_map, weights.vector_map),
        tape.scale(cross_entropy, weights.cross_entropy),
        tape.scale(bond, weights.bond),
        tape.scale(angle, weights.angle),
        tape.scale(dihedral, weights.dihedral),
        tape.scale(clash, weights.clash),
    ];
    if let Some(lr) = latent_reg {
        weighted.push(tape.scale(lr, weights.latent_reg));
    }
    let cat = tape.concat(&weighted);
    let total = tape.sum(cat);
    LossVars {
        total,
        vector_map,
        cross_entropy,
        bond,
        angle,
        dihedral,
        clash,
        latent_reg,
        flips,
    }
}

fn angle_term<F: Real>(
    tape: &mut Tape<F>,
    atoms: &[Var],
    triples: &[(usize, usize, usize, f64)],
) -> Var {
    if triples.is_empty() {
        return tape.input(vec![F::zero()]);
    }
    let mut devs = Vec::with_capacity(triples.len());
    for &(a, b, c, ideal) in triples {
        let u = tape.sub(atoms[a], atoms[b]);
        let v = tape.sub(atoms[c], atoms[b]);
        let cr = tape.cross3(u, v);
        let s = tape.norm3_eps(cr, 1e-18);
        let d = tape.dot(u, v);
        let theta = tape.atan2(s, d);
        let dev = tape.add_const(theta, -ideal);
        devs.push(tape.mul(dev, dev));
    }
    let cat = tape.concat(&devs);
    tape.mean(cat)
}

fn dihedral_term<F: Real>(
    tape: &mut Tape<F>,
    atoms: &[Var],
    quads: &[[usize; 4]],
    flipped_gt: &[[f64; 3]],
) -> Var {
    if quads.is_empty() {
        return tape.input(vec![F::zero()]);
    }
    let mut devs = Vec::with_capacity(quads.len());
    for &[a, b, c, d] in quads {
        let target =
            measure_torsion(flipped_gt[a], flipped_gt[b], flipped_gt[c], flipped_gt[d]);
        let theta = dihedral_var(tape, atoms[a], atoms[b], atoms[c], atoms[d]);
        // Squared angular difference on the circle.
        let diff = tape.add_const(theta, -target);
        let s = tape.sin(diff);
        let co = tape.cos(diff);
        let wrapped = tape.atan2(s, co);
        devs.push(tape.mul(wrapped, wrapped));
    }
    let cat = tape.concat(&devs);
    tape.mean(cat)
}

/// Torsion angle of four points on the tape (same convention as
/// `measure_torsion`).
pub fn dihedral_var<F: Real>(tape: &mut Tape<F>, a: Var, b: Var, c: Var, d: Var) -> Var {
    let b0 = tape.sub(a, b);
    let cb = tape.sub(c, b);
    let (b1, _) = normalize3_safe(tape, cb);
    let b2 = tape.sub(d, c);
    let d0 = tape.dot(b0, b1);
    let proj0 = tape.mul_scalar(b1, d0);
    let v = tape.sub(b0, proj0);
    let d2 = tape.dot(b2, b1);
    let proj2 = tape.mul_scalar(b1, d2);
    let w = tape.sub(b2, proj2);
    let x = tape.dot(v, w);
    let cr = tape.cross3(b1, v);
    let y = tape.dot(cr, w);
    tape.atan2(y, x)
}

/// Read concrete values out of the tape into a report.
pub fn report_from_tape<F: Real>(tape: &Tape<F>, vars: &LossVars) -> LossReport {
    LossReport {
        vector_map: tape.scalar(vars.vector_map).as_f64(),
        cross_entropy: tape.scalar(vars.cross_entropy).as_f64(),
        bond: tape.scalar(vars.bond).as_f64(),
        angle: tape.scalar(vars.angle).as_f64(),
        dihedral: tape.scalar(vars.dihedral).as_f64(),
        clash: tape.scalar(vars.clash).as_f64(),
        latent_reg: vars
            .latent_reg
            .map(|v| tape.scalar(v).as_f64())
            .unwrap_or(0.0),
        total: tape.scalar(vars.total).as_f64(),
        flips: vars.flips.clone(),
    }
}

impl LossReport {
    /// Recompute the weighted total from the reported terms.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.vector_map * w.vector_map
            + self.cross_entropy * w.cross_entropy
            + self.bond * w.bond
            + self.angle * w.angle
            + self.dihedral * w.dihedral
            + self.clash * w.clash
            + self.latent_reg * w.latent_reg
    }
}
