//! All-atom codec: residues become (anchor, irrep features) and back.
//!
//! Orderable heavy atoms fill fixed l=1 slots as CA-relative vectors.
//! Each unorderable pair contributes its center to an l=1 slot and the
//! traceless symmetric square of its half-difference to an l=2 slot, which
//! makes the encoding invariant to swapping the pair. Decoding recovers the
//! half-difference up to sign from the leading eigenpair (the sign is
//! genuinely ambiguous, matching the pair's unorderability). Labels ride in
//! the scalar block as one-hot (encode) and logits (decode).

use crate::error::{Error, Result};
use crate::geom::{add, eigh3, scale, sub, Mat3, Vec3};
use crate::irreps::{IrrepTensor, IrrepsSignature, RotationSpec};
use crate::protein_io::topology::topology;
use crate::protein_io::types::{ProteinFragment, ResidueLabel, ResidueRecord, ALPHABET_SIZE};
use crate::protein_io::{max_orderable_slots, max_pair_slots};
use serde::{Deserialize, Serialize};

/// Operating mode: all heavy atoms or backbone (N, C, O) only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AtomMode {
    AllAtom,
    Backbone,
}

/// Fixed slot layout shared by every residue type.
#[derive(Debug, Clone)]
pub struct CodecLayout {
    pub mode: AtomMode,
    pub orderable_slots: usize,
    pub pair_slots: usize,
}

impl CodecLayout {
    pub fn new(mode: AtomMode) -> CodecLayout {
        match mode {
            AtomMode::AllAtom => CodecLayout {
                mode,
                orderable_slots: max_orderable_slots(),
                pair_slots: max_pair_slots(),
            },
            // Backbone: N, C, O relative to CA; no pairs.
            AtomMode::Backbone => CodecLayout { mode, orderable_slots: 3, pair_slots: 0 },
        }
    }

    pub fn l1_width(&self) -> usize {
        self.orderable_slots + self.pair_slots
    }

    pub fn l2_width(&self) -> usize {
        self.pair_slots
    }

    /// Feature signature carried by the codec on both sides (one-hot or
    /// logits in l=0).
    pub fn signature(&self) -> IrrepsSignature {
        let mut entries = vec![(0, ALPHABET_SIZE), (1, self.l1_width())];
        if self.l2_width() > 0 {
            entries.push((2, self.l2_width()));
        }
        IrrepsSignature::new(entries).unwrap()
    }

    /// Relative-atom indices a residue stores in orderable slots, in slot
    /// order. Backbone mode keeps only N, C, O (indices 0..3).
    pub fn orderable_atoms(&self, label: ResidueLabel) -> Vec<usize> {
        match self.mode {
            AtomMode::AllAtom => topology(label).orderable_indices(),
            AtomMode::Backbone => vec![0, 1, 2],
        }
    }

    pub fn pair_atoms(&self, label: ResidueLabel) -> Vec<(usize, usize)> {
        match self.mode {
            AtomMode::AllAtom => topology(label).pair_indices(),
            AtomMode::Backbone => vec![],
        }
    }

    /// Which relative atoms the codec covers for this label.
    pub fn covered_atoms(&self, label: ResidueLabel) -> Vec<usize> {
        let mut atoms = self.orderable_atoms(label);
        for (a, b) in self.pair_atoms(label) {
            atoms.push(a);
            atoms.push(b);
        }
        atoms.sort_unstable();
        atoms
    }
}

/// Pack the degree-2 component of d (x) d into 5 coefficients (the basis
/// matching `sh`; invariant under d -> -d).
pub fn pair_l2_coeffs(d: Vec3) -> [f64; 5] {
    let s3 = 3.0f64.sqrt();
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    [
        s3 * d[0] * d[1],
        s3 * d[1] * d[2],
        0.5 * (3.0 * d[2] * d[2] - r2),
        s3 * d[0] * d[2],
        0.5 * s3 * (d[0] * d[0] - d[1] * d[1]),
    ]
}

/// Traceless symmetric matrix from the 5 coefficients.
pub fn unpack_l2(q: &[f64]) -> Mat3 {
    let s3 = 3.0f64.sqrt();
    let t_xy = q[0] / s3;
    let t_yz = q[1] / s3;
    let t_xz = q[3] / s3;
    let t_zz = 2.0 * q[2] / 3.0;
    let t_xx = -q[2] / 3.0 + q[4] / s3;
    let t_yy = -q[2] / 3.0 - q[4] / s3;
    [[t_xx, t_xy, t_xz], [t_xy, t_yy, t_yz], [t_xz, t_yz, t_zz]]
}

/// Recover the half-difference from 5 coefficients: leading eigenvalue
/// gives |d|^2 = (3/2) lambda_1, leading eigenvector the direction, sign
/// fixed so the first component above tolerance is positive. Negative
/// leading eigenvalue (invalid content) yields d = 0 and a flag.
pub fn pair_halfdiff_from_l2(q: &[f64]) -> (Vec3, bool) {
    let t = unpack_l2(q);
    let (vals, vecs) = eigh3(&t);
    let lam = vals[0];
    if lam < -1e-9 {
        return ([0.0; 3], false);
    }
    let mut v = vecs[0];
    for &comp in v.iter() {
        if comp.abs() > 1e-8 {
            if comp < 0.0 {
                v = scale(v, -1.0);
            }
            break;
        }
    }
    let len = (1.5 * lam.max(0.0)).sqrt();
    (scale(v, len), true)
}

/// Anchor position plus equivariant features; the per-node state flowing
/// through the model.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub anchor: Vec3,
    pub features: IrrepTensor,
}

impl NodeState {
    /// Rigid motion: anchor rotates and translates, features rotate.
    pub fn transformed(&self, r: &RotationSpec, t: Vec3) -> NodeState {
        NodeState {
            anchor: add(r.rotate(self.anchor), t),
            features: crate::irreps::apply_rotation(&self.features, r),
        }
    }
}

/// Encode a complete, canonicalized residue.
pub fn atom_encode(layout: &CodecLayout, residue: &ResidueRecord) -> Result<NodeState> {
    let needed = layout.covered_atoms(residue.label);
    if needed.iter().any(|&i| residue.relative[i].is_none()) {
        return Err(Error::Precondition(format!(
            "residue {} is incomplete",
            residue.label.three_letter()
        )));
    }
    let sig = layout.signature();
    let mut features = IrrepTensor::zeros(sig);
    features.block_mut(0).unwrap()[residue.label.index()] = 1.0;
    {
        let l1 = features.block_mut(1).unwrap();
        for (slot, &atom) in layout.orderable_atoms(residue.label).iter().enumerate() {
            let p = residue.relative[atom].unwrap();
            l1[slot * 3..slot * 3 + 3].copy_from_slice(&p);
        }
        for (pair_idx, &(a, b)) in layout.pair_atoms(residue.label).iter().enumerate() {
            let pa = residue.relative[a].unwrap();
            let pb = residue.relative[b].unwrap();
            let center = scale(add(pa, pb), 0.5);
            let slot = layout.orderable_slots + pair_idx;
            l1[slot * 3..slot * 3 + 3].copy_from_slice(&center);
        }
    }
    if layout.pair_slots > 0 {
        let l2 = features.block_mut(2).unwrap();
        for (pair_idx, &(a, b)) in layout.pair_atoms(residue.label).iter().enumerate() {
            let pa = residue.relative[a].unwrap();
            let pb = residue.relative[b].unwrap();
            let half = scale(sub(pa, pb), 0.5);
            let q = pair_l2_coeffs(half);
            l2[pair_idx * 5..pair_idx * 5 + 5].copy_from_slice(&q);
        }
    }
    Ok(NodeState { anchor: residue.ca, features })
}

#[derive(Debug, Clone)]
pub struct DecodedResidue {
    pub label: ResidueLabel,
    pub ca: Vec3,
    /// Relative positions in the label's canonical order; None for atoms
    /// the mode does not cover.
    pub relative: Vec<Option<Vec3>>,
    /// Per-pair validity flags (false when the l=2 content was invalid).
    pub pair_ok: Vec<bool>,
    pub logits: Vec<f64>,
}

/// Decode features back to label and atoms.
pub fn atom_decode(layout: &CodecLayout, state: &NodeState) -> Result<DecodedResidue> {
    if state.features.signature() != &layout.signature() {
        return Err(Error::Shape(format!(
            "decoder expects signature {}, got {}",
            layout.signature(),
            state.features.signature()
        )));
    }
    let logits = state.features.block(0).unwrap().to_vec();
    let label_idx = logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let label = ResidueLabel::from_index(label_idx).unwrap();
    Ok(decode_with_label(layout, state, label, logits))
}

/// Decode geometry against a fixed label (used at training time where the
/// ground-truth label selects the slots).
pub fn decode_with_label(
    layout: &CodecLayout,
    state: &NodeState,
    label: ResidueLabel,
    logits: Vec<f64>,
) -> DecodedResidue {
    let topo = topology(label);
    let n_rel = topo.relative_atom_names().len();
    let mut relative = vec![None; n_rel];
    let l1 = state.features.block(1).unwrap();
    for (slot, &atom) in layout.orderable_atoms(label).iter().enumerate() {
        relative[atom] = Some([l1[slot * 3], l1[slot * 3 + 1], l1[slot * 3 + 2]]);
    }
    let mut pair_ok = Vec::new();
    for (pair_idx, &(a, b)) in layout.pair_atoms(label).iter().enumerate() {
        let slot = layout.orderable_slots + pair_idx;
        let center = [l1[slot * 3], l1[slot * 3 + 1], l1[slot * 3 + 2]];
        let l2 = state.features.block(2).unwrap();
        let q = &l2[pair_idx * 5..pair_idx * 5 + 5];
        let (d, ok) = pair_halfdiff_from_l2(q);
        relative[a] = Some(add(center, d));
        relative[b] = Some(sub(center, d));
        pair_ok.push(ok);
    }
    DecodedResidue { label, ca: state.anchor, relative, pair_ok, logits }
}

impl DecodedResidue {
    pub fn to_record(&self, seq_num: i64) -> ResidueRecord {
        ResidueRecord {
            label: self.label,
            ca: self.ca,
            relative: self.relative.clone(),
            complete: self.relative.iter().all(|p| p.is_some()),
            seq_num,
            insertion_code: ' ',
        }
    }
}

pub fn decoded_to_fragment(decoded: &[DecodedResidue], source_id: &str) -> ProteinFragment {
    ProteinFragment {
        residues: decoded
            .iter()
            .enumerate()
            .map(|(i, d)| d.to_record(i as i64 + 1))
            .collect(),
        source_id: source_id.to_string(),
        chain: 'A',
        start: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::norm;
    use crate::irreps::apply_rotation;
    use crate::protein_io::ideal::{build_fragment, random_fragment, BackboneTorsion};
    use crate::protein_io::types::ALL_LABELS;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn layout() -> CodecLayout {
        CodecLayout::new(AtomMode::AllAtom)
    }

    #[test]
    fn signature_budget() {
        let l = layout();
        assert_eq!(l.signature().to_string(), "20x0+15x1+2x2");
        let b = CodecLayout::new(AtomMode::Backbone);
        assert_eq!(b.signature().to_string(), "20x0+3x1");
    }

    #[test]
    fn ala_cb_goes_to_its_slot_and_pairs_stay_zero() {
        let frag = build_fragment(&[ResidueLabel::Ala], &[BackboneTorsion::helix()], &[], "t");
        let mut residue = frag.residues[0].clone();
        // Overwrite CB with a recognizable vector.
        let topo = topology(ResidueLabel::Ala);
        let cb_idx = topo.atom_index("CB").unwrap();
        residue.relative[cb_idx] = Some([1.5, 0.0, 0.0]);
        let state = atom_encode(&layout(), &residue).unwrap();
        let l1 = state.features.block(1).unwrap();
        // CB occupies orderable slot 3 (after N, C, O).
        assert_eq!(&l1[9..12], &[1.5, 0.0, 0.0]);
        // No pairs: pair-center slots and the l2 block are zero.
        let l = layout();
        for s in l.orderable_atoms(ResidueLabel::Ala).len()..l.l1_width() {
            assert_eq!(&l1[s * 3..s * 3 + 3], &[0.0; 3]);
        }
        assert!(state.features.block(2).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pair_encoding_is_swap_invariant_bitwise() {
        let frag = build_fragment(&[ResidueLabel::Asp], &[BackboneTorsion::helix()], &[], "t");
        let residue = frag.residues[0].clone();
        let topo = topology(ResidueLabel::Asp);
        let (a, b) = topo.pair_indices()[0];
        let mut swapped = residue.clone();
        swapped.relative.swap(a, b);
        let s1 = atom_encode(&layout(), &residue).unwrap();
        let s2 = atom_encode(&layout(), &swapped).unwrap();
        assert_eq!(s1.features.block(1).unwrap(), s2.features.block(1).unwrap());
        assert_eq!(s1.features.block(2).unwrap(), s2.features.block(2).unwrap());
    }

    #[test]
    fn roundtrip_recovers_all_labels_and_atoms() {
        let mut rng = StdRng::seed_from_u64(61);
        let l = layout();
        for &label in ALL_LABELS.iter() {
            for _ in 0..50 {
                let frag = random_fragment_with_label(&mut rng, label);
                let residue = &frag.residues[1];
                let state = atom_encode(&l, residue).unwrap();
                let decoded = atom_decode(&l, &state).unwrap();
                assert_eq!(decoded.label, label);
                assert_roundtrip_close(&l, residue, &decoded, 1e-5);
            }
        }
    }

    fn random_fragment_with_label(rng: &mut StdRng, label: ResidueLabel) -> ProteinFragment {
        let labels = [ResidueLabel::Gly, label, ResidueLabel::Gly];
        let mut chis: Vec<f64> = crate::protein_io::ideal::default_chis(label);
        for c in chis.iter_mut() {
            *c += rng.random_range(-60.0..60.0);
        }
        build_fragment(
            &labels,
            &[
                BackboneTorsion::helix(),
                BackboneTorsion {
                    phi: rng.random_range(-150.0..-50.0),
                    psi: rng.random_range(-60.0..150.0),
                    omega: 180.0,
                },
                BackboneTorsion::helix(),
            ],
            &[vec![], chis, vec![]],
            "t",
        )
    }

    pub(crate) fn assert_roundtrip_close(
        l: &CodecLayout,
        residue: &ResidueRecord,
        decoded: &DecodedResidue,
        tol: f64,
    ) {
        // Orderable atoms exact; pair atoms equal up to within-pair swap.
        for &atom in &l.orderable_atoms(residue.label) {
            let orig = residue.relative[atom].unwrap();
            let got = decoded.relative[atom].unwrap();
            assert!(norm(sub(got, orig)) < tol, "atom {atom}: {got:?} vs {orig:?}");
        }
        for &(a, b) in &l.pair_atoms(residue.label) {
            let (oa, ob) = (residue.relative[a].unwrap(), residue.relative[b].unwrap());
            let (ga, gb) = (decoded.relative[a].unwrap(), decoded.relative[b].unwrap());
            let direct = norm(sub(ga, oa)).max(norm(sub(gb, ob)));
            let flipped = norm(sub(ga, ob)).max(norm(sub(gb, oa)));
            assert!(direct.min(flipped) < tol, "pair ({a},{b})");
        }
    }

    #[test]
    fn zero_l2_decodes_pair_to_coincident_center() {
        let frag = build_fragment(&[ResidueLabel::Asp], &[BackboneTorsion::helix()], &[], "t");
        let l = layout();
        let mut state = atom_encode(&l, &frag.residues[0]).unwrap();
        state.features.block_mut(2).unwrap().iter_mut().for_each(|x| *x = 0.0);
        let decoded = atom_decode(&l, &state).unwrap();
        let topo = topology(ResidueLabel::Asp);
        let (a, b) = topo.pair_indices()[0];
        let (ga, gb) = (decoded.relative[a].unwrap(), decoded.relative[b].unwrap());
        assert!(norm(sub(ga, gb)) < 1e-12);
    }

    #[test]
    fn gly_consumes_only_backbone_slots() {
        let frag = build_fragment(&[ResidueLabel::Gly], &[BackboneTorsion::helix()], &[], "t");
        let l = layout();
        let state = atom_encode(&l, &frag.residues[0]).unwrap();
        let decoded = atom_decode(&l, &state).unwrap();
        assert_eq!(decoded.label, ResidueLabel::Gly);
        assert_eq!(decoded.relative.len(), 3);
        assert!(decoded.relative.iter().all(|p| p.is_some()));
    }

    #[test]
    fn encode_is_rotation_equivariant() {
        let mut rng = StdRng::seed_from_u64(62);
        let l = layout();
        for _ in 0..40 {
            let frag = random_fragment(&mut rng, 3, "t");
            let residue = &frag.residues[1];
            let r = RotationSpec::random(&mut rng);
            let rotated = crate::protein_io::ideal::transform_fragment(&frag, &r.matrix(), [0.0; 3]);
            let s_rot = atom_encode(&l, &rotated.residues[1]).unwrap();
            let s_then_rot = apply_rotation(&atom_encode(&l, residue).unwrap().features, &r);
            let diff = s_rot.features.sub(&s_then_rot).norm() / s_then_rot.norm().max(1e-12);
            assert!(diff < 1e-10, "residual {diff}");
        }
    }

    #[test]
    fn incomplete_residue_is_rejected() {
        let frag = build_fragment(&[ResidueLabel::Leu], &[BackboneTorsion::helix()], &[], "t");
        let mut residue = frag.residues[0].clone();
        residue.relative[4] = None;
        residue.complete = false;
        assert!(atom_encode(&layout(), &residue).is_err());
    }
}
