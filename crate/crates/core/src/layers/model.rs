//! Hourglass composition: encoder of [spatial -> self-interaction ->
//! sequence coarsening] levels, mirrored decoder of [transpose conv ->
//! self-interaction -> spatial], with the atom codec at both ends and a
//! length tracker making the shape exact for any input length.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use crate::irreps::{IrrepTensor, IrrepsSignature};
use crate::layers::blocks::{input_irrep, read_irrep, CgCtx, LinearMixParams, NodeVar};
use crate::layers::codec::{
    atom_encode, decode_with_label, AtomMode, CodecLayout, DecodedResidue, NodeState,
};
use crate::layers::self_interaction::SelfInteractionParams;
use crate::layers::sequence_conv::{coarse_len, SequenceConvParams};
use crate::layers::spatial_conv::SpatialConvParams;
use crate::layers::transpose_conv::TransposeConvParams;
use crate::protein_io::types::{ProteinFragment, ResidueLabel};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub l_max: usize,
    pub kernel: usize,
    pub stride: usize,
    pub levels: usize,
    /// Trunk multiplicity per level; length levels + 1.
    pub channels: Vec<usize>,
    pub k_neighbors: usize,
    pub radial_bins: usize,
    pub radial_cutoff: f64,
    /// Tensor-square segment size inside self-interactions; 0 = full.
    pub chunk: usize,
    pub mode: AtomMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            l_max: 2,
            kernel: 5,
            stride: 3,
            levels: 2,
            channels: vec![16, 24, 36],
            k_neighbors: 16,
            radial_bins: 16,
            radial_cutoff: 24.0,
            chunk: 4,
            mode: AtomMode::AllAtom,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.levels + 1 {
            return Err(Error::Config(format!(
                "channels list must have levels+1 = {} entries, got {}",
                self.levels + 1,
                self.channels.len()
            )));
        }
        if self.l_max > crate::irreps::MAX_DEGREE {
            return Err(Error::Config(format!(
                "l_max {} beyond supported degree {}",
                self.l_max,
                crate::irreps::MAX_DEGREE
            )));
        }
        if self.l_max < 1 {
            return Err(Error::Config("l_max must be at least 1".into()));
        }
        if self.kernel < 2 || self.stride < 1 {
            return Err(Error::Config("kernel must be >= 2 and stride >= 1".into()));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config("channels must be positive".into()));
        }
        Ok(())
    }

    pub fn trunk_sig(&self, level: usize) -> IrrepsSignature {
        IrrepsSignature::uniform(self.channels[level], self.l_max)
    }

    pub fn latent_sig(&self) -> IrrepsSignature {
        self.trunk_sig(self.levels)
    }

    /// Sequence lengths per level (input first). Errors name the level
    /// that cannot be coarsened.
    pub fn level_lengths(&self, n: usize) -> Result<Vec<usize>> {
        let mut lengths = vec![n];
        let mut cur = n;
        for level in 0..self.levels {
            match coarse_len(cur, self.kernel, self.stride) {
                Some(next) => {
                    lengths.push(next);
                    cur = next;
                }
                None => {
                    return Err(Error::Config(format!(
                        "sequence of length {cur} at level {level} is shorter than kernel {}",
                        self.kernel
                    )))
                }
            }
        }
        Ok(lengths)
    }

    pub fn signatures(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert(
            "codec".to_string(),
            CodecLayout::new(self.mode).signature().to_string(),
        );
        for level in 0..=self.levels {
            map.insert(format!("trunk{level}"), self.trunk_sig(level).to_string());
        }
        map.insert("latent".to_string(), self.latent_sig().to_string());
        map
    }
}

struct EncLevel {
    spatial: SpatialConvParams,
    selfint: SelfInteractionParams,
    seq: SequenceConvParams,
}

struct DecLevel {
    tconv: TransposeConvParams,
    selfint: SelfInteractionParams,
    spatial: SpatialConvParams,
}

pub struct HourglassModel {
    pub config: ModelConfig,
    pub layout: CodecLayout,
    enc_in: LinearMixParams,
    enc_levels: Vec<EncLevel>,
    dec_levels: Vec<DecLevel>,
    dec_out: LinearMixParams,
}

impl HourglassModel {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        config: ModelConfig,
    ) -> Result<HourglassModel> {
        config.validate()?;
        let layout = CodecLayout::new(config.mode);
        let codec_sig = layout.signature();
        let enc_in = LinearMixParams::register(
            store,
            rng,
            "enc.in",
            codec_sig.clone(),
            config.trunk_sig(0),
            true,
        );
        let mut enc_levels = Vec::new();
        for i in 0..config.levels {
            let sig = config.trunk_sig(i);
            let spatial = SpatialConvParams::register(
                store,
                rng,
                &format!("enc{i}.spat"),
                sig.clone(),
                sig.clone(),
                config.l_max,
                config.k_neighbors,
                config.radial_bins,
                config.radial_cutoff,
                NORM_EPS,
            );
            let selfint = SelfInteractionParams::register(
                store,
                rng,
                &format!("enc{i}.self"),
                sig.clone(),
                config.chunk,
                0,
                NORM_EPS,
            );
            let seq = SequenceConvParams::register(
                store,
                rng,
                &format!("enc{i}.seq"),
                config.kernel,
                sig,
                config.trunk_sig(i + 1),
            );
            enc_levels.push(EncLevel { spatial, selfint, seq });
        }
        let mut dec_levels = Vec::new();
        for i in 0..config.levels {
            let fine = config.trunk_sig(i);
            let coarse = config.trunk_sig(i + 1);
            let tconv = TransposeConvParams::register(
                store,
                rng,
                &format!("dec{i}.tconv"),
                config.kernel,
                config.stride,
                coarse,
                fine.clone(),
                NORM_EPS,
            );
            let selfint = SelfInteractionParams::register(
                store,
                rng,
                &format!("dec{i}.self"),
                fine.clone(),
                config.chunk,
                0,
                NORM_EPS,
            );
            let spatial = SpatialConvParams::register(
                store,
                rng,
                &format!("dec{i}.spat"),
                fine.clone(),
                fine,
                config.l_max,
                config.k_neighbors,
                config.radial_bins,
                config.radial_cutoff,
                NORM_EPS,
            );
            dec_levels.push(DecLevel { tconv, selfint, spatial });
        }
        let dec_out = LinearMixParams::register(
            store,
            rng,
            "dec.out",
            config.trunk_sig(0),
            codec_sig,
            true,
        );
        Ok(HourglassModel { config, layout, enc_in, enc_levels, dec_levels, dec_out })
    }

    /// Encode codec-level node states (anchor + codec features) to the
    /// bottleneck. Returns the latent nodes and the length tracker.
    pub fn encode<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ctx: &CgCtx<F>,
        states: &[NodeState],
    ) -> Result<(Vec<NodeVar>, Vec<usize>)> {
        self.config.level_lengths(states.len())?;
        let mut seq: Vec<NodeVar> = states
            .iter()
            .map(|s| {
                let anchor = tape.input_f64(&s.anchor);
                let feat = input_irrep(tape, &s.features);
                let feat = self.enc_in.forward(tape, store, &feat);
                NodeVar { anchor, feat }
            })
            .collect();
        let mut tracker = Vec::with_capacity(self.config.levels);
        for level in &self.enc_levels {
            seq = level.spatial.forward(tape, store, ctx, &seq);
            seq = seq
                .iter()
                .map(|n| level.selfint.forward(tape, store, ctx, n, None))
                .collect();
            tracker.push(seq.len());
            let m = coarse_len(seq.len(), self.config.kernel, self.config.stride).unwrap();
            let mut coarse = Vec::with_capacity(m);
            for w in 0..m {
                let start = w * self.config.stride;
                coarse.push(level.seq.forward(
                    tape,
                    store,
                    &seq[start..start + self.config.kernel],
                ));
            }
            seq = coarse;
        }
        Ok((seq, tracker))
    }

    /// Decode bottleneck nodes back to level-0 trunk nodes.
    pub fn decode<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ctx: &CgCtx<F>,
        latent: &[NodeVar],
        tracker: &[usize],
    ) -> Result<Vec<NodeVar>> {
        if tracker.len() != self.config.levels {
            return Err(Error::Config(format!(
                "length tracker has {} entries, model has {} levels",
                tracker.len(),
                self.config.levels
            )));
        }
        let mut seq = latent.to_vec();
        for (i, level) in self.dec_levels.iter().enumerate().rev() {
            let orig = tracker[i];
            seq = level.tconv.forward(tape, store, &seq, orig);
            seq = seq
                .iter()
                .map(|n| level.selfint.forward(tape, store, ctx, n, None))
                .collect();
            seq = level.spatial.forward(tape, store, ctx, &seq);
        }
        Ok(seq)
    }

    /// Project level-0 trunk nodes to codec features.
    pub fn project_out<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        nodes: &[NodeVar],
    ) -> Vec<NodeVar> {
        nodes
            .iter()
            .map(|n| NodeVar {
                anchor: n.anchor,
                feat: self.dec_out.forward(tape, store, &n.feat),
            })
            .collect()
    }
}

/// Tape handles for one decoded residue's trainable outputs.
pub struct DecodedNodeVars {
    pub label: ResidueLabel,
    pub logits: Var,
    pub anchor: Var,
    /// (relative atom index, global position), covered atoms only.
    pub atoms: Vec<(usize, Var)>,
}

/// Expand codec-level output nodes into per-atom position handles. When
/// `labels` is given (training), slots are read against those labels;
/// otherwise the predicted label (argmax of the logits) decides.
pub fn decode_atoms<F: Real>(
    tape: &mut Tape<F>,
    layout: &CodecLayout,
    nodes: &[NodeVar],
    labels: Option<&[ResidueLabel]>,
) -> Vec<DecodedNodeVars> {
    let mut out = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let logits = node.feat.scalars();
        let label = match labels {
            Some(ls) => ls[i],
            None => {
                let vals = tape.value(logits);
                let idx = vals
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap();
                ResidueLabel::from_index(idx).unwrap()
            }
        };
        let l1 = node.feat.block(1).unwrap();
        let mut atoms = Vec::new();
        for (slot, &atom) in layout.orderable_atoms(label).iter().enumerate() {
            let rel = tape.slice(l1, slot * 3, 3);
            atoms.push((atom, tape.add(node.anchor, rel)));
        }
        for (pair_idx, &(a, b)) in layout.pair_atoms(label).iter().enumerate() {
            let slot = layout.orderable_slots + pair_idx;
            let center_rel = tape.slice(l1, slot * 3, 3);
            let center = tape.add(node.anchor, center_rel);
            let l2 = node.feat.block(2).unwrap();
            let q = tape.slice(l2, pair_idx * 5, 5);
            let d = tape.pair_halfdiff(q);
            atoms.push((a, tape.add(center, d)));
            atoms.push((b, tape.sub(center, d)));
        }
        atoms.sort_by_key(|&(idx, _)| idx);
        out.push(DecodedNodeVars { label, logits, anchor: node.anchor, atoms });
    }
    out
}

/// Concrete (inference) results of one autoencoder pass.
pub struct AeOutput {
    pub decoded: Vec<DecodedResidue>,
    /// Codec-level output states (anchor + codec features), usable for
    /// re-decoding the geometry against other labels.
    pub codec_states: Vec<NodeState>,
    pub latent: Vec<(Vec3, IrrepTensor)>,
    pub tracker: Vec<usize>,
}

/// Run the autoencoder end to end without gradients; decoding uses the
/// predicted labels and the exact eigen pair decoder.
pub fn run_autoencoder<F: Real>(
    model: &HourglassModel,
    store: &ParameterStore<F>,
    fragment: &ProteinFragment,
) -> Result<AeOutput> {
    let states: Result<Vec<NodeState>> = fragment
        .residues
        .iter()
        .map(|r| atom_encode(&model.layout, r))
        .collect();
    let states = states?;
    let mut tape: Tape<F> = Tape::new();
    let ctx: CgCtx<F> = CgCtx::new(model.config.l_max);
    let (latent, tracker) = model.encode(&mut tape, store, &ctx, &states)?;
    let latent_out: Vec<(Vec3, IrrepTensor)> = latent
        .iter()
        .map(|n| {
            let a = tape.value(n.anchor);
            (
                [a[0].as_f64(), a[1].as_f64(), a[2].as_f64()],
                read_irrep(&tape, &n.feat),
            )
        })
        .collect();
    let trunk = model.decode(&mut tape, store, &ctx, &latent, &tracker)?;
    let codec_nodes = model.project_out(&mut tape, store, &trunk);
    let codec_states: Vec<NodeState> = codec_nodes
        .iter()
        .map(|n| {
            let a = tape.value(n.anchor);
            NodeState {
                anchor: [a[0].as_f64(), a[1].as_f64(), a[2].as_f64()],
                features: read_irrep(&tape, &n.feat),
            }
        })
        .collect();
    let decoded = codec_states
        .iter()
        .map(|s| crate::layers::codec::atom_decode(&model.layout, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AeOutput { decoded, codec_states, latent: latent_out, tracker })
}

/// Decode concrete latent tensors (e.g. diffusion samples or interpolants)
/// through the decoder; labels are predicted.
pub fn decode_latent<F: Real>(
    model: &HourglassModel,
    store: &ParameterStore<F>,
    latent: &[(Vec3, IrrepTensor)],
    tracker: &[usize],
) -> Result<Vec<DecodedResidue>> {
    let mut tape: Tape<F> = Tape::new();
    let ctx: CgCtx<F> = CgCtx::new(model.config.l_max);
    let latent_vars: Vec<NodeVar> = latent
        .iter()
        .map(|(anchor, feat)| NodeVar {
            anchor: tape.input_f64(anchor),
            feat: input_irrep(&mut tape, feat),
        })
        .collect();
    let trunk = model.decode(&mut tape, store, &ctx, &latent_vars, tracker)?;
    let codec_nodes = model.project_out(&mut tape, store, &trunk);
    codec_nodes
        .iter()
        .map(|n| {
            let a = tape.value(n.anchor);
            let anchor = [a[0].as_f64(), a[1].as_f64(), a[2].as_f64()];
            let features = read_irrep(&tape, &n.feat);
            let state = NodeState { anchor, features };
            crate::layers::codec::atom_decode(&model.layout, &state)
        })
        .collect()
}

/// Codec-level node states for a fragment (encoder input preparation).
pub fn fragment_states(layout: &CodecLayout, fragment: &ProteinFragment) -> Result<Vec<NodeState>> {
    fragment
        .residues
        .iter()
        .map(|r| atom_encode(layout, r))
        .collect()
}

/// Decoded residues as a fragment, keeping ground-truth labels for the
/// covered-atom layout (training-time geometry view).
pub fn decode_against_labels(
    layout: &CodecLayout,
    states: &[NodeState],
    labels: &[ResidueLabel],
) -> Vec<DecodedResidue> {
    states
        .iter()
        .zip(labels)
        .map(|(s, &l)| {
            let logits = s.features.block(0).unwrap().to_vec();
            decode_with_label(layout, s, l, logits)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protein_io::ideal::random_fragment;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            levels: 2,
            channels: vec![6, 8, 10],
            k_neighbors: 6,
            radial_bins: 6,
            chunk: 3,
            ..Default::default()
        }
    }

    #[test]
    fn shape_round_trip_restores_length() {
        let mut rng = StdRng::seed_from_u64(121);
        let mut store: ParameterStore<f32> = ParameterStore::new();
        let model = HourglassModel::register(&mut store, &mut rng, tiny_config()).unwrap();
        for n in [17usize, 23, 30] {
            let frag = random_fragment(&mut rng, n, "t");
            let out = run_autoencoder(&model, &store, &frag).unwrap();
            assert_eq!(out.decoded.len(), n);
            let lengths = model.config.level_lengths(n).unwrap();
            assert_eq!(out.latent.len(), *lengths.last().unwrap());
            // Finite coordinates everywhere, parseable PDB.
            let frag_out = crate::layers::codec::decoded_to_fragment(&out.decoded, "d");
            let text = crate::protein_io::write::write_pdb(&frag_out).unwrap();
            assert!(text.lines().filter(|l| l.starts_with("ATOM")).count() > 0);
        }
    }

    #[test]
    fn length_arithmetic_matches_formula() {
        let cfg = ModelConfig { levels: 2, channels: vec![16, 24, 36], ..Default::default() };
        assert_eq!(cfg.level_lengths(160).unwrap(), vec![160, 52, 16]);
        let cfg3 = ModelConfig {
            levels: 3,
            channels: vec![16, 24, 36, 54],
            ..Default::default()
        };
        assert_eq!(cfg3.level_lengths(160).unwrap(), vec![160, 52, 16, 4]);
        // Too short to coarsen names the failing level.
        let err = cfg3.level_lengths(17).unwrap_err().to_string();
        assert!(err.contains("level 2"), "{err}");
    }

    #[test]
    fn alternate_length_rule_matches_miniprotein_levels() {
        // (K=3, S=2) halves: 63 -> 31 -> 15 -> 7 -> 3 -> 1.
        let cfg = ModelConfig {
            kernel: 3,
            stride: 2,
            levels: 5,
            channels: vec![12, 18, 27, 40, 60, 90],
            ..Default::default()
        };
        assert_eq!(
            cfg.level_lengths(63).unwrap(),
            vec![63, 31, 15, 7, 3, 1]
        );
    }

    #[test]
    fn tracker_mismatch_is_an_error() {
        let mut rng = StdRng::seed_from_u64(122);
        let mut store: ParameterStore<f32> = ParameterStore::new();
        let model = HourglassModel::register(&mut store, &mut rng, tiny_config()).unwrap();
        let mut tape: Tape<f32> = Tape::new();
        let ctx: CgCtx<f32> = CgCtx::new(2);
        let frag = random_fragment(&mut rng, 17, "t");
        let states = fragment_states(&model.layout, &frag).unwrap();
        let (latent, _tracker) = model.encode(&mut tape, &store, &ctx, &states).unwrap();
        let err = model.decode(&mut tape, &store, &ctx, &latent, &[17]).unwrap_err();
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn signature_map_reports_layouts() {
        let cfg = tiny_config();
        let sigs = cfg.signatures();
        assert_eq!(sigs["codec"], "20x0+15x1+2x2");
        assert_eq!(sigs["trunk0"], "6x0+6x1+6x2");
        assert_eq!(sigs["latent"], "10x0+10x1+10x2");
    }
}
