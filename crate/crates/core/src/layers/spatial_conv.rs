//! Spatial convolution: message passing within k-nearest spatial
//! neighbors. Messages couple neighbor features with spherical harmonics of
//! the normalized offset, scaled per path-channel by an MLP of the radial
//! embedding and a smooth cutoff envelope; aggregation is an
//! envelope-normalized mean, so equidistant neighbors commute. Anchors
//! receive a small learned update from the final l=1 block.

use crate::graddiff::mlp::MlpSpec;
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use crate::irreps::{tensor_product_signature, IrrepsSignature};
use crate::layers::blocks::{
    concat_irreps, normalize3_safe, sh_product_weight_count, weighted_sh_product, CgCtx, IrrepVar,
    LinearMixParams, NodeVar, NormParams,
};
use rand::Rng;
use std::sync::Arc;

pub const ANCHOR_UPDATE_SCALE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct SpatialConvParams {
    pub name: String,
    pub in_sig: IrrepsSignature,
    pub out_sig: IrrepsSignature,
    pub l_max: usize,
    pub k_neighbors: usize,
    pub radial_bins: usize,
    pub cutoff: f64,
    centers: Arc<Vec<f64>>,
    inv_width: f64,
    radial_mlp: MlpSpec,
    lin_msg: LinearMixParams,
    norm: NormParams,
    lin_out: LinearMixParams,
}

impl SpatialConvParams {
    #[allow(clippy::too_many_arguments)]
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        name: &str,
        in_sig: IrrepsSignature,
        out_sig: IrrepsSignature,
        l_max: usize,
        k_neighbors: usize,
        radial_bins: usize,
        cutoff: f64,
        norm_eps: f64,
    ) -> SpatialConvParams {
        let degrees: Vec<usize> = (0..=l_max).collect();
        let weight_count = sh_product_weight_count(&in_sig, l_max + 1, &degrees);
        let radial_mlp = MlpSpec::register(
            store,
            rng,
            &format!("{name}.rad"),
            vec![radial_bins, 2 * radial_bins, weight_count],
        );
        let msg_sig_full = {
            let sh_sig = IrrepsSignature::new((0..=l_max).map(|l| (l, 1)).collect()).unwrap();
            tensor_product_signature(&in_sig, &sh_sig, &degrees).unwrap()
        };
        let lin_msg = LinearMixParams::register(
            store,
            rng,
            &format!("{name}.lin1"),
            msg_sig_full,
            in_sig.clone(),
            true,
        );
        let norm = NormParams::register(store, &format!("{name}.norm"), in_sig.clone(), norm_eps);
        let cat_sig = in_sig.concat(&in_sig);
        let lin_out = LinearMixParams::register(
            store,
            rng,
            &format!("{name}.lin2"),
            cat_sig,
            out_sig.clone(),
            true,
        );
        let d1 = out_sig.mult(1);
        store.insert_normal(&format!("{name}.p"), vec![1, d1], d1, 1.0, rng);
        // Evenly spaced Gaussian centers on [0, cutoff], width = spacing.
        let spacing = cutoff / (radial_bins.max(2) - 1) as f64;
        let centers = Arc::new((0..radial_bins).map(|b| b as f64 * spacing).collect());
        SpatialConvParams {
            name: name.to_string(),
            in_sig,
            out_sig,
            l_max,
            k_neighbors,
            radial_bins,
            cutoff,
            centers,
            inv_width: 1.0 / spacing,
            radial_mlp,
            lin_msg,
            norm,
            lin_out,
        }
    }

    /// Deterministic k-nearest selection by (distance, index); self is
    /// excluded unless the sequence has a single node.
    fn neighbors<F: Real>(&self, tape: &Tape<F>, seq: &[NodeVar], i: usize) -> Vec<usize> {
        if seq.len() == 1 {
            return vec![i];
        }
        let pi = tape.value(seq[i].anchor);
        let pi = [pi[0].as_f64(), pi[1].as_f64(), pi[2].as_f64()];
        let mut cand: Vec<(f64, usize)> = (0..seq.len())
            .filter(|&j| j != i)
            .map(|j| {
                let pj = tape.value(seq[j].anchor);
                let d2 = (0..3)
                    .map(|c| (pj[c].as_f64() - pi[c]).powi(2))
                    .sum::<f64>();
                (d2, j)
            })
            .collect();
        cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cand.truncate(self.k_neighbors.min(seq.len() - 1));
        cand.into_iter().map(|(_, j)| j).collect()
    }

    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ctx: &CgCtx<F>,
        seq: &[NodeVar],
    ) -> Vec<NodeVar> {
        let degrees: Vec<usize> = (0..=self.l_max).collect();
        let mut out = Vec::with_capacity(seq.len());
        for i in 0..seq.len() {
            let nbrs = self.neighbors(tape, seq, i);
            let mut msg_parts: Vec<IrrepVar> = Vec::with_capacity(nbrs.len());
            let mut envelopes: Vec<Var> = Vec::with_capacity(nbrs.len());
            for &j in &nbrs {
                let offset = tape.sub(seq[j].anchor, seq[i].anchor);
                let (dir, r) = normalize3_safe(tape, offset);
                let sh: Vec<Var> = (0..=self.l_max).map(|l| tape.sh_dir(dir, l)).collect();
                let rbf = tape.gaussian_rbf(r, Arc::clone(&self.centers), self.inv_width);
                let u = tape.cutoff_env(r, self.cutoff);
                let weights = self.radial_mlp.forward(tape, store, rbf);
                let msg = weighted_sh_product(tape, ctx, &seq[j].feat, &sh, weights, &degrees);
                let scaled = IrrepVar {
                    sig: msg.sig.clone(),
                    blocks: msg.blocks.iter().map(|&b| tape.mul_scalar(b, u)).collect(),
                };
                msg_parts.push(scaled);
                envelopes.push(u);
            }
            // Envelope-normalized mean.
            let env_cat = tape.concat(&envelopes);
            let env_sum = tape.sum(env_cat);
            let inv = tape.recip_eps(env_sum, 1e-8);
            let sig = msg_parts[0].sig.clone();
            let mut blocks = Vec::new();
            for bi in 0..sig.entries().len() {
                let vars: Vec<Var> = msg_parts.iter().map(|p| p.blocks[bi]).collect();
                let s = tape.sum_vars(&vars);
                blocks.push(tape.mul_scalar(s, inv));
            }
            let aggregated = IrrepVar { sig, blocks };
            let mixed = self.lin_msg.forward(tape, store, &aggregated);
            let normed = self.norm.forward(tape, store, &mixed);
            let cat = concat_irreps(tape, &[&normed, &seq[i].feat]);
            let feat = self.lin_out.forward(tape, store, &cat);
            // Anchor update from the final l=1 block.
            let pw = tape.param(store, &format!("{}.p", self.name));
            let d1 = self.out_sig.mult(1);
            let l1 = feat.block(1).expect("spatial conv needs l=1 features");
            let delta = tape.matmul(pw, l1, 1, d1, 3);
            let scaled = tape.scale(delta, ANCHOR_UPDATE_SCALE);
            let anchor = tape.add(seq[i].anchor, scaled);
            out.push(NodeVar { anchor, feat });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::IrrepTensor;
    use crate::layers::blocks::input_irrep;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn params(rng: &mut StdRng, store: &mut ParameterStore<f64>, sig: &IrrepsSignature) -> SpatialConvParams {
        SpatialConvParams::register(
            store,
            rng,
            "sp",
            sig.clone(),
            sig.clone(),
            2,
            4,
            8,
            12.0,
            1e-6,
        )
    }

    #[test]
    fn single_node_sequence_is_finite() {
        let mut rng = StdRng::seed_from_u64(111);
        let sig = IrrepsSignature::parse("3x0+3x1+3x2").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let p = params(&mut rng, &mut store, &sig);
        let ctx = CgCtx::new(2);
        let mut tape: Tape<f64> = Tape::new();
        let feat = IrrepTensor::standard_normal(sig.clone(), &mut rng);
        let seq = vec![NodeVar {
            anchor: tape.input(vec![1.0, 2.0, 3.0]),
            feat: input_irrep(&mut tape, &feat),
        }];
        let out = p.forward(&mut tape, &store, &ctx, &seq);
        assert_eq!(out.len(), 1);
        for b in &out[0].feat.blocks {
            assert!(tape.value(*b).iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn permuting_equidistant_neighbors_is_invariant() {
        // Node 0 at origin with neighbors on a symmetric cross; reversing
        // the sequence order of the neighbors must not change node 0's
        // output (mean aggregation, deterministic selection).
        let mut rng = StdRng::seed_from_u64(112);
        let sig = IrrepsSignature::parse("2x0+2x1").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let p = SpatialConvParams::register(
            &mut store, &mut rng, "sp", sig.clone(), sig.clone(), 2, 4, 8, 12.0, 1e-6,
        );
        let ctx = CgCtx::new(2);
        let feats: Vec<IrrepTensor> = (0..5)
            .map(|_| IrrepTensor::standard_normal(sig.clone(), &mut rng))
            .collect();
        let anchors = [
            [0.0, 0.0, 0.0],
            [4.0, 0.0, 0.0],
            [-4.0, 0.0, 0.0],
            [0.0, 4.0, 0.0],
            [0.0, -4.0, 0.0],
        ];
        let run = |order: &[usize]| {
            let mut tape: Tape<f64> = Tape::new();
            let seq: Vec<NodeVar> = order
                .iter()
                .map(|&idx| NodeVar {
                    anchor: tape.input(anchors[idx].to_vec()),
                    feat: input_irrep(&mut tape, &feats[idx]),
                })
                .collect();
            let out = p.forward(&mut tape, &store, &ctx, &seq);
            // Node "0" is at position order.index_of(0).
            let pos = order.iter().position(|&x| x == 0).unwrap();
            out[pos]
                .feat
                .blocks
                .iter()
                .flat_map(|&b| tape.value(b).to_vec())
                .collect::<Vec<f64>>()
        };
        let a = run(&[0, 1, 2, 3, 4]);
        let b = run(&[0, 4, 3, 2, 1]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
