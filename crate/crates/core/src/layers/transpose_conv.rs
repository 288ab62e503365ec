//! Transpose sequence convolution: each coarse node spawns K fine
//! candidates through offset-indexed linear maps of its normalized
//! features; candidate anchors are the coarse anchor plus a learned linear
//! image of the l=1 block. Candidates landing on the same fine position are
//! averaged, and the result is cropped or edge-padded to the recorded
//! original length.

use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::Tape;
use crate::irreps::IrrepsSignature;
use crate::layers::blocks::{average_irreps, IrrepVar, LinearMixParams, NodeVar, NormParams};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct TransposeConvParams {
    pub name: String,
    pub k: usize,
    pub s: usize,
    pub in_sig: IrrepsSignature,
    pub out_sig: IrrepsSignature,
    norm: NormParams,
    delta_lin: Vec<LinearMixParams>,
}

impl TransposeConvParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        name: &str,
        k: usize,
        s: usize,
        in_sig: IrrepsSignature,
        out_sig: IrrepsSignature,
        norm_eps: f64,
    ) -> TransposeConvParams {
        let norm = NormParams::register(store, &format!("{name}.norm"), in_sig.clone(), norm_eps);
        let mut delta_lin = Vec::with_capacity(k);
        for delta in 0..k {
            delta_lin.push(LinearMixParams::register(
                store,
                rng,
                &format!("{name}.d{delta}"),
                in_sig.clone(),
                out_sig.clone(),
                true,
            ));
            let d1 = in_sig.mult(1);
            store.insert_normal(&format!("{name}.d{delta}.p"), vec![1, d1], d1, 1.0, rng);
        }
        TransposeConvParams { name: name.to_string(), k, s, in_sig, out_sig, norm, delta_lin }
    }

    /// Expand a coarse sequence back to `orig_len` fine nodes.
    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        seq: &[NodeVar],
        orig_len: usize,
    ) -> Vec<NodeVar> {
        let m = seq.len();
        let covered = (m - 1) * self.s + self.k;
        let mut feat_cands: Vec<Vec<IrrepVar>> = vec![Vec::new(); covered];
        let mut anchor_cands: Vec<Vec<crate::graddiff::tape::Var>> = vec![Vec::new(); covered];
        for (j, node) in seq.iter().enumerate() {
            let normed = self.norm.forward(tape, store, &node.feat);
            for delta in 0..self.k {
                let fine = j * self.s + delta;
                let feat = self.delta_lin[delta].forward(tape, store, &normed);
                let pw = tape.param(store, &format!("{}.d{delta}.p", self.name));
                let l1 = normed.block(1).expect("transpose conv needs l=1 features");
                let d1 = self.in_sig.mult(1);
                let offset = tape.matmul(pw, l1, 1, d1, 3);
                let anchor = tape.add(node.anchor, offset);
                feat_cands[fine].push(feat);
                anchor_cands[fine].push(anchor);
            }
        }
        let mut out = Vec::with_capacity(covered);
        for i in 0..covered {
            let feat = average_irreps(tape, &feat_cands[i]);
            let anchor = if anchor_cands[i].len() == 1 {
                anchor_cands[i][0]
            } else {
                let s = tape.sum_vars(&anchor_cands[i]);
                tape.scale(s, 1.0 / anchor_cands[i].len() as f64)
            };
            out.push(NodeVar { anchor, feat });
        }
        // Crop or pad by replicating the last node.
        if covered >= orig_len {
            out.truncate(orig_len);
        } else {
            while out.len() < orig_len {
                out.push(out.last().unwrap().clone());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::IrrepTensor;
    use crate::layers::blocks::input_irrep;
    use crate::layers::sequence_conv::coarse_len;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn coarse_seq(tape: &mut Tape<f64>, sig: &IrrepsSignature, rng: &mut StdRng, m: usize) -> Vec<NodeVar> {
        (0..m)
            .map(|i| {
                let feat = IrrepTensor::standard_normal(sig.clone(), rng);
                NodeVar {
                    anchor: tape.input(vec![9.0 * i as f64, 0.5 * i as f64, 0.0]),
                    feat: input_irrep(tape, &feat),
                }
            })
            .collect()
    }

    #[test]
    fn restores_tracked_length_from_strided_coarsening() {
        let mut rng = StdRng::seed_from_u64(101);
        let sig = IrrepsSignature::parse("2x0+2x1").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let params =
            TransposeConvParams::register(&mut store, &mut rng, "t", 5, 3, sig.clone(), sig.clone(), 1e-6);
        // 160 -> 52 under (K=5, S=3); expanding 52 must restore 160 exactly.
        let m = coarse_len(160, 5, 3).unwrap();
        let mut tape: Tape<f64> = Tape::new();
        let seq = coarse_seq(&mut tape, &sig, &mut rng, m);
        let out = params.forward(&mut tape, &store, &seq, 160);
        assert_eq!(out.len(), 160);
    }

    #[test]
    fn single_coarse_node_spawns_k_distinct_candidates() {
        let mut rng = StdRng::seed_from_u64(102);
        let sig = IrrepsSignature::parse("2x0+2x1").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let params =
            TransposeConvParams::register(&mut store, &mut rng, "t", 5, 3, sig.clone(), sig.clone(), 1e-6);
        let mut tape: Tape<f64> = Tape::new();
        let seq = coarse_seq(&mut tape, &sig, &mut rng, 1);
        let out = params.forward(&mut tape, &store, &seq, 5);
        assert_eq!(out.len(), 5);
        // Different offset maps: the five scalar blocks differ pairwise.
        for i in 0..5 {
            for j in (i + 1)..5 {
                let a = tape.value(out[i].feat.scalars());
                let b = tape.value(out[j].feat.scalars());
                let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                assert!(diff > 1e-9, "candidates {i} and {j} identical");
            }
        }
    }

    #[test]
    fn pads_by_replication_when_needed() {
        let mut rng = StdRng::seed_from_u64(103);
        let sig = IrrepsSignature::parse("2x0+2x1").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let params =
            TransposeConvParams::register(&mut store, &mut rng, "t", 3, 2, sig.clone(), sig.clone(), 1e-6);
        // m=2 coarse nodes cover (2-1)*2+3 = 5 fine positions; ask for 7.
        let mut tape: Tape<f64> = Tape::new();
        let seq = coarse_seq(&mut tape, &sig, &mut rng, 2);
        let out = params.forward(&mut tape, &store, &seq, 7);
        assert_eq!(out.len(), 7);
        let a = tape.value(out[5].anchor).to_vec();
        let b = tape.value(out[6].anchor).to_vec();
        assert_eq!(a, b);
    }
}
