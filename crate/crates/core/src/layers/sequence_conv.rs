//! Strided sequence convolution: a K-node window collapses to one node.
//! Window weights come from a softmax over an MLP of the concatenated
//! scalars (so they sum to one and the new anchor is a convex combination,
//! keeping translation equivariance); features are a linear mix of the
//! concatenated window features plus all normalized pairwise anchor
//! directions embedded as extra l=1 channels.

use crate::graddiff::mlp::MlpSpec;
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use crate::irreps::IrrepsSignature;
use crate::layers::blocks::{concat_irreps, normalize3_safe, IrrepVar, LinearMixParams, NodeVar};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SequenceConvParams {
    pub name: String,
    pub k: usize,
    pub in_sig: IrrepsSignature,
    pub out_sig: IrrepsSignature,
    weight_mlp: MlpSpec,
    lin: LinearMixParams,
}

impl SequenceConvParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        name: &str,
        k: usize,
        in_sig: IrrepsSignature,
        out_sig: IrrepsSignature,
    ) -> SequenceConvParams {
        assert!(k >= 2);
        let d_scal = in_sig.mult(0) * k;
        let weight_mlp = MlpSpec::register(
            store,
            rng,
            &format!("{name}.wmlp"),
            vec![d_scal, 2 * d_scal, k],
        );
        // Window concat plus K(K-1) relative-direction channels on l=1.
        let mut cat_sig = IrrepsSignature::new(vec![]).unwrap();
        for _ in 0..k {
            cat_sig = cat_sig.concat(&in_sig);
        }
        cat_sig = cat_sig.concat(&IrrepsSignature::new(vec![(1, k * (k - 1))]).unwrap());
        let lin = LinearMixParams::register(
            store,
            rng,
            &format!("{name}.lin"),
            cat_sig,
            out_sig.clone(),
            true,
        );
        SequenceConvParams { name: name.to_string(), k, in_sig, out_sig, weight_mlp, lin }
    }

    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        window: &[NodeVar],
    ) -> NodeVar {
        assert_eq!(window.len(), self.k, "{} window size", self.name);
        // Convex anchor combination.
        let scalars: Vec<Var> = window.iter().map(|n| n.feat.scalars()).collect();
        let scal_cat = tape.concat(&scalars);
        let logits = self.weight_mlp.forward(tape, store, scal_cat);
        let w = tape.softmax(logits);
        let mut terms = Vec::with_capacity(self.k);
        for (kk, node) in window.iter().enumerate() {
            let wk = tape.slice(w, kk, 1);
            terms.push(tape.mul_scalar(node.anchor, wk));
        }
        let anchor = tape.sum_vars(&terms);
        // All normalized pairwise anchor differences (i != j, row-major).
        let mut dirs = Vec::with_capacity(self.k * (self.k - 1));
        for i in 0..self.k {
            for j in 0..self.k {
                if i == j {
                    continue;
                }
                let diff = tape.sub(window[i].anchor, window[j].anchor);
                let (dir, _r) = normalize3_safe(tape, diff);
                dirs.push(dir);
            }
        }
        let rel_block = tape.concat(&dirs);
        let rel = IrrepVar {
            sig: IrrepsSignature::new(vec![(1, self.k * (self.k - 1))]).unwrap(),
            blocks: vec![rel_block],
        };
        let mut parts: Vec<&IrrepVar> = window.iter().map(|n| &n.feat).collect();
        parts.push(&rel);
        let cat = concat_irreps(tape, &parts);
        let feat = self.lin.forward(tape, store, &cat);
        NodeVar { anchor, feat }
    }
}

/// Output length of a valid strided pass: floor((n - k)/s) + 1.
pub fn coarse_len(n: usize, k: usize, s: usize) -> Option<usize> {
    if n < k {
        None
    } else {
        Some((n - k) / s + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::IrrepTensor;
    use crate::layers::blocks::{input_irrep, read_irrep};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn window_of(
        tape: &mut Tape<f64>,
        sig: &IrrepsSignature,
        rng: &mut StdRng,
        k: usize,
        shift: [f64; 3],
    ) -> Vec<NodeVar> {
        (0..k)
            .map(|i| {
                let feat = IrrepTensor::standard_normal(sig.clone(), rng);
                let anchor = tape.input(vec![
                    3.8 * i as f64 + shift[0],
                    (i as f64).sin() + shift[1],
                    shift[2],
                ]);
                NodeVar { anchor, feat: input_irrep(tape, &feat) }
            })
            .collect()
    }

    #[test]
    fn uniform_logits_give_centroid_anchor() {
        let mut rng = StdRng::seed_from_u64(91);
        let sig = IrrepsSignature::parse("3x0+3x1").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let params =
            SequenceConvParams::register(&mut store, &mut rng, "c", 3, sig.clone(), sig.clone());
        // Zero MLP: logits all equal -> softmax uniform.
        for i in 0..2 {
            store.values_mut(&format!("c.wmlp.w{i}")).iter_mut().for_each(|w| *w = 0.0);
            store.values_mut(&format!("c.wmlp.b{i}")).iter_mut().for_each(|w| *w = 0.0);
        }
        let mut tape: Tape<f64> = Tape::new();
        let window = window_of(&mut tape, &sig, &mut rng, 3, [0.0; 3]);
        let out = params.forward(&mut tape, &store, &window);
        let anchors: Vec<&[f64]> = window.iter().map(|n| tape.value(n.anchor)).collect();
        let centroid: Vec<f64> = (0..3)
            .map(|c| anchors.iter().map(|a| a[c]).sum::<f64>() / 3.0)
            .collect();
        let got = tape.value(out.anchor);
        for c in 0..3 {
            assert!((got[c] - centroid[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_moves_anchor_and_fixes_features() {
        let mut rng = StdRng::seed_from_u64(92);
        let sig = IrrepsSignature::parse("2x0+2x1").unwrap();
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let params =
            SequenceConvParams::register(&mut store, &mut rng, "c", 3, sig.clone(), sig.clone());
        // Same features, anchors shifted by t.
        let feats: Vec<IrrepTensor> = (0..3)
            .map(|_| IrrepTensor::standard_normal(sig.clone(), &mut rng))
            .collect();
        let t = [5.0, -2.0, 1.5];
        let run = |shift: [f64; 3]| {
            let mut tape: Tape<f64> = Tape::new();
            let window: Vec<NodeVar> = (0..3)
                .map(|i| NodeVar {
                    anchor: tape.input(vec![
                        3.8 * i as f64 + shift[0],
                        (i as f64 * 2.0).cos() + shift[1],
                        0.3 * i as f64 + shift[2],
                    ]),
                    feat: input_irrep(&mut tape, &feats[i]),
                })
                .collect();
            let out = params.forward(&mut tape, &store, &window);
            (
                tape.value(out.anchor).to_vec(),
                read_irrep(&tape, &out.feat),
            )
        };
        let (a0, f0) = run([0.0; 3]);
        let (a1, f1) = run(t);
        for c in 0..3 {
            assert!((a1[c] - a0[c] - t[c]).abs() < 1e-9);
        }
        assert!(f0.sub(&f1).norm() < 1e-12, "features must be translation invariant");
    }

    #[test]
    fn coarse_length_formula() {
        assert_eq!(coarse_len(160, 5, 3), Some(52));
        assert_eq!(coarse_len(5, 5, 3), Some(1));
        assert_eq!(coarse_len(4, 5, 3), None);
        // Stacked: 160 -> 52 -> 16 -> 4.
        let mut n = 160;
        let mut lens = Vec::new();
        for _ in 0..3 {
            n = coarse_len(n, 5, 3).unwrap();
            lens.push(n);
        }
        assert_eq!(lens, vec![52, 16, 4]);
    }
}
