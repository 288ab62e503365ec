//! Self-interaction: mixes feature degrees at one node by concatenating
//! the input with its (chunked) tensor square, mixing linearly, gating all
//! channels by an MLP of the scalars, adding the residual and normalizing.
//! The anchor never moves.

use crate::graddiff::mlp::MlpSpec;
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use crate::irreps::{tensor_square_chunked_signature, IrrepsSignature};
use crate::layers::blocks::{
    concat_irreps, gate_irrep, tensor_square_fwd, CgCtx, IrrepVar, LinearMixParams, NodeVar,
    NormParams,
};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct SelfInteractionParams {
    pub name: String,
    pub sig: IrrepsSignature,
    /// Channel segment size for the tensor square; 0 means the full square.
    pub chunk: usize,
    /// Extra scalars (e.g. a time embedding) appended to the gate input.
    pub extra_scalars: usize,
    out_degrees: Vec<usize>,
    lin: LinearMixParams,
    gate_mlp: MlpSpec,
    norm: NormParams,
}

impl SelfInteractionParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        name: &str,
        sig: IrrepsSignature,
        chunk: usize,
        extra_scalars: usize,
        norm_eps: f64,
    ) -> SelfInteractionParams {
        let mult = sig.entries()[0].1;
        let chunk_eff = if chunk == 0 { mult } else { chunk.min(mult) };
        let out_degrees: Vec<usize> = sig.degrees().collect();
        let square_sig = tensor_square_chunked_signature(&sig, chunk_eff, &out_degrees).unwrap();
        let cat_sig = sig.concat(&square_sig);
        let lin = LinearMixParams::register(
            store,
            rng,
            &format!("{name}.lin"),
            cat_sig,
            sig.clone(),
            true,
        );
        let gate_in = sig.mult(0) + extra_scalars;
        let gate_mlp = MlpSpec::register(
            store,
            rng,
            &format!("{name}.gate"),
            vec![gate_in, 2 * gate_in, sig.channels()],
        );
        let norm = NormParams::register(store, &format!("{name}.norm"), sig.clone(), norm_eps);
        SelfInteractionParams {
            name: name.to_string(),
            sig,
            chunk: chunk_eff,
            extra_scalars,
            out_degrees,
            lin,
            gate_mlp,
            norm,
        }
    }

    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ctx: &CgCtx<F>,
        node: &NodeVar,
        extra: Option<Var>,
    ) -> NodeVar {
        let feat = self.forward_features(tape, store, ctx, &node.feat, extra);
        NodeVar { anchor: node.anchor, feat }
    }

    pub fn forward_features<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ctx: &CgCtx<F>,
        x: &IrrepVar,
        extra: Option<Var>,
    ) -> IrrepVar {
        debug_assert_eq!(x.sig, self.sig, "{}", self.name);
        let square = tensor_square_fwd(tape, ctx, x, self.chunk, &self.out_degrees);
        let cat = concat_irreps(tape, &[x, &square]);
        let mixed = self.lin.forward(tape, store, &cat);
        let gate_in = match extra {
            None => mixed.scalars(),
            Some(e) => {
                debug_assert_eq!(e.len, self.extra_scalars);
                let s = mixed.scalars();
                tape.concat(&[s, e])
            }
        };
        let logits = self.gate_mlp.forward(tape, store, gate_in);
        // Unit gates at zero logits, bounded in (0, 2).
        let sig_gates = tape.sigmoid(logits);
        let gates = tape.scale(sig_gates, 2.0);
        let gated = gate_irrep(tape, &mixed, gates);
        // Residual: multiplicities always match here.
        let residual = IrrepVar {
            sig: gated.sig.clone(),
            blocks: gated
                .blocks
                .iter()
                .zip(&x.blocks)
                .map(|(&g, &xb)| tape.add(g, xb))
                .collect(),
        };
        self.norm.forward(tape, store, &residual)
    }
}
