//! Tape-side irrep plumbing shared by all layers: per-degree block handles,
//! degree-wise linear maps, norms, gates and (chunked) tensor squares.

use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{CgCast, Tape, Var};
use crate::irreps::cg::clebsch_gordan;
use crate::irreps::tensor::{chunk_sizes, product_paths, tensor_product_signature};
use crate::irreps::{IrrepTensor, IrrepsSignature};
use rand::Rng;
use std::collections::HashMap;
use std::sync::Arc;

/// Per-degree tape handles mirroring an `IrrepTensor`.
#[derive(Debug, Clone)]
pub struct IrrepVar {
    pub sig: IrrepsSignature,
    pub blocks: Vec<Var>,
}

impl IrrepVar {
    pub fn block(&self, l: usize) -> Option<Var> {
        self.sig
            .entries()
            .iter()
            .position(|&(dl, _)| dl == l)
            .map(|i| self.blocks[i])
    }

    pub fn scalars(&self) -> Var {
        self.block(0).expect("no scalar block")
    }
}

/// Anchor position plus features, on the tape.
#[derive(Debug, Clone)]
pub struct NodeVar {
    pub anchor: Var,
    pub feat: IrrepVar,
}

/// Degree-wise average of equally shaped irrep vars.
pub fn average_irreps<F: Real>(tape: &mut Tape<F>, parts: &[IrrepVar]) -> IrrepVar {
    debug_assert!(!parts.is_empty());
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let sig = parts[0].sig.clone();
    let inv = 1.0 / parts.len() as f64;
    let mut blocks = Vec::new();
    for (i, _) in sig.entries().iter().enumerate() {
        let vars: Vec<Var> = parts.iter().map(|p| p.blocks[i]).collect();
        let s = tape.sum_vars(&vars);
        blocks.push(tape.scale(s, inv));
    }
    IrrepVar { sig, blocks }
}

/// Load a concrete tensor onto the tape as inputs.
pub fn input_irrep<F: Real>(tape: &mut Tape<F>, t: &IrrepTensor) -> IrrepVar {
    let blocks = t.blocks().iter().map(|b| tape.input_f64(b)).collect();
    IrrepVar { sig: t.signature().clone(), blocks }
}

/// Read tape values back into a concrete tensor.
pub fn read_irrep<F: Real>(tape: &Tape<F>, v: &IrrepVar) -> IrrepTensor {
    let blocks = v
        .blocks
        .iter()
        .map(|&b| tape.value(b).iter().map(|x| x.as_f64()).collect())
        .collect();
    IrrepTensor::from_blocks(v.sig.clone(), blocks).unwrap()
}

/// Degree-wise concatenation on the tape. The caller fixes the order.
pub fn concat_irreps<F: Real>(tape: &mut Tape<F>, parts: &[&IrrepVar]) -> IrrepVar {
    let mut sig = IrrepsSignature::new(vec![]).unwrap();
    for p in parts {
        sig = sig.concat(&p.sig);
    }
    let mut blocks = Vec::new();
    for l in sig.degrees() {
        let pieces: Vec<Var> = parts.iter().filter_map(|p| p.block(l)).collect();
        blocks.push(if pieces.len() == 1 {
            pieces[0]
        } else {
            tape.concat(&pieces)
        });
    }
    IrrepVar { sig, blocks }
}

/// Pre-cast Clebsch-Gordan tables for one tape precision.
pub struct CgCtx<F: Real> {
    tables: HashMap<(usize, usize, usize), Arc<CgCast<F>>>,
}

impl<F: Real> CgCtx<F> {
    pub fn new(l_max: usize) -> CgCtx<F> {
        let mut tables = HashMap::new();
        for l1 in 0..=l_max {
            for l2 in 0..=l_max {
                for l3 in 0..=l_max {
                    if crate::irreps::selection_rule(l1, l2, l3) {
                        tables.insert(
                            (l1, l2, l3),
                            CgCast::from_table(clebsch_gordan(l1, l2, l3)),
                        );
                    }
                }
            }
        }
        CgCtx { tables }
    }

    pub fn get(&self, l1: usize, l2: usize, l3: usize) -> &Arc<CgCast<F>> {
        &self.tables[&(l1, l2, l3)]
    }
}

/// Named per-degree linear map (optionally with a scalar bias).
#[derive(Debug, Clone)]
pub struct LinearMixParams {
    pub name: String,
    pub in_sig: IrrepsSignature,
    pub out_sig: IrrepsSignature,
    pub scalar_bias: bool,
}

impl LinearMixParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        name: &str,
        in_sig: IrrepsSignature,
        out_sig: IrrepsSignature,
        scalar_bias: bool,
    ) -> LinearMixParams {
        for &(l, d_out) in out_sig.entries() {
            let d_in = in_sig.mult(l);
            assert!(d_in > 0, "{name}: output degree {l} has no input channels");
            store.insert_normal(&format!("{name}.w{l}"), vec![d_out, d_in], d_in, 1.0, rng);
        }
        if scalar_bias {
            let d_out = out_sig.mult(0);
            assert!(d_out > 0, "{name}: bias requires scalar outputs");
            store.insert_const(&format!("{name}.b"), vec![d_out], 0.0);
        }
        LinearMixParams { name: name.to_string(), in_sig, out_sig, scalar_bias }
    }

    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        x: &IrrepVar,
    ) -> IrrepVar {
        debug_assert_eq!(x.sig, self.in_sig, "{} input signature", self.name);
        let mut blocks = Vec::new();
        for &(l, d_out) in self.out_sig.entries() {
            let d_in = self.in_sig.mult(l);
            let n = 2 * l + 1;
            let w = tape.param(store, &format!("{}.w{l}", self.name));
            let xb = x.block(l).unwrap();
            let mut y = tape.matmul(w, xb, d_out, d_in, n);
            if l == 0 && self.scalar_bias {
                let b = tape.param(store, &format!("{}.b", self.name));
                y = tape.add(y, b);
            }
            blocks.push(y);
        }
        IrrepVar { sig: self.out_sig.clone(), blocks }
    }
}

/// Degree-wise RMS norm with trainable per-channel gains.
#[derive(Debug, Clone)]
pub struct NormParams {
    pub name: String,
    pub sig: IrrepsSignature,
    pub eps: f64,
}

impl NormParams {
    pub fn register<F: Real>(
        store: &mut ParameterStore<F>,
        name: &str,
        sig: IrrepsSignature,
        eps: f64,
    ) -> NormParams {
        for &(l, d) in sig.entries() {
            store.insert_const(&format!("{name}.g{l}"), vec![d], 1.0);
        }
        NormParams { name: name.to_string(), sig, eps }
    }

    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        x: &IrrepVar,
    ) -> IrrepVar {
        debug_assert_eq!(x.sig, self.sig);
        let mut blocks = Vec::new();
        for &(l, d) in self.sig.entries() {
            let n = 2 * l + 1;
            let xb = x.block(l).unwrap();
            let normed = tape.rms_norm(xb, d, n, self.eps);
            let g = tape.param(store, &format!("{}.g{l}", self.name));
            blocks.push(tape.row_scale(normed, g, d, n));
        }
        IrrepVar { sig: self.sig.clone(), blocks }
    }
}

/// Multiply channel c of every degree by gates[offset + c], gates segmented
/// over degrees in signature order.
pub fn gate_irrep<F: Real>(tape: &mut Tape<F>, x: &IrrepVar, gates: Var) -> IrrepVar {
    debug_assert_eq!(gates.len, x.sig.channels());
    let mut blocks = Vec::new();
    let mut off = 0;
    for &(l, d) in x.sig.entries() {
        let n = 2 * l + 1;
        let g = tape.slice(gates, off, d);
        blocks.push(tape.row_scale(x.block(l).unwrap(), g, d, n));
        off += d;
    }
    IrrepVar { sig: x.sig.clone(), blocks }
}

/// Chunked tensor square on the tape. Channel layout matches the reference
/// `tensor_square_chunked`: chunk-major, then path order (l3, l1, l2),
/// then channel pairs row-major.
pub fn tensor_square_fwd<F: Real>(
    tape: &mut Tape<F>,
    ctx: &CgCtx<F>,
    x: &IrrepVar,
    chunk: usize,
    out_degrees: &[usize],
) -> IrrepVar {
    let mult = x.sig.entries()[0].1;
    debug_assert!(
        x.sig.entries().iter().all(|&(_, d)| d == mult),
        "chunked square requires uniform multiplicity"
    );
    let chunk = if chunk == 0 { mult } else { chunk };
    // Per degree of the output, collect pieces chunk-major.
    let sig = crate::irreps::tensor_square_chunked_signature(&x.sig, chunk, out_degrees).unwrap();
    let mut per_degree: HashMap<usize, Vec<Var>> = HashMap::new();
    let mut start = 0;
    for c in chunk_sizes(mult, chunk) {
        // Slice each degree's channels [start, start+c).
        let sub_sig = IrrepsSignature::new(x.sig.degrees().map(|l| (l, c)).collect()).unwrap();
        let mut sub_blocks: HashMap<usize, Var> = HashMap::new();
        for l in x.sig.degrees() {
            let n = 2 * l + 1;
            let b = x.block(l).unwrap();
            sub_blocks.insert(l, tape.slice(b, start * n, c * n));
        }
        let paths = product_paths(&sub_sig, &sub_sig, out_degrees);
        for (l1, l2, l3) in paths {
            let a = sub_blocks[&l1];
            let b = sub_blocks[&l2];
            let table = ctx.get(l1, l2, l3);
            let y = tape.cg_contract(a, b, table, c, c);
            per_degree.entry(l3).or_default().push(y);
        }
        start += c;
    }
    let mut blocks = Vec::new();
    for l in sig.degrees() {
        let pieces = &per_degree[&l];
        blocks.push(if pieces.len() == 1 {
            pieces[0]
        } else {
            tape.concat(pieces)
        });
    }
    IrrepVar { sig, blocks }
}

/// Tensor product of features with a single-channel harmonic stack,
/// weighted per path and channel. Returns the per-degree message blocks.
/// Path order matches `product_paths` on (feat_sig, sh_sig).
pub fn weighted_sh_product<F: Real>(
    tape: &mut Tape<F>,
    ctx: &CgCtx<F>,
    feat: &IrrepVar,
    sh: &[Var],
    weights: Var,
    out_degrees: &[usize],
) -> IrrepVar {
    let sh_sig = IrrepsSignature::new((0..sh.len()).map(|l| (l, 1)).collect()).unwrap();
    let out_sig = tensor_product_signature(&feat.sig, &sh_sig, out_degrees).unwrap();
    let paths = product_paths(&feat.sig, &sh_sig, out_degrees);
    let mut per_degree: HashMap<usize, Vec<Var>> = HashMap::new();
    let mut w_off = 0;
    for (l1, l2, l3) in paths {
        let d = feat.sig.mult(l1);
        let a = feat.block(l1).unwrap();
        let table = ctx.get(l1, l2, l3);
        let y = tape.cg_contract(a, sh[l2], table, d, 1);
        let w = tape.slice(weights, w_off, d);
        let yw = tape.row_scale(y, w, d, 2 * l3 + 1);
        per_degree.entry(l3).or_default().push(yw);
        w_off += d;
    }
    let mut blocks = Vec::new();
    for l in out_sig.degrees() {
        let pieces = &per_degree[&l];
        blocks.push(if pieces.len() == 1 {
            pieces[0]
        } else {
            tape.concat(pieces)
        });
    }
    IrrepVar { sig: out_sig, blocks }
}

/// Number of path-weight scalars `weighted_sh_product` consumes.
pub fn sh_product_weight_count(
    feat_sig: &IrrepsSignature,
    sh_degrees: usize,
    out_degrees: &[usize],
) -> usize {
    let sh_sig = IrrepsSignature::new((0..sh_degrees).map(|l| (l, 1)).collect()).unwrap();
    product_paths(feat_sig, &sh_sig, out_degrees)
        .iter()
        .map(|&(l1, _, _)| feat_sig.mult(l1))
        .sum()
}

/// Safe direction: v / |v|, or the zero vector when |v| is tiny (the
/// branch is decided from forward values and carries no gradient).
pub fn normalize3_safe<F: Real>(tape: &mut Tape<F>, v: Var) -> (Var, Var) {
    let r = tape.norm3_eps(v, 1e-24);
    if tape.scalar(r).as_f64() < 1e-6 {
        let zero = tape.input(vec![F::zero(); 3]);
        return (zero, r);
    }
    let inv = tape.recip_eps(r, 0.0);
    (tape.mul_scalar(v, inv), r)
}
