//! Reference (double precision) implementations of the equivariant tensor
//! operations: rotation action, tensor products, chunked tensor squares,
//! degree-wise linear maps, norms and gates.
//!
//! These are the ground-truth kernels; the trainable engine mirrors them and
//! is cross-checked against this module in tests.

use crate::error::{Error, Result};
use crate::irreps::cg::{clebsch_gordan, selection_rule};
use crate::irreps::signature::IrrepsSignature;
use crate::irreps::wigner::{wigner_d, RotationSpec};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stacked irrep coefficients: one `d x (2l+1)` row-major block per
/// signature entry.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrepTensor {
    signature: IrrepsSignature,
    blocks: Vec<Vec<f64>>,
}

impl IrrepTensor {
    pub fn zeros(signature: IrrepsSignature) -> IrrepTensor {
        let blocks = signature
            .entries()
            .iter()
            .map(|&(l, d)| vec![0.0; d * (2 * l + 1)])
            .collect();
        IrrepTensor { signature, blocks }
    }

    pub fn from_blocks(signature: IrrepsSignature, blocks: Vec<Vec<f64>>) -> Result<IrrepTensor> {
        if blocks.len() != signature.entries().len() {
            return Err(Error::Shape(format!(
                "expected {} blocks, got {}",
                signature.entries().len(),
                blocks.len()
            )));
        }
        for (&(l, d), b) in signature.entries().iter().zip(&blocks) {
            if b.len() != d * (2 * l + 1) {
                return Err(Error::Shape(format!(
                    "block for l={l} must have {} values, got {}",
                    d * (2 * l + 1),
                    b.len()
                )));
            }
        }
        Ok(IrrepTensor { signature, blocks })
    }

    pub fn standard_normal<R: Rng>(signature: IrrepsSignature, rng: &mut R) -> IrrepTensor {
        let blocks = signature
            .entries()
            .iter()
            .map(|&(l, d)| {
                (0..d * (2 * l + 1))
                    .map(|_| StandardNormal.sample(rng))
                    .collect()
            })
            .collect();
        IrrepTensor { signature, blocks }
    }

    pub fn signature(&self) -> &IrrepsSignature {
        &self.signature
    }

    pub fn block(&self, l: usize) -> Option<&[f64]> {
        self.signature
            .entries()
            .iter()
            .position(|&(dl, _)| dl == l)
            .map(|i| self.blocks[i].as_slice())
    }

    pub fn block_mut(&mut self, l: usize) -> Option<&mut [f64]> {
        let idx = self.signature.entries().iter().position(|&(dl, _)| dl == l)?;
        Some(self.blocks[idx].as_mut_slice())
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// All coefficients flattened in signature order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.signature.dim());
        for b in &self.blocks {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn from_flat(signature: IrrepsSignature, flat: &[f64]) -> Result<IrrepTensor> {
        if flat.len() != signature.dim() {
            return Err(Error::Shape(format!(
                "flat length {} does not match signature dim {}",
                flat.len(),
                signature.dim()
            )));
        }
        let mut blocks = Vec::new();
        let mut off = 0;
        for &(l, d) in signature.entries() {
            let n = d * (2 * l + 1);
            blocks.push(flat[off..off + n].to_vec());
            off += n;
        }
        Ok(IrrepTensor { signature, blocks })
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn sub(&self, other: &IrrepTensor) -> IrrepTensor {
        assert_eq!(self.signature, other.signature);
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        IrrepTensor { signature: self.signature.clone(), blocks }
    }

    pub fn scaled(&self, s: f64) -> IrrepTensor {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|x| x * s).collect())
            .collect();
        IrrepTensor { signature: self.signature.clone(), blocks }
    }

    pub fn add(&self, other: &IrrepTensor) -> IrrepTensor {
        assert_eq!(self.signature, other.signature);
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        IrrepTensor { signature: self.signature.clone(), blocks }
    }
}

/// Rotate every block: each channel row transforms by the degree-l Wigner
/// matrix (row' = D row, i.e. the block is right-multiplied by D^T).
pub fn apply_rotation(a: &IrrepTensor, r: &RotationSpec) -> IrrepTensor {
    let mut out = IrrepTensor::zeros(a.signature.clone());
    for (idx, &(l, d)) in a.signature.entries().iter().enumerate() {
        let n = 2 * l + 1;
        let dm = wigner_d(l, r);
        let src = &a.blocks[idx];
        let dst = &mut out.blocks[idx];
        for c in 0..d {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += dm[i * n + j] * src[c * n + j];
                }
                dst[c * n + i] = acc;
            }
        }
    }
    out
}

/// Degree-wise concatenation of channels.
pub fn concat_channels(a: &IrrepTensor, b: &IrrepTensor) -> IrrepTensor {
    let sig = a.signature.concat(&b.signature);
    let mut out = IrrepTensor::zeros(sig);
    for (idx, &(l, _)) in out.signature.clone().entries().iter().enumerate() {
        let n = 2 * l + 1;
        let mut dst: Vec<f64> = Vec::new();
        if let Some(src) = a.block(l) {
            dst.extend_from_slice(src);
        }
        if let Some(src) = b.block(l) {
            dst.extend_from_slice(src);
        }
        debug_assert_eq!(dst.len() % n, 0);
        out.blocks[idx] = dst;
    }
    out
}

/// All coupling paths (l1, l2, l3) between two signatures that land in
/// `out_degrees`, ordered by (l3, l1, l2). That order defines the channel
/// layout of tensor product outputs.
pub fn product_paths(
    sig_a: &IrrepsSignature,
    sig_b: &IrrepsSignature,
    out_degrees: &[usize],
) -> Vec<(usize, usize, usize)> {
    let mut paths = Vec::new();
    let mut degrees: Vec<usize> = out_degrees.to_vec();
    degrees.sort_unstable();
    degrees.dedup();
    for &l3 in &degrees {
        for l1 in sig_a.degrees() {
            for l2 in sig_b.degrees() {
                if selection_rule(l1, l2, l3) {
                    paths.push((l1, l2, l3));
                }
            }
        }
    }
    paths
}

/// The signature implied by a full tensor product restricted to
/// `out_degrees`: each path contributes d1*d2 channels to its l3 block.
pub fn tensor_product_signature(
    sig_a: &IrrepsSignature,
    sig_b: &IrrepsSignature,
    out_degrees: &[usize],
) -> Result<IrrepsSignature> {
    let paths = product_paths(sig_a, sig_b, out_degrees);
    let mut entries: Vec<(usize, usize)> = Vec::new();
    for &(l1, l2, l3) in &paths {
        let d = sig_a.mult(l1) * sig_b.mult(l2);
        match entries.iter_mut().find(|(l, _)| *l == l3) {
            Some((_, dd)) => *dd += d,
            None => entries.push((l3, d)),
        }
    }
    for &l3 in out_degrees {
        if !entries.iter().any(|&(l, _)| l == l3) {
            return Err(Error::Config(format!(
                "output degree {l3} is unreachable from {sig_a} (x) {sig_b}"
            )));
        }
    }
    IrrepsSignature::new(entries)
}

/// Full tensor product contracted with Clebsch-Gordan coefficients.
///
/// `out_sig` must equal the implied signature (see
/// [`tensor_product_signature`]); passing a narrower degree set is the way
/// to restrict the output.
pub fn tensor_product(
    a: &IrrepTensor,
    b: &IrrepTensor,
    out_sig: &IrrepsSignature,
) -> Result<IrrepTensor> {
    let degrees: Vec<usize> = out_sig.degrees().collect();
    let implied = tensor_product_signature(&a.signature, &b.signature, &degrees)?;
    if &implied != out_sig {
        return Err(Error::Config(format!(
            "tensor product of {} (x) {} onto degrees {degrees:?} yields {implied}, not {out_sig}",
            a.signature, b.signature
        )));
    }
    let mut out = IrrepTensor::zeros(out_sig.clone());
    let paths = product_paths(&a.signature, &b.signature, &degrees);
    let mut offsets: Vec<usize> = vec![0; out_sig.entries().len()];
    for &(l1, l2, l3) in &paths {
        let d1 = a.signature.mult(l1);
        let d2 = b.signature.mult(l2);
        let n1 = 2 * l1 + 1;
        let n2 = 2 * l2 + 1;
        let n3 = 2 * l3 + 1;
        let table = clebsch_gordan(l1, l2, l3);
        let block_idx = out_sig
            .entries()
            .iter()
            .position(|&(l, _)| l == l3)
            .unwrap();
        let off = offsets[block_idx];
        let a_block = a.block(l1).unwrap();
        let b_block = b.block(l2).unwrap();
        {
            let out_block = &mut out.blocks[block_idx];
            for i in 0..d1 {
                for j in 0..d2 {
                    let c_out = off + i * d2 + j;
                    for &(m3, m1, m2, w) in &table.nonzero {
                        out_block[c_out * n3 + m3] +=
                            w * a_block[i * n1 + m1] * b_block[j * n2 + m2];
                    }
                }
            }
        }
        offsets[block_idx] += d1 * d2;
    }
    Ok(out)
}

/// Chunk boundaries for a multiplicity split into segments of `chunk`
/// channels with a ragged tail.
pub fn chunk_sizes(mult: usize, chunk: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut left = mult;
    while left > 0 {
        let c = chunk.min(left);
        out.push(c);
        left -= c;
    }
    out
}

/// Signature of the chunked tensor square (uniform multiplicity required).
pub fn tensor_square_chunked_signature(
    sig: &IrrepsSignature,
    chunk: usize,
    out_degrees: &[usize],
) -> Result<IrrepsSignature> {
    let mult = uniform_mult(sig)?;
    if chunk == 0 {
        return Err(Error::Precondition("chunk size must be positive".into()));
    }
    let mut total: Option<IrrepsSignature> = None;
    for c in chunk_sizes(mult, chunk) {
        let sub = sub_signature(sig, c);
        let part = tensor_product_signature(&sub, &sub, out_degrees)?;
        total = Some(match total {
            None => part,
            Some(t) => t.concat(&part),
        });
    }
    total.ok_or_else(|| Error::Config("empty signature".into()))
}

/// Tensor square computed on independent channel segments and concatenated.
/// With `chunk >= multiplicity` this reproduces `tensor_product(a, a)`.
pub fn tensor_square_chunked(
    a: &IrrepTensor,
    chunk: usize,
    out_degrees: &[usize],
) -> Result<IrrepTensor> {
    let mult = uniform_mult(&a.signature)?;
    if chunk == 0 {
        return Err(Error::Precondition("chunk size must be positive".into()));
    }
    let mut result: Option<IrrepTensor> = None;
    let mut start = 0;
    for c in chunk_sizes(mult, chunk) {
        let sub = slice_channels(a, start, c);
        let sub_sig = tensor_product_signature(&sub.signature, &sub.signature, out_degrees)?;
        let part = tensor_product(&sub, &sub, &sub_sig)?;
        result = Some(match result {
            None => part,
            Some(r) => concat_channels(&r, &part),
        });
        start += c;
    }
    result.ok_or_else(|| Error::Config("empty signature".into()))
}

fn uniform_mult(sig: &IrrepsSignature) -> Result<usize> {
    let mut mult = None;
    for &(_, d) in sig.entries() {
        match mult {
            None => mult = Some(d),
            Some(m) if m == d => {}
            Some(m) => {
                return Err(Error::Config(format!(
                    "chunked square requires uniform multiplicity, found {m} and {d} in {sig}"
                )))
            }
        }
    }
    mult.ok_or_else(|| Error::Config("empty signature".into()))
}

fn sub_signature(sig: &IrrepsSignature, d: usize) -> IrrepsSignature {
    IrrepsSignature::new(sig.degrees().map(|l| (l, d)).collect()).unwrap()
}

fn slice_channels(a: &IrrepTensor, start: usize, count: usize) -> IrrepTensor {
    let sig = sub_signature(&a.signature, count);
    let mut blocks = Vec::new();
    for &(l, _) in sig.entries() {
        let n = 2 * l + 1;
        let src = a.block(l).unwrap();
        blocks.push(src[start * n..(start + count) * n].to_vec());
    }
    IrrepTensor::from_blocks(sig, blocks).unwrap()
}

/// Per-degree channel-mixing weights for [`linear_mix`]. The weight for
/// degree l is a row-major `d_out x d_in` matrix; an optional bias applies
/// to the scalar block only (anything else would break equivariance).
#[derive(Debug, Clone)]
pub struct LinearWeights {
    pub per_degree: Vec<(usize, usize, Vec<f64>)>, // (l, d_out, weight)
    pub scalar_bias: Option<Vec<f64>>,
}

impl LinearWeights {
    pub fn identity(sig: &IrrepsSignature) -> LinearWeights {
        let per_degree = sig
            .entries()
            .iter()
            .map(|&(l, d)| {
                let mut w = vec![0.0; d * d];
                for i in 0..d {
                    w[i * d + i] = 1.0;
                }
                (l, d, w)
            })
            .collect();
        LinearWeights { per_degree, scalar_bias: None }
    }

    pub fn out_signature(&self) -> Result<IrrepsSignature> {
        IrrepsSignature::new(self.per_degree.iter().map(|&(l, d_out, _)| (l, d_out)).collect())
    }
}

/// Mixes channels within each degree; never mixes m components.
pub fn linear_mix(a: &IrrepTensor, w: &LinearWeights) -> Result<IrrepTensor> {
    let out_sig = w.out_signature()?;
    let mut out = IrrepTensor::zeros(out_sig);
    for &(l, d_out, ref weight) in &w.per_degree {
        let d_in = a.signature.mult(l);
        if weight.len() != d_out * d_in {
            return Err(Error::Shape(format!(
                "weight for l={l} must be {d_out}x{d_in}, got {} values",
                weight.len()
            )));
        }
        let n = 2 * l + 1;
        let src = a.block(l).unwrap_or(&[]);
        let dst = out.block_mut(l).unwrap();
        for o in 0..d_out {
            for i in 0..d_in {
                let wv = weight[o * d_in + i];
                if wv == 0.0 {
                    continue;
                }
                for m in 0..n {
                    dst[o * n + m] += wv * src[i * n + m];
                }
            }
        }
    }
    if let Some(bias) = &w.scalar_bias {
        if let Some(dst) = out.block_mut(0) {
            if bias.len() != dst.len() {
                return Err(Error::Shape("scalar bias length mismatch".into()));
            }
            for (d, b) in dst.iter_mut().zip(bias) {
                *d += b;
            }
        }
    }
    Ok(out)
}

pub const NORM_EPS: f64 = 1e-6;

/// Degree-wise RMS normalization: divide every channel of an l-block by the
/// RMS over channels of per-channel 2-norms (plus epsilon), then apply the
/// per-channel gains.
pub fn l_wise_norm(a: &IrrepTensor, scales: &[Vec<f64>], eps: f64) -> Result<IrrepTensor> {
    if scales.len() != a.signature.entries().len() {
        return Err(Error::Shape("one scale vector per degree required".into()));
    }
    let mut out = IrrepTensor::zeros(a.signature.clone());
    for (idx, &(l, d)) in a.signature.entries().iter().enumerate() {
        let n = 2 * l + 1;
        if scales[idx].len() != d {
            return Err(Error::Shape(format!(
                "scale for l={l} must have {d} entries, got {}",
                scales[idx].len()
            )));
        }
        let src = &a.blocks[idx];
        let mut mean_sq = 0.0;
        for c in 0..d {
            let mut norm_sq = 0.0;
            for m in 0..n {
                norm_sq += src[c * n + m] * src[c * n + m];
            }
            mean_sq += norm_sq;
        }
        let rms = (mean_sq / d as f64).sqrt();
        let inv = 1.0 / (rms + eps);
        let dst = &mut out.blocks[idx];
        for c in 0..d {
            let g = scales[idx][c] * inv;
            for m in 0..n {
                dst[c * n + m] = src[c * n + m] * g;
            }
        }
    }
    Ok(out)
}

/// Multiply channel c of every block by the gate scalar s[c], where `s` is
/// segmented over degrees in signature order (one scalar per channel).
pub fn scalar_gate(s: &[f64], a: &IrrepTensor) -> Result<IrrepTensor> {
    if s.len() != a.signature.channels() {
        return Err(Error::Shape(format!(
            "gate needs {} scalars, got {}",
            a.signature.channels(),
            s.len()
        )));
    }
    let mut out = IrrepTensor::zeros(a.signature.clone());
    let mut off = 0;
    for (idx, &(l, d)) in a.signature.entries().iter().enumerate() {
        let n = 2 * l + 1;
        for c in 0..d {
            let g = s[off + c];
            for m in 0..n {
                out.blocks[idx][c * n + m] = a.blocks[idx][c * n + m] * g;
            }
        }
        off += d;
    }
    Ok(out)
}

/// Relative equivariance residual of `op` at `a` under rotation `r`:
/// `|op(rot(a)) - rot(op(a))| / max(|op(a)|, eps)`.
pub fn equivariance_residual<F>(op: F, a: &IrrepTensor, r: &RotationSpec) -> f64
where
    F: Fn(&IrrepTensor) -> IrrepTensor,
{
    let out = op(a);
    let lhs = op(&apply_rotation(a, r));
    let rhs = apply_rotation(&out, r);
    lhs.sub(&rhs).norm() / out.norm().max(1e-12)
}
