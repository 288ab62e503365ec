//! Reverse-mode tape covering exactly the operation set the model needs.
//!
//! Every operation records one node with a hand-written adjoint closure;
//! programs are built solely from these methods, so every recorded op is
//! differentiable by construction. Buffers are flat; shape is whatever the
//! op was told (blocks are row-major `d x (2l+1)`).

use crate::error::{Error, Result};
use crate::geom::eigh3;
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::irreps::cg::CgTable;
use std::collections::HashMap;
use std::sync::Arc;

/// Handle to a tape value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    pub id: usize,
    pub len: usize,
}

struct Node<F: Real> {
    out: usize,
    name: &'static str,
    back: Box<dyn Fn(&[Vec<F>], &[F], &mut Grads<'_, F>) + Send>,
}

/// Gradient accumulator handed to adjoints; allocates lazily.
pub struct Grads<'a, F: Real> {
    lens: &'a [usize],
    slots: &'a mut [Option<Vec<F>>],
}

impl<F: Real> Grads<'_, F> {
    pub fn buf(&mut self, id: usize) -> &mut [F] {
        if self.slots[id].is_none() {
            self.slots[id] = Some(vec![F::zero(); self.lens[id]]);
        }
        self.slots[id].as_mut().unwrap()
    }
}

/// A Clebsch-Gordan table pre-cast to the engine precision.
#[derive(Debug, Clone)]
pub struct CgCast<F> {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
    pub entries: Vec<(u16, u16, u16, F)>,
}

impl<F: Real> CgCast<F> {
    pub fn from_table(t: &CgTable) -> Arc<CgCast<F>> {
        Arc::new(CgCast {
            l1: t.l1,
            l2: t.l2,
            l3: t.l3,
            entries: t
                .nonzero
                .iter()
                .map(|&(m3, m1, m2, w)| (m3 as u16, m1 as u16, m2 as u16, F::of(w)))
                .collect(),
        })
    }
}

pub struct Tape<F: Real> {
    vals: Vec<Vec<F>>,
    nodes: Vec<Node<F>>,
    param_binds: Vec<(usize, usize)>, // (param index, var id)
    param_lookup: HashMap<usize, usize>,
    grads: Vec<Option<Vec<F>>>,
    recording: bool,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            vals: Vec::new(),
            nodes: Vec::new(),
            param_binds: Vec::new(),
            param_lookup: HashMap::new(),
            grads: Vec::new(),
            recording: true,
        }
    }

    /// Forward-only tape: adjoint closures are not recorded, `backward`
    /// must not be called.
    pub fn inference() -> Self {
        let mut t = Self::new();
        t.recording = false;
        t
    }

    fn push_val(&mut self, data: Vec<F>) -> Var {
        let id = self.vals.len();
        let len = data.len();
        self.vals.push(data);
        Var { id, len }
    }

    fn push_node(
        &mut self,
        out: Var,
        name: &'static str,
        back: Box<dyn Fn(&[Vec<F>], &[F], &mut Grads<'_, F>) + Send>,
    ) {
        if self.recording {
            self.nodes.push(Node { out: out.id, name, back });
        }
    }

    pub fn value(&self, v: Var) -> &[F] {
        &self.vals[v.id]
    }

    pub fn scalar(&self, v: Var) -> F {
        debug_assert_eq!(v.len, 1);
        self.vals[v.id][0]
    }

    /// Leaf holding input data; gradients flow into it and can be read back.
    pub fn input(&mut self, data: Vec<F>) -> Var {
        self.push_val(data)
    }

    pub fn input_f64(&mut self, data: &[f64]) -> Var {
        self.input(data.iter().map(|&x| F::of(x)).collect())
    }

    /// Leaf bound to a named parameter; reuses the existing leaf when the
    /// same parameter is loaded twice (weight sharing accumulates grads).
    pub fn param(&mut self, store: &ParameterStore<F>, name: &str) -> Var {
        let idx = store
            .idx(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        if let Some(&vid) = self.param_lookup.get(&idx) {
            return Var { id: vid, len: self.vals[vid].len() };
        }
        let var = self.push_val(store.entry(idx).values.clone());
        self.param_binds.push((idx, var.id));
        self.param_lookup.insert(idx, var.id);
        var
    }

    /// Runs the adjoint sweep from a scalar loss. Returns an error when the
    /// loss is non-finite, naming the first offending op.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        assert_eq!(loss.len, 1, "loss must be scalar");
        let lv = self.vals[loss.id][0];
        if !lv.is_finite() {
            let culprit = self.first_non_finite().unwrap_or("loss");
            return Err(Error::NonFinite(format!("loss (first produced by op {culprit})")));
        }
        self.grads = (0..self.vals.len()).map(|_| None).collect();
        self.grads[loss.id] = Some(vec![F::one()]);
        let lens: Vec<usize> = self.vals.iter().map(|v| v.len()).collect();
        for node in self.nodes.iter().rev() {
            let out = node.out;
            let Some(gout) = self.grads[out].take() else {
                continue;
            };
            let (before, _) = self.grads.split_at_mut(out);
            let mut sink = Grads { lens: &lens[..out], slots: before };
            (node.back)(&self.vals, &gout, &mut sink);
        }
        Ok(())
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        for node in &self.nodes {
            if self.vals[node.out].iter().any(|x| !x.is_finite()) {
                return Some(node.name);
            }
        }
        None
    }

    /// Gradient of the loss w.r.t. a leaf (zeros if it never received one).
    pub fn grad(&self, v: Var) -> Vec<F> {
        match &self.grads[v.id] {
            Some(g) => g.clone(),
            None => vec![F::zero(); v.len],
        }
    }

    /// Scatter accumulated parameter gradients back into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParameterStore<F>) {
        for &(pidx, vid) in &self.param_binds {
            if let Some(g) = &self.grads[vid] {
                store.add_grad(pidx, g);
            }
        }
    }

    /// Parameter gradients as (store index, buffer) pairs, for merging
    /// across worker threads.
    pub fn param_grads(&self) -> Vec<(usize, Vec<F>)> {
        self.param_binds
            .iter()
            .filter_map(|&(pidx, vid)| self.grads[vid].as_ref().map(|g| (pidx, g.clone())))
            .collect()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    // ----- elementwise -----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(a.len, b.len);
        let data = self.vals[a.id]
            .iter()
            .zip(&self.vals[b.id])
            .map(|(&x, &y)| x + y)
            .collect();
        let out = self.push_val(data);
        let (ai, bi) = (a.id, b.id);
        self.push_node(
            out,
            "add",
            Box::new(move |_v, g, sink| {
                for (s, &gi) in sink.buf(ai).iter_mut().zip(g) {
                    *s += gi;
                }
                for (s, &gi) in sink.buf(bi).iter_mut().zip(g) {
                    *s += gi;
                }
            }),
        );
        out
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(a.len, b.len);
        let data = self.vals[a.id]
            .iter()
            .zip(&self.vals[b.id])
            .map(|(&x, &y)| x - y)
            .collect();
        let out = self.push_val(data);
        let (ai, bi) = (a.id, b.id);
        self.push_node(
            out,
            "sub",
            Box::new(move |_v, g, sink| {
                for (s, &gi) in sink.buf(ai).iter_mut().zip(g) {
                    *s += gi;
                }
                for (s, &gi) in sink.buf(bi).iter_mut().zip(g) {
                    *s -= gi;
                }
            }),
        );
        out
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(a.len, b.len);
        let data = self.vals[a.id]
            .iter()
            .zip(&self.vals[b.id])
            .map(|(&x, &y)| x * y)
            .collect();
        let out = self.push_val(data);
        let (ai, bi) = (a.id, b.id);
        self.push_node(
            out,
            "mul",
            Box::new(move |v, g, sink| {
                {
                    let bv = &v[bi];
                    let ga = sink.buf(ai);
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                let av = &v[ai];
                let gb = sink.buf(bi);
                for i in 0..g.len() {
                    gb[i] += g[i] * av[i];
                }
            }),
        );
        out
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let cf = F::of(c);
        let data = self.vals[a.id].iter().map(|&x| x * cf).collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "scale",
            Box::new(move |_v, g, sink| {
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] += g[i] * cf;
                }
            }),
        );
        out
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let cf = F::of(c);
        let data = self.vals[a.id].iter().map(|&x| x + cf).collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "add_const",
            Box::new(move |_v, g, sink| {
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] += g[i];
                }
            }),
        );
        out
    }

    /// Elementwise sum of several equal-length vars.
    pub fn sum_vars(&mut self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        let len = vars[0].len;
        let mut data = vec![F::zero(); len];
        for v in vars {
            debug_assert_eq!(v.len, len);
            for (d, &x) in data.iter_mut().zip(&self.vals[v.id]) {
                *d += x;
            }
        }
        let out = self.push_val(data);
        let ids: Vec<usize> = vars.iter().map(|v| v.id).collect();
        self.push_node(
            out,
            "sum_vars",
            Box::new(move |_v, g, sink| {
                for &vid in &ids {
                    let gv = sink.buf(vid);
                    for i in 0..g.len() {
                        gv[i] += g[i];
                    }
                }
            }),
        );
        out
    }

    // ----- activations -----

    pub fn silu(&mut self, a: Var) -> Var {
        let data = self.vals[a.id]
            .iter()
            .map(|&x| x / (F::one() + (-x).exp()))
            .collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "silu",
            Box::new(move |v, g, sink| {
                let av = &v[ai];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    let s = F::one() / (F::one() + (-av[i]).exp());
                    ga[i] += g[i] * s * (F::one() + av[i] * (F::one() - s));
                }
            }),
        );
        out
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data: Vec<F> = self.vals[a.id]
            .iter()
            .map(|&x| F::one() / (F::one() + (-x).exp()))
            .collect();
        let out = self.push_val(data);
        let (ai, oi) = (a.id, out.id);
        self.push_node(
            out,
            "sigmoid",
            Box::new(move |v, g, sink| {
                let y = &v[oi];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] += g[i] * y[i] * (F::one() - y[i]);
                }
            }),
        );
        out
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.vals[a.id]
            .iter()
            .map(|&x| if x > F::zero() { x } else { F::zero() })
            .collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "relu",
            Box::new(move |v, g, sink| {
                let av = &v[ai];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    if av[i] > F::zero() {
                        ga[i] += g[i];
                    }
                }
            }),
        );
        out
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let hi = F::of(20.0);
        let data = self.vals[a.id]
            .iter()
            .map(|&x| {
                if x > hi {
                    x
                } else if x < -hi {
                    x.exp()
                } else {
                    (F::one() + x.exp()).ln()
                }
            })
            .collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "softplus",
            Box::new(move |v, g, sink| {
                let av = &v[ai];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    let s = F::one() / (F::one() + (-av[i]).exp());
                    ga[i] += g[i] * s;
                }
            }),
        );
        out
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let data = self.vals[a.id].iter().map(|&x| x.sin()).collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "sin",
            Box::new(move |v, g, sink| {
                let av = &v[ai];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] += g[i] * av[i].cos();
                }
            }),
        );
        out
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let data = self.vals[a.id].iter().map(|&x| x.cos()).collect();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "cos",
            Box::new(move |v, g, sink| {
                let av = &v[ai];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] -= g[i] * av[i].sin();
                }
            }),
        );
        out
    }

    pub fn sqrt_eps(&mut self, a: Var, eps: f64) -> Var {
        let e = F::of(eps);
        let data: Vec<F> = self.vals[a.id].iter().map(|&x| (x + e).sqrt()).collect();
        let out = self.push_val(data);
        let (ai, oi) = (a.id, out.id);
        self.push_node(
            out,
            "sqrt_eps",
            Box::new(move |v, g, sink| {
                let y = &v[oi];
                let ga = sink.buf(ai);
                let half = F::of(0.5);
                for i in 0..g.len() {
                    ga[i] += g[i] * half / y[i];
                }
            }),
        );
        out
    }

    pub fn recip_eps(&mut self, a: Var, eps: f64) -> Var {
        let e = F::of(eps);
        let data: Vec<F> = self.vals[a.id].iter().map(|&x| F::one() / (x + e)).collect();
        let out = self.push_val(data);
        let (ai, oi) = (a.id, out.id);
        self.push_node(
            out,
            "recip_eps",
            Box::new(move |v, g, sink| {
                let y = &v[oi];
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] -= g[i] * y[i] * y[i];
                }
            }),
        );
        out
    }

    // ----- shape -----

    pub fn concat(&mut self, vars: &[Var]) -> Var {
        let mut data = Vec::with_capacity(vars.iter().map(|v| v.len).sum());
        for v in vars {
            data.extend_from_slice(&self.vals[v.id]);
        }
        let out = self.push_val(data);
        let parts: Vec<(usize, usize)> = vars.iter().map(|v| (v.id, v.len)).collect();
        self.push_node(
            out,
            "concat",
            Box::new(move |_v, g, sink| {
                let mut off = 0;
                for &(vid, len) in &parts {
                    let gv = sink.buf(vid);
                    for i in 0..len {
                        gv[i] += g[off + i];
                    }
                    off += len;
                }
            }),
        );
        out
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let data = self.vals[a.id][start..start + len].to_vec();
        let out = self.push_val(data);
        let ai = a.id;
        self.push_node(
            out,
            "slice",
            Box::new(move |_v, g, sink| {
                let ga = sink.buf(ai);
                for i in 0..len {
                    ga[start + i] += g[i];
                }
            }),
        );
        out
    }

    // ----- linear algebra -----

    /// `a` is r x k, `b` is k x c, output r x c (all row-major).
    pub fn matmul(&mut self, a: Var, b: Var, r: usize, k: usize, c: usize) -> Var {
        debug_assert_eq!(a.len, r * k);
        debug_assert_eq!(b.len, k * c);
        let mut data = vec![F::zero(); r * c];
        {
            let av = &self.vals[a.id];
            let bv = &self.vals[b.id];
            for i in 0..r {
                for kk in 0..k {
                    let aik = av[i * k + kk];
                    if aik == F::zero() {
                        continue;
                    }
                    for j in 0..c {
                        data[i * c + j] += aik * bv[kk * c + j];
                    }
                }
            }
        }
        let out = self.push_val(data);
        let (ai, bi) = (a.id, b.id);
        self.push_node(
            out,
            "matmul",
            Box::new(move |v, g, sink| {
                {
                    let bv = &v[bi];
                    let ga = sink.buf(ai);
                    for i in 0..r {
                        for kk in 0..k {
                            let mut acc = F::zero();
                            for j in 0..c {
                                acc += g[i * c + j] * bv[kk * c + j];
                            }
                            ga[i * k + kk] += acc;
                        }
                    }
                }
                let av = &v[ai];
                let gb = sink.buf(bi);
                for kk in 0..k {
                    for j in 0..c {
                        let mut acc = F::zero();
                        for i in 0..r {
                            acc += av[i * k + kk] * g[i * c + j];
                        }
                        gb[kk * c + j] += acc;
                    }
                }
            }),
        );
        out
    }

    /// Multiply row c of a d x n block by scales[c].
    pub fn row_scale(&mut self, block: Var, scales: Var, d: usize, n: usize) -> Var {
        debug_assert_eq!(block.len, d * n);
        debug_assert_eq!(scales.len, d);
        let mut data = vec![F::zero(); d * n];
        {
            let bv = &self.vals[block.id];
            let sv = &self.vals[scales.id];
            for c in 0..d {
                for m in 0..n {
                    data[c * n + m] = bv[c * n + m] * sv[c];
                }
            }
        }
        let out = self.push_val(data);
        let (bi, si) = (block.id, scales.id);
        self.push_node(
            out,
            "row_scale",
            Box::new(move |v, g, sink| {
                {
                    let sv = &v[si];
                    let gb = sink.buf(bi);
                    for c in 0..d {
                        for m in 0..n {
                            gb[c * n + m] += g[c * n + m] * sv[c];
                        }
                    }
                }
                let bv = &v[bi];
                let gs = sink.buf(si);
                for c in 0..d {
                    let mut acc = F::zero();
                    for m in 0..n {
                        acc += g[c * n + m] * bv[c * n + m];
                    }
                    gs[c] += acc;
                }
            }),
        );
        out
    }

    /// Divide a d x n block by the RMS over channels of per-channel norms,
    /// plus eps.
    pub fn rms_norm(&mut self, block: Var, d: usize, n: usize, eps: f64) -> Var {
        debug_assert_eq!(block.len, d * n);
        let e = F::of(eps);
        let bv = &self.vals[block.id];
        let mut sumsq = F::zero();
        for &x in bv.iter() {
            sumsq += x * x;
        }
        let rms = (sumsq / F::of(d as f64)).sqrt();
        let inv = F::one() / (rms + e);
        let data = bv.iter().map(|&x| x * inv).collect();
        let out = self.push_val(data);
        let bi = block.id;
        self.push_node(
            out,
            "rms_norm",
            Box::new(move |v, g, sink| {
                let bv = &v[bi];
                let mut sumsq = F::zero();
                for &x in bv.iter() {
                    sumsq += x * x;
                }
                let df = F::of(d as f64);
                let rms = (sumsq / df).sqrt();
                let t = rms + e;
                let gb = sink.buf(bi);
                if rms.as_f64() < 1e-30 {
                    for i in 0..g.len() {
                        gb[i] += g[i] / t;
                    }
                    return;
                }
                let mut gdotx = F::zero();
                for i in 0..g.len() {
                    gdotx += g[i] * bv[i];
                }
                let corr = gdotx / (df * rms * t * t);
                for i in 0..g.len() {
                    gb[i] += g[i] / t - bv[i] * corr;
                }
            }),
        );
        out
    }

    /// One Clebsch-Gordan coupling path: blocks d1 x (2l1+1) and
    /// d2 x (2l2+1) produce d1*d2 x (2l3+1), channel pairs row-major.
    pub fn cg_contract(&mut self, a: Var, b: Var, table: &Arc<CgCast<F>>, d1: usize, d2: usize) -> Var {
        let n1 = 2 * table.l1 + 1;
        let n2 = 2 * table.l2 + 1;
        let n3 = 2 * table.l3 + 1;
        debug_assert_eq!(a.len, d1 * n1);
        debug_assert_eq!(b.len, d2 * n2);
        let mut data = vec![F::zero(); d1 * d2 * n3];
        {
            let av = &self.vals[a.id];
            let bv = &self.vals[b.id];
            for i in 0..d1 {
                for j in 0..d2 {
                    let base = (i * d2 + j) * n3;
                    for &(m3, m1, m2, w) in &table.entries {
                        data[base + m3 as usize] +=
                            w * av[i * n1 + m1 as usize] * bv[j * n2 + m2 as usize];
                    }
                }
            }
        }
        let out = self.push_val(data);
        let (ai, bi) = (a.id, b.id);
        let tbl = Arc::clone(table);
        self.push_node(
            out,
            "cg_contract",
            Box::new(move |v, g, sink| {
                let av = &v[ai];
                let bv = &v[bi];
                {
                    let ga = sink.buf(ai);
                    for i in 0..d1 {
                        for j in 0..d2 {
                            let base = (i * d2 + j) * n3;
                            for &(m3, m1, m2, w) in &tbl.entries {
                                ga[i * n1 + m1 as usize] +=
                                    w * g[base + m3 as usize] * bv[j * n2 + m2 as usize];
                            }
                        }
                    }
                }
                let gb = sink.buf(bi);
                for i in 0..d1 {
                    for j in 0..d2 {
                        let base = (i * d2 + j) * n3;
                        for &(m3, m1, m2, w) in &tbl.entries {
                            gb[j * n2 + m2 as usize] +=
                                w * g[base + m3 as usize] * av[i * n1 + m1 as usize];
                        }
                    }
                }
            }),
        );
        out
    }

    // ----- reductions -----

    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = F::zero();
        for &x in &self.vals[a.id] {
            acc += x;
        }
        let out = self.push_val(vec![acc]);
        let ai = a.id;
        self.push_node(
            out,
            "sum",
            Box::new(move |_v, g, sink| {
                let ga = sink.buf(ai);
                for s in ga.iter_mut() {
                    *s += g[0];
                }
            }),
        );
        out
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = a.len;
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        debug_assert_eq!(a.len, b.len);
        let mut acc = F::zero();
        for (&x, &y) in self.vals[a.id].iter().zip(&self.vals[b.id]) {
            acc += x * y;
        }
        let out = self.push_val(vec![acc]);
        let (ai, bi) = (a.id, b.id);
        self.push_node(
            out,
            "dot",
            Box::new(move |v, g, sink| {
                {
                    let bv = &v[bi];
                    let ga = sink.buf(ai);
                    for i in 0..ga.len() {
                        ga[i] += g[0] * bv[i];
                    }
                }
                let av = &v[ai];
                let gb = sink.buf(bi);
                for i in 0..gb.len() {
                    gb[i] += g[0] * av[i];
                }
            }),
        );
        out
    }

    /// Broadcast multiply by a scalar var.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        debug_assert_eq!(s.len, 1);
        let sv = self.vals[s.id][0];
        let data = self.vals[a.id].iter().map(|&x| x * sv).collect();
        let out = self.push_val(data);
        let (ai, si) = (a.id, s.id);
        self.push_node(
            out,
            "mul_scalar",
            Box::new(move |v, g, sink| {
                {
                    let sv = v[si][0];
                    let ga = sink.buf(ai);
                    for i in 0..g.len() {
                        ga[i] += g[i] * sv;
                    }
                }
                let av = &v[ai];
                let mut acc = F::zero();
                for i in 0..g.len() {
                    acc += g[i] * av[i];
                }
                sink.buf(si)[0] += acc;
            }),
        );
        out
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let av = &self.vals[a.id];
        let mx = av.iter().cloned().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = av.iter().map(|&x| (x - mx).exp()).collect();
        let mut z = F::zero();
        for &e in &exps {
            z += e;
        }
        let data: Vec<F> = exps.iter().map(|&e| e / z).collect();
        let out = self.push_val(data);
        let (ai, oi) = (a.id, out.id);
        self.push_node(
            out,
            "softmax",
            Box::new(move |v, g, sink| {
                let y = &v[oi];
                let mut gy = F::zero();
                for i in 0..g.len() {
                    gy += g[i] * y[i];
                }
                let ga = sink.buf(ai);
                for i in 0..g.len() {
                    ga[i] += y[i] * (g[i] - gy);
                }
            }),
        );
        out
    }

    // ----- 3-vector geometry -----

    pub fn norm3_eps(&mut self, v3: Var, eps: f64) -> Var {
        debug_assert_eq!(v3.len, 3);
        let e = F::of(eps);
        let a = &self.vals[v3.id];
        let r = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + e).sqrt();
        let out = self.push_val(vec![r]);
        let (vi, oi) = (v3.id, out.id);
        self.push_node(
            out,
            "norm3_eps",
            Box::new(move |v, g, sink| {
                let a = &v[vi];
                let r = v[oi][0];
                let gv = sink.buf(vi);
                for i in 0..3 {
                    gv[i] += g[0] * a[i] / r;
                }
            }),
        );
        out
    }

    pub fn cross3(&mut self, a: Var, b: Var) -> Var {
        let av = &self.vals[a.id];
        let bv = &self.vals[b.id];
        let data = vec![
            av[1] * bv[2] - av[2] * bv[1],
            av[2] * bv[0] - av[0] * bv[2],
            av[0] * bv[1] - av[1] * bv[0],
        ];
        let out = self.push_val(data);
        let (ai, bi) = (a.id, b.id);
        self.push_node(
            out,
            "cross3",
            Box::new(move |v, g, sink| {
                let av: [F; 3] = [v[ai][0], v[ai][1], v[ai][2]];
                let bv: [F; 3] = [v[bi][0], v[bi][1], v[bi][2]];
                // grad_a += b x g ; grad_b += g x a
                {
                    let ga = sink.buf(ai);
                    ga[0] += bv[1] * g[2] - bv[2] * g[1];
                    ga[1] += bv[2] * g[0] - bv[0] * g[2];
                    ga[2] += bv[0] * g[1] - bv[1] * g[0];
                }
                let gb = sink.buf(bi);
                gb[0] += g[1] * av[2] - g[2] * av[1];
                gb[1] += g[2] * av[0] - g[0] * av[2];
                gb[2] += g[0] * av[1] - g[1] * av[0];
            }),
        );
        out
    }

    pub fn atan2(&mut self, y: Var, x: Var) -> Var {
        debug_assert_eq!(y.len, 1);
        debug_assert_eq!(x.len, 1);
        let yv = self.vals[y.id][0];
        let xv = self.vals[x.id][0];
        let out = self.push_val(vec![yv.atan2(xv)]);
        let (yi, xi) = (y.id, x.id);
        self.push_node(
            out,
            "atan2",
            Box::new(move |v, g, sink| {
                let yv = v[yi][0];
                let xv = v[xi][0];
                let r2 = xv * xv + yv * yv;
                sink.buf(yi)[0] += g[0] * xv / r2;
                sink.buf(xi)[0] -= g[0] * yv / r2;
            }),
        );
        out
    }

    /// Spherical harmonics of a (unit) direction with analytic jacobian.
    /// Zero input yields zeros for l >= 1 with zero gradient.
    pub fn sh_dir(&mut self, u: Var, l: usize) -> Var {
        debug_assert_eq!(u.len, 3);
        let uv = &self.vals[u.id];
        let (x, y, z) = (uv[0], uv[1], uv[2]);
        let zero_in = x == F::zero() && y == F::zero() && z == F::zero();
        let data: Vec<F> = if zero_in && l >= 1 {
            vec![F::zero(); 2 * l + 1]
        } else {
            sh_eval(l, x, y, z)
        };
        let out = self.push_val(data);
        let ui = u.id;
        self.push_node(
            out,
            "sh_dir",
            Box::new(move |v, g, sink| {
                let uv = &v[ui];
                let (x, y, z) = (uv[0], uv[1], uv[2]);
                if x == F::zero() && y == F::zero() && z == F::zero() {
                    return;
                }
                let jac = sh_jacobian(l, x, y, z);
                let gu = sink.buf(ui);
                for (row, grow) in jac.chunks(3).zip(g.iter()) {
                    gu[0] += *grow * row[0];
                    gu[1] += *grow * row[1];
                    gu[2] += *grow * row[2];
                }
            }),
        );
        out
    }

    /// Gaussian radial basis of a scalar distance.
    pub fn gaussian_rbf(&mut self, r: Var, centers: Arc<Vec<f64>>, inv_width: f64) -> Var {
        debug_assert_eq!(r.len, 1);
        let rv = self.vals[r.id][0];
        let iw = F::of(inv_width);
        let data: Vec<F> = centers
            .iter()
            .map(|&c| {
                let t = (rv - F::of(c)) * iw;
                (-t * t).exp()
            })
            .collect();
        let out = self.push_val(data);
        let (ri, oi) = (r.id, out.id);
        let cs = Arc::clone(&centers);
        self.push_node(
            out,
            "gaussian_rbf",
            Box::new(move |v, g, sink| {
                let rv = v[ri][0];
                let ys = &v[oi];
                let mut acc = F::zero();
                for (b, &c) in cs.iter().enumerate() {
                    let t = (rv - F::of(c)) * iw;
                    acc += g[b] * ys[b] * F::of(-2.0) * t * iw;
                }
                sink.buf(ri)[0] += acc;
            }),
        );
        out
    }

    /// Smooth cutoff envelope: 1 at r=0, 0 at r>=cutoff, C2-smooth.
    pub fn cutoff_env(&mut self, r: Var, cutoff: f64) -> Var {
        debug_assert_eq!(r.len, 1);
        let rv = self.vals[r.id][0].as_f64();
        let x = (rv / cutoff).clamp(0.0, 1.0);
        let u = 1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
        let out = self.push_val(vec![F::of(u)]);
        let ri = r.id;
        self.push_node(
            out,
            "cutoff_env",
            Box::new(move |v, g, sink| {
                let rv = v[ri][0].as_f64();
                let x = rv / cutoff;
                if (0.0..1.0).contains(&x) {
                    let du = -30.0 * x * x * (1.0 - x) * (1.0 - x) / cutoff;
                    sink.buf(ri)[0] += g[0] * F::of(du);
                }
            }),
        );
        out
    }

    /// Recover the half-difference vector d from the 5 traceless-symmetric
    /// coefficients produced by the pair codec. Forward uses the leading
    /// eigenpair; the adjoint is the exact eigenpair derivative with a
    /// clamped spectral gap.
    pub fn pair_halfdiff(&mut self, q: Var) -> Var {
        debug_assert_eq!(q.len, 5);
        let qv: Vec<f64> = self.vals[q.id].iter().map(|x| x.as_f64()).collect();
        let (lam, vecs) = leading_eig(&qv);
        let s = (1.5 * lam.max(0.0) + 1e-12).sqrt();
        let v1 = vecs[0];
        let data = vec![F::of(s * v1[0]), F::of(s * v1[1]), F::of(s * v1[2])];
        let out = self.push_val(data);
        let qi = q.id;
        self.push_node(
            out,
            "pair_halfdiff",
            Box::new(move |v, g, sink| {
                let qv: Vec<f64> = v[qi].iter().map(|x| x.as_f64()).collect();
                let (lam, vecs) = leading_eig_full(&qv);
                let lam1 = lam[0];
                let s = (1.5 * lam1.max(0.0) + 1e-12).sqrt();
                let v1 = vecs[0];
                let gd = [g[0].as_f64(), g[1].as_f64(), g[2].as_f64()];
                // d = s * v1
                let vbar = [s * gd[0], s * gd[1], s * gd[2]];
                let sbar = v1[0] * gd[0] + v1[1] * gd[1] + v1[2] * gd[2];
                let lambar = if lam1 > 0.0 { sbar * 0.75 / s } else { 0.0 };
                // T adjoint from (lambda1, v1).
                let mut tbar = [[0.0f64; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        tbar[i][j] += lambar * v1[i] * v1[j];
                    }
                }
                let floor = 1e-4 * lam1.abs().max(1.0);
                for jdx in 1..3 {
                    let vj = vecs[jdx];
                    let mut gap = lam1 - lam[jdx];
                    if gap.abs() < floor {
                        gap = if gap >= 0.0 { floor } else { -floor };
                    }
                    let c = (vj[0] * vbar[0] + vj[1] * vbar[1] + vj[2] * vbar[2]) / gap;
                    for i in 0..3 {
                        for j in 0..3 {
                            tbar[i][j] += c * vj[i] * v1[j];
                        }
                    }
                }
                // Chain through the q -> T unpacking.
                let s3 = 3.0f64.sqrt();
                let gq = sink.buf(qi);
                gq[0] += F::of((tbar[0][1] + tbar[1][0]) / s3);
                gq[1] += F::of((tbar[1][2] + tbar[2][1]) / s3);
                gq[2] += F::of((-tbar[0][0] - tbar[1][1] + 2.0 * tbar[2][2]) / 3.0);
                gq[3] += F::of((tbar[0][2] + tbar[2][0]) / s3);
                gq[4] += F::of((tbar[0][0] - tbar[1][1]) / s3);
            }),
        );
        out
    }

    // ----- fused losses -----

    /// Mean cross entropy between rows of logits and labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<Vec<usize>>, alphabet: usize) -> Var {
        let rows = labels.len();
        debug_assert_eq!(logits.len, rows * alphabet);
        let lv = &self.vals[logits.id];
        let mut loss = F::zero();
        for (r, &y) in labels.iter().enumerate() {
            let row = &lv[r * alphabet..(r + 1) * alphabet];
            let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut z = F::zero();
            for &x in row {
                z += (x - mx).exp();
            }
            loss += z.ln() + mx - row[y];
        }
        loss = loss / F::of(rows as f64);
        let out = self.push_val(vec![loss]);
        let li = logits.id;
        let lab = Arc::clone(&labels);
        self.push_node(
            out,
            "cross_entropy",
            Box::new(move |v, g, sink| {
                let lv = &v[li];
                let gl = sink.buf(li);
                let inv = g[0] / F::of(lab.len() as f64);
                for (r, &y) in lab.iter().enumerate() {
                    let row = &lv[r * alphabet..(r + 1) * alphabet];
                    let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
                    let mut z = F::zero();
                    for &x in row {
                        z += (x - mx).exp();
                    }
                    for j in 0..alphabet {
                        let p = (row[j] - mx).exp() / z;
                        let onehot = if j == y { F::one() } else { F::zero() };
                        gl[r * alphabet + j] += inv * (p - onehot);
                    }
                }
            }),
        );
        out
    }

    /// Mean elementwise Huber between the pairwise vector maps of `pred`
    /// and a constant target (ordered pairs i != j, 3 components each).
    pub fn huber_vector_map(&mut self, pred: Var, target: Arc<Vec<f64>>, delta: f64) -> Var {
        let n = pred.len / 3;
        debug_assert_eq!(pred.len, target.len());
        assert!(n >= 2, "vector map needs at least two points");
        let count = F::of((n * (n - 1) * 3) as f64);
        let d = F::of(delta);
        let pv = &self.vals[pred.id];
        let mut loss = F::zero();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for c in 0..3 {
                    let vp = pv[i * 3 + c] - pv[j * 3 + c];
                    let vt = F::of(target[i * 3 + c] - target[j * 3 + c]);
                    let e = vp - vt;
                    let a = e.abs();
                    loss += if a <= d { e * e * F::of(0.5) } else { d * (a - d * F::of(0.5)) };
                }
            }
        }
        loss = loss / count;
        let out = self.push_val(vec![loss]);
        let pi = pred.id;
        let tgt = Arc::clone(&target);
        self.push_node(
            out,
            "huber_vector_map",
            Box::new(move |v, g, sink| {
                let pv = &v[pi];
                let gp = sink.buf(pi);
                let inv = g[0] / count;
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        for c in 0..3 {
                            let vp = pv[i * 3 + c] - pv[j * 3 + c];
                            let vt = F::of(tgt[i * 3 + c] - tgt[j * 3 + c]);
                            let e = (vp - vt).max(-d).min(d);
                            gp[i * 3 + c] += inv * e;
                            gp[j * 3 + c] -= inv * e;
                        }
                    }
                }
            }),
        );
        out
    }

    /// Mean squared deviation of bonded distances from ideal lengths.
    pub fn bond_term(&mut self, points: Var, bonds: Arc<Vec<(usize, usize, f64)>>) -> Var {
        if bonds.is_empty() {
            return self.input(vec![F::zero()]);
        }
        let pv = &self.vals[points.id];
        let inv_n = F::of(1.0 / bonds.len() as f64);
        let mut loss = F::zero();
        for &(i, j, ideal) in bonds.iter() {
            let mut d2 = F::zero();
            for c in 0..3 {
                let e = pv[i * 3 + c] - pv[j * 3 + c];
                d2 += e * e;
            }
            let dev = d2.sqrt() - F::of(ideal);
            loss += dev * dev;
        }
        loss = loss * inv_n;
        let out = self.push_val(vec![loss]);
        let pi = points.id;
        let bs = Arc::clone(&bonds);
        self.push_node(
            out,
            "bond_term",
            Box::new(move |v, g, sink| {
                let pv = &v[pi];
                let gp = sink.buf(pi);
                for &(i, j, ideal) in bs.iter() {
                    let mut d2 = F::zero();
                    for c in 0..3 {
                        let e = pv[i * 3 + c] - pv[j * 3 + c];
                        d2 += e * e;
                    }
                    let dist = d2.sqrt().max(F::of(1e-9));
                    let coef = g[0] * inv_n * F::of(2.0) * (dist - F::of(ideal)) / dist;
                    for c in 0..3 {
                        let e = pv[i * 3 + c] - pv[j * 3 + c];
                        gp[i * 3 + c] += coef * e;
                        gp[j * 3 + c] -= coef * e;
                    }
                }
            }),
        );
        out
    }

    /// Clash penalty: sum over listed pairs of max(0, tau*(ri+rj) - d)^2.
    pub fn clash_term(&mut self, points: Var, pairs: Arc<Vec<(usize, usize, f64)>>, tau: f64) -> Var {
        let pv = &self.vals[points.id];
        let t = F::of(tau);
        let mut loss = F::zero();
        for &(i, j, sumr) in pairs.iter() {
            let mut d2 = F::zero();
            for c in 0..3 {
                let e = pv[i * 3 + c] - pv[j * 3 + c];
                d2 += e * e;
            }
            let overlap = t * F::of(sumr) - d2.sqrt();
            if overlap > F::zero() {
                loss += overlap * overlap;
            }
        }
        let out = self.push_val(vec![loss]);
        let pi = points.id;
        let ps = Arc::clone(&pairs);
        self.push_node(
            out,
            "clash_term",
            Box::new(move |v, g, sink| {
                let pv = &v[pi];
                let gp = sink.buf(pi);
                for &(i, j, sumr) in ps.iter() {
                    let mut d2 = F::zero();
                    for c in 0..3 {
                        let e = pv[i * 3 + c] - pv[j * 3 + c];
                        d2 += e * e;
                    }
                    let dist = d2.sqrt().max(F::of(1e-9));
                    let overlap = t * F::of(sumr) - dist;
                    if overlap > F::zero() {
                        let coef = g[0] * F::of(-2.0) * overlap / dist;
                        for c in 0..3 {
                            let e = pv[i * 3 + c] - pv[j * 3 + c];
                            gp[i * 3 + c] += coef * e;
                            gp[j * 3 + c] -= coef * e;
                        }
                    }
                }
            }),
        );
        out
    }

    /// Latent regularization of one d x n block: sum_c relu(1 - |row_c|)
    /// plus sum over unordered channel pairs of inner products.
    pub fn latent_reg_block(&mut self, block: Var, d: usize, n: usize) -> Var {
        debug_assert_eq!(block.len, d * n);
        let bv = &self.vals[block.id];
        let mut loss = F::zero();
        for c in 0..d {
            let mut ns = F::zero();
            for m in 0..n {
                ns += bv[c * n + m] * bv[c * n + m];
            }
            let norm = ns.sqrt();
            if norm < F::one() {
                loss += F::one() - norm;
            }
            for c2 in (c + 1)..d {
                for m in 0..n {
                    loss += bv[c * n + m] * bv[c2 * n + m];
                }
            }
        }
        let out = self.push_val(vec![loss]);
        let bi = block.id;
        self.push_node(
            out,
            "latent_reg_block",
            Box::new(move |v, g, sink| {
                let bv = &v[bi];
                let gb = sink.buf(bi);
                for c in 0..d {
                    let mut ns = F::zero();
                    for m in 0..n {
                        ns += bv[c * n + m] * bv[c * n + m];
                    }
                    let norm = ns.sqrt();
                    if norm < F::one() && norm.as_f64() > 1e-12 {
                        for m in 0..n {
                            gb[c * n + m] -= g[0] * bv[c * n + m] / norm;
                        }
                    }
                    for c2 in 0..d {
                        if c2 == c {
                            continue;
                        }
                        // Each unordered pair contributes once; adjoint hits
                        // both rows symmetrically.
                        for m in 0..n {
                            gb[c * n + m] += g[0] * bv[c2 * n + m] * F::of(0.5);
                        }
                    }
                }
            }),
        );
        out
    }
}

fn sh_eval<F: Real>(l: usize, x: F, y: F, z: F) -> Vec<F> {
    let s3 = F::of(3.0f64.sqrt());
    let s15 = F::of(15.0f64.sqrt());
    let half = F::of(0.5);
    match l {
        0 => vec![F::one()],
        1 => vec![x, y, z],
        2 => vec![
            s3 * x * y,
            s3 * y * z,
            half * (F::of(3.0) * z * z - F::one()),
            s3 * x * z,
            half * s3 * (x * x - y * y),
        ],
        3 => {
            let c33 = F::of((5.0f64 / 8.0).sqrt());
            let c31 = F::of((3.0f64 / 8.0).sqrt());
            vec![
                c33 * y * (F::of(3.0) * x * x - y * y),
                s15 * x * y * z,
                c31 * y * (F::of(5.0) * z * z - F::one()),
                half * z * (F::of(5.0) * z * z - F::of(3.0)),
                c31 * x * (F::of(5.0) * z * z - F::one()),
                half * s15 * z * (x * x - y * y),
                c33 * x * (x * x - F::of(3.0) * y * y),
            ]
        }
        _ => panic!("sh degree {l} unsupported"),
    }
}

fn sh_jacobian<F: Real>(l: usize, x: F, y: F, z: F) -> Vec<F> {
    let zero = F::zero();
    let s3 = F::of(3.0f64.sqrt());
    let s15 = F::of(15.0f64.sqrt());
    match l {
        0 => vec![zero, zero, zero],
        1 => vec![
            F::one(),
            zero,
            zero,
            zero,
            F::one(),
            zero,
            zero,
            zero,
            F::one(),
        ],
        2 => vec![
            s3 * y, s3 * x, zero,
            zero, s3 * z, s3 * y,
            zero, zero, F::of(3.0) * z,
            s3 * z, zero, s3 * x,
            s3 * x, -(s3 * y), zero,
        ],
        3 => {
            let c33 = F::of((5.0f64 / 8.0).sqrt());
            let c31 = F::of((3.0f64 / 8.0).sqrt());
            let six = F::of(6.0);
            let three = F::of(3.0);
            let five = F::of(5.0);
            let ten = F::of(10.0);
            let half = F::of(0.5);
            vec![
                six * c33 * x * y, c33 * (three * x * x - three * y * y), zero,
                s15 * y * z, s15 * x * z, s15 * x * y,
                zero, c31 * (five * z * z - F::one()), ten * c31 * y * z,
                zero, zero, half * (F::of(15.0) * z * z - three),
                c31 * (five * z * z - F::one()), zero, ten * c31 * x * z,
                s15 * x * z, -(s15 * y * z), half * s15 * (x * x - y * y),
                c33 * (three * x * x - three * y * y), -(six * c33 * x * y), zero,
            ]
        }
        _ => panic!("sh degree {l} unsupported"),
    }
}

/// Unpack the 5 coefficients to the traceless symmetric matrix and return
/// its leading eigenpair (used by the pair decoder).
fn unpack_traceless(q: &[f64]) -> [[f64; 3]; 3] {
    let s3 = 3.0f64.sqrt();
    let t_xy = q[0] / s3;
    let t_yz = q[1] / s3;
    let t_xz = q[3] / s3;
    let t_zz = 2.0 * q[2] / 3.0;
    let t_xx = -q[2] / 3.0 + q[4] / s3;
    let t_yy = -q[2] / 3.0 - q[4] / s3;
    [[t_xx, t_xy, t_xz], [t_xy, t_yy, t_yz], [t_xz, t_yz, t_zz]]
}

fn leading_eig(q: &[f64]) -> (f64, [[f64; 3]; 3]) {
    let (vals, vecs) = leading_eig_full(q);
    (vals[0], vecs)
}

fn leading_eig_full(q: &[f64]) -> ([f64; 3], [[f64; 3]; 3]) {
    let t = unpack_traceless(q);
    let (vals, mut vecs) = eigh3(&t);
    // Deterministic sign: first nonzero component of the leading vector
    // positive.
    let v1 = vecs[0];
    for &comp in v1.iter() {
        if comp.abs() > 1e-8 {
            if comp < 0.0 {
                for x in vecs[0].iter_mut() {
                    *x = -*x;
                }
            }
            break;
        }
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graddiff::params::ParameterStore;

    #[test]
    fn sum_of_squares_gradient() {
        // loss = sum x^2 at x = (1, 2) -> gradient (2, 4)
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.insert("x", vec![2], vec![1.0, 2.0], "test");
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.param(&store, "x");
        let sq = tape.mul(x, x);
        let loss = tape.sum(sq);
        tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&mut store);
        assert_eq!(store.entry(0).grad, vec![2.0, 4.0]);
        assert_eq!(tape.scalar(loss), 5.0);
    }

    #[test]
    fn constant_program_zero_gradient() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.insert("x", vec![2], vec![1.0, 2.0], "test");
        let mut tape: Tape<f64> = Tape::new();
        let _x = tape.param(&store, "x");
        let c = tape.input(vec![3.0]);
        let loss = tape.scale(c, 2.0);
        tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&mut store);
        assert_eq!(store.entry(0).grad, vec![0.0, 0.0]);
    }

    #[test]
    fn weight_sharing_accumulates() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.insert("w", vec![1], vec![3.0], "test");
        let mut tape: Tape<f64> = Tape::new();
        let w1 = tape.param(&store, "w");
        let w2 = tape.param(&store, "w");
        assert_eq!(w1, w2);
        let p = tape.mul(w1, w2); // w^2
        let loss = tape.sum(p);
        tape.backward(loss).unwrap();
        tape.accumulate_param_grads(&mut store);
        assert_eq!(store.entry(0).grad, vec![6.0]); // d(w^2)/dw = 2w
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.input(vec![-1.0]);
        let s = tape.sqrt_eps(x, 0.0); // sqrt(-1) = NaN
        let loss = tape.sum(s);
        let err = tape.backward(loss).unwrap_err();
        assert_eq!(err.category(), "non-finite");
        assert!(err.to_string().contains("sqrt_eps"));
    }

    #[test]
    fn softmax_sums_to_one_and_grads_balance() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.input(vec![0.3, -1.0, 2.0]);
        let y = tape.softmax(x);
        let total: f64 = tape.value(y).iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // d(sum softmax)/dx = 0
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        for g in tape.grad(x) {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln20() {
        let mut tape: Tape<f64> = Tape::new();
        let logits = tape.input(vec![0.0; 40]);
        let labels = Arc::new(vec![3usize, 17]);
        let ce = tape.cross_entropy(logits, labels, 20);
        assert!((tape.scalar(ce) - (20.0f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn huber_vector_map_translation_invariant() {
        let mut tape: Tape<f64> = Tape::new();
        let target = Arc::new(vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        // Prediction = target + constant translation.
        let shifted: Vec<f64> = target
            .chunks(3)
            .flat_map(|p| [p[0] + 5.0, p[1] - 2.0, p[2] + 0.5])
            .collect();
        let pred = tape.input(shifted);
        let loss = tape.huber_vector_map(pred, target, 1.0);
        assert!(tape.scalar(loss).abs() < 1e-12);
    }

    #[test]
    fn pair_halfdiff_recovers_vector_up_to_sign() {
        // q built from a known d must decode back to +-d.
        let d = [0.7, -0.3, 0.45];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let s3 = 3.0f64.sqrt();
        let q = vec![
            s3 * d[0] * d[1],
            s3 * d[1] * d[2],
            0.5 * (3.0 * d[2] * d[2] - r2),
            s3 * d[0] * d[2],
            0.5 * s3 * (d[0] * d[0] - d[1] * d[1]),
        ];
        let mut tape: Tape<f64> = Tape::new();
        let qv = tape.input(q);
        let dv = tape.pair_halfdiff(qv);
        let got = tape.value(dv);
        let same: f64 = (0..3).map(|i| (got[i] - d[i]).powi(2)).sum::<f64>().sqrt();
        let flip: f64 = (0..3).map(|i| (got[i] + d[i]).powi(2)).sum::<f64>().sqrt();
        assert!(same.min(flip) < 1e-6, "got {got:?}");
    }
}
