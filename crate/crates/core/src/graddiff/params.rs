//! Named trainable arrays with gradient slots.

use crate::error::{Error, Result};
use crate::graddiff::real::Real;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct ParamEntry<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<F>,
    pub grad: Vec<F>,
    /// Initializer id recorded for the checkpoint header.
    pub init: String,
}

/// Insertion-ordered store of named parameters. Iteration order is the
/// declaration order, which also fixes the checkpoint layout.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore<F> {
    entries: Vec<ParamEntry<F>>,
    index: HashMap<String, usize>,
}

impl<F: Real> ParameterStore<F> {
    pub fn new() -> Self {
        ParameterStore { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, values: Vec<F>, init: &str) -> usize {
        assert_eq!(
            shape.iter().product::<usize>(),
            values.len(),
            "shape/value mismatch for {name}"
        );
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        let grad = vec![F::zero(); values.len()];
        let idx = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            values,
            grad,
            init: init.to_string(),
        });
        self.index.insert(name.to_string(), idx);
        idx
    }

    /// Fan-in scaled normal init: std = gain / sqrt(fan_in).
    pub fn insert_normal<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        gain: f64,
        rng: &mut R,
    ) -> usize {
        let std = gain / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                F::of(z * std)
            })
            .collect();
        self.insert(name, shape, values, &format!("normal(fan_in={fan_in},gain={gain})"))
    }

    pub fn insert_const(&mut self, name: &str, shape: Vec<usize>, value: f64) -> usize {
        let n: usize = shape.iter().product();
        self.insert(name, shape, vec![F::of(value); n], &format!("const({value})"))
    }

    pub fn idx(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.idx(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry<F> {
        &self.entries[idx]
    }

    pub fn values(&self, name: &str) -> &[F] {
        &self.entries[self.index[name]].values
    }

    pub fn values_mut(&mut self, name: &str) -> &mut [F] {
        let idx = self.index[name];
        &mut self.entries[idx].values
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.values.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<F>> {
        self.entries.iter()
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.iter_mut() {
            e.grad.iter_mut().for_each(|g| *g = F::zero());
        }
    }

    pub fn add_grad(&mut self, idx: usize, grad: &[F]) {
        let slot = &mut self.entries[idx].grad;
        debug_assert_eq!(slot.len(), grad.len());
        for (s, g) in slot.iter_mut().zip(grad) {
            *s += *g;
        }
    }

    pub fn scale_grads(&mut self, factor: f64) {
        let f = F::of(factor);
        for e in self.entries.iter_mut() {
            e.grad.iter_mut().for_each(|g| *g *= f);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|e| e.grad.iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry<F>] {
        &mut self.entries
    }

    /// Casts every value to another precision (gradients reset to zero).
    pub fn cast<G: Real>(&self) -> ParameterStore<G> {
        let mut out = ParameterStore::new();
        for e in &self.entries {
            let values: Vec<G> = e.values.iter().map(|v| G::of(v.as_f64())).collect();
            out.insert(&e.name, e.shape.clone(), values, &e.init);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_and_lookup() {
        let mut store: ParameterStore<f32> = ParameterStore::new();
        store.insert_const("b", vec![2], 0.5);
        store.insert_const("a", vec![3], 1.0);
        let names: Vec<&str> = store.iter().map(|e| e.name.as_str()).collect();
        assert_eq!(names, ["b", "a"]);
        assert_eq!(store.values("a"), &[1.0f32; 3]);
        assert!(store.require("missing").is_err());
    }

    #[test]
    fn grad_accumulation() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let idx = store.insert_const("w", vec![2], 0.0);
        store.add_grad(idx, &[1.0, 2.0]);
        store.add_grad(idx, &[0.5, 0.5]);
        assert_eq!(store.entry(idx).grad, vec![1.5, 2.5]);
        store.zero_grads();
        assert_eq!(store.entry(idx).grad, vec![0.0, 0.0]);
    }
}
