//! Small dense MLP used for gates, window weights and radial embeddings:
//! an affine chain with smooth gated-linear (SiLU) activations and no
//! activation on the final layer.

use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub name: String,
    /// Layer widths including input and output, e.g. [16, 32, 8].
    pub dims: Vec<usize>,
}

impl MlpSpec {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        name: &str,
        dims: Vec<usize>,
    ) -> MlpSpec {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        for i in 0..dims.len() - 1 {
            let (d_in, d_out) = (dims[i], dims[i + 1]);
            store.insert_normal(&format!("{name}.w{i}"), vec![d_out, d_in], d_in, 1.0, rng);
            store.insert_const(&format!("{name}.b{i}"), vec![d_out], 0.0);
        }
        MlpSpec { name: name.to_string(), dims }
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParameterStore<F>, x: Var) -> Var {
        assert_eq!(x.len, self.dims[0], "mlp {} input width", self.name);
        let mut h = x;
        for i in 0..self.dims.len() - 1 {
            let (d_in, d_out) = (self.dims[i], self.dims[i + 1]);
            let w = tape.param(store, &format!("{}.w{i}", self.name));
            let b = tape.param(store, &format!("{}.b{i}", self.name));
            let wx = tape.matmul(w, h, d_out, d_in, 1);
            h = tape.add(wx, b);
            if i + 2 < self.dims.len() {
                h = tape.silu(h);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn zero_weights_yield_bias() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let mut rng = StdRng::seed_from_u64(1);
        let spec = MlpSpec::register(&mut store, &mut rng, "m", vec![3, 2]);
        store.values_mut("m.w0").iter_mut().for_each(|w| *w = 0.0);
        store.values_mut("m.b0").copy_from_slice(&[0.25, -0.5]);
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.input(vec![1.0, 2.0, 3.0]);
        let y = spec.forward(&mut tape, &store, x);
        assert_eq!(tape.value(y), &[0.25, -0.5]);
    }

    #[test]
    fn identity_single_layer_returns_input() {
        let mut store: ParameterStore<f64> = ParameterStore::new();
        let mut rng = StdRng::seed_from_u64(2);
        let spec = MlpSpec::register(&mut store, &mut rng, "m", vec![3, 3]);
        let w = store.values_mut("m.w0");
        w.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.input(vec![0.5, -1.5, 2.0]);
        let y = spec.forward(&mut tape, &store, x);
        assert_eq!(tape.value(y), &[0.5, -1.5, 2.0]);
    }
}
