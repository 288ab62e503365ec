//! The latent denoiser: a stack of self-interaction layers with full
//! (unchunked) tensor squares, conditioned on the log-SNR through a
//! sinusoidal embedding concatenated to the scalar block before each gate
//! MLP. Input and output signatures match the autoencoder bottleneck.

use crate::error::{Error, Result};
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::{Tape, Var};
use crate::irreps::IrrepsSignature;
use crate::layers::blocks::{CgCtx, IrrepVar};
use crate::layers::self_interaction::SelfInteractionParams;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub time_embed_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig { layers: 7, time_embed_dim: 16 }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("denoiser needs at least one layer".into()));
        }
        if self.time_embed_dim % 2 != 0 || self.time_embed_dim == 0 {
            return Err(Error::Config("time embedding width must be even".into()));
        }
        Ok(())
    }
}

pub struct DenoiserParams {
    pub config: DenoiserConfig,
    pub signature: IrrepsSignature,
    layers: Vec<SelfInteractionParams>,
}

impl DenoiserParams {
    pub fn register<F: Real, R: Rng>(
        store: &mut ParameterStore<F>,
        rng: &mut R,
        config: DenoiserConfig,
        signature: IrrepsSignature,
    ) -> Result<DenoiserParams> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|i| {
                SelfInteractionParams::register(
                    store,
                    rng,
                    &format!("dn{i}"),
                    signature.clone(),
                    0, // full tensor square
                    config.time_embed_dim,
                    crate::layers::model::NORM_EPS,
                )
            })
            .collect();
        Ok(DenoiserParams { config, signature, layers })
    }

    /// Sinusoidal embedding of the log-SNR, log-spaced periods in [2, 200].
    pub fn time_embedding(&self, lambda: f64) -> Vec<f64> {
        let half = self.config.time_embed_dim / 2;
        let mut out = Vec::with_capacity(2 * half);
        for k in 0..half {
            let frac = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            let period = 2.0 * (100.0f64).powf(frac);
            let w = 2.0 * std::f64::consts::PI / period;
            out.push((lambda * w).sin());
            out.push((lambda * w).cos());
        }
        out
    }

    pub fn forward<F: Real>(
        &self,
        tape: &mut Tape<F>,
        store: &ParameterStore<F>,
        ctx: &CgCtx<F>,
        z_t: &IrrepVar,
        lambda: f64,
    ) -> IrrepVar {
        debug_assert_eq!(z_t.sig, self.signature);
        let embed: Var = tape.input_f64(&self.time_embedding(lambda));
        let mut h = z_t.clone();
        for layer in &self.layers {
            h = layer.forward_features(tape, store, ctx, &h, Some(embed));
        }
        h
    }
}
