//! Training loops for the autoencoder and the latent denoiser, shared by
//! the CLI and the verification suites. Batch elements run on worker
//! threads with a deterministic, ordered gradient merge; one step is a
//! single-writer update of the parameter store.

use crate::diffusion::{diffusion_loss, DenoiserParams, LossTarget, NoiseSchedule};
use crate::error::{Error, Result};
use crate::graddiff::adam::{OptimizerConfig, OptimizerState};
use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use crate::graddiff::tape::Tape;
use crate::irreps::IrrepTensor;
use crate::layers::blocks::CgCtx;
use crate::layers::codec::NodeState;
use crate::layers::model::{decode_atoms, fragment_states, HourglassModel};
use crate::losses::{report_from_tape, total_loss_tape, LossPlan, LossReport, LossWeights};
use crate::protein_io::types::ProteinFragment;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Worker threads for batch elements; 0 = from HOURGLASS_THREADS or
    /// the machine parallelism.
    pub threads: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 10,
            batch_size: 10,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            threads: 0,
            checkpoint_every: 0,
        }
    }
}

/// Thread count: explicit setting, then the environment variable
/// `HOURGLASS_THREADS`, then available parallelism, capped by job count.
pub fn thread_count(requested: usize, jobs: usize) -> usize {
    let env = std::env::var("HOURGLASS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    let base = if requested > 0 {
        requested
    } else if let Some(n) = env {
        n.max(1)
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    };
    base.clamp(1, jobs.max(1))
}

/// Precomputed per-fragment training inputs.
pub struct FragmentBatch {
    pub fragments: Vec<ProteinFragment>,
    pub states: Vec<Vec<NodeState>>,
    pub plans: Vec<LossPlan>,
}

impl FragmentBatch {
    pub fn prepare(model: &HourglassModel, fragments: Vec<ProteinFragment>) -> Result<FragmentBatch> {
        let mut states = Vec::with_capacity(fragments.len());
        let mut plans = Vec::with_capacity(fragments.len());
        for f in &fragments {
            model.config.level_lengths(f.len())?;
            states.push(fragment_states(&model.layout, f)?);
            plans.push(LossPlan::new(f, &model.layout, true));
        }
        Ok(FragmentBatch { fragments, states, plans })
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }
}

/// Forward/backward for one fragment; returns parameter gradients and the
/// loss report.
fn fragment_step<F: Real>(
    model: &HourglassModel,
    store: &ParameterStore<F>,
    ctx: &CgCtx<F>,
    states: &[NodeState],
    plan: &LossPlan,
    weights: &LossWeights,
) -> Result<(Vec<(usize, Vec<F>)>, LossReport)> {
    let mut tape: Tape<F> = Tape::new();
    let (latent, tracker) = model.encode(&mut tape, store, ctx, states)?;
    let trunk = model.decode(&mut tape, store, ctx, &latent, &tracker)?;
    let codec_nodes = model.project_out(&mut tape, store, &trunk);
    let labels: Vec<_> = plan.residues.iter().map(|r| r.label).collect();
    let decoded = decode_atoms(&mut tape, &model.layout, &codec_nodes, Some(&labels));
    let latent_arg = if weights.latent_reg > 0.0 { Some(&latent[..]) } else { None };
    let vars = total_loss_tape(&mut tape, plan, weights, &decoded, latent_arg);
    tape.backward(vars.total)?;
    let report = report_from_tape(&tape, &vars);
    Ok((tape.param_grads(), report))
}

fn mean_report(reports: &[LossReport]) -> LossReport {
    let n = reports.len().max(1) as f64;
    let mut out = LossReport {
        vector_map: 0.0,
        cross_entropy: 0.0,
        bond: 0.0,
        angle: 0.0,
        dihedral: 0.0,
        clash: 0.0,
        latent_reg: 0.0,
        total: 0.0,
        flips: Vec::new(),
    };
    for r in reports {
        out.vector_map += r.vector_map / n;
        out.cross_entropy += r.cross_entropy / n;
        out.bond += r.bond / n;
        out.angle += r.angle / n;
        out.dihedral += r.dihedral / n;
        out.clash += r.clash / n;
        out.latent_reg += r.latent_reg / n;
        out.total += r.total / n;
    }
    out
}

/// One optimizer step over a minibatch (mean gradient across elements).
pub fn autoencoder_step<F: Real>(
    model: &HourglassModel,
    store: &mut ParameterStore<F>,
    opt: &mut OptimizerState<F>,
    batch: &FragmentBatch,
    indices: &[usize],
    weights: &LossWeights,
    threads: usize,
) -> Result<LossReport> {
    store.zero_grads();
    let n_threads = thread_count(threads, indices.len());
    let results: Vec<Result<(Vec<(usize, Vec<F>)>, LossReport)>> = if n_threads <= 1 {
        let ctx: CgCtx<F> = CgCtx::new(model.config.l_max);
        indices
            .iter()
            .map(|&i| fragment_step(model, store, &ctx, &batch.states[i], &batch.plans[i], weights))
            .collect()
    } else {
        std::thread::scope(|scope| {
            let chunks: Vec<Vec<usize>> = (0..n_threads)
                .map(|w| {
                    indices
                        .iter()
                        .copied()
                        .enumerate()
                        .filter(|(pos, _)| pos % n_threads == w)
                        .map(|(_, i)| i)
                        .collect()
                })
                .collect();
            let store_ref: &ParameterStore<F> = store;
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        let ctx: CgCtx<F> = CgCtx::new(model.config.l_max);
                        chunk
                            .into_iter()
                            .map(|i| {
                                (
                                    i,
                                    fragment_step(
                                        model,
                                        store_ref,
                                        &ctx,
                                        &batch.states[i],
                                        &batch.plans[i],
                                        weights,
                                    ),
                                )
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            let mut collected: Vec<(usize, Result<_>)> = handles
                .into_iter()
                .flat_map(|h| h.join().expect("training worker panicked"))
                .collect();
            // Deterministic merge order regardless of thread scheduling.
            collected.sort_by_key(|(i, _)| *i);
            collected.into_iter().map(|(_, r)| r).collect()
        })
    };
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (grads, report) = r?;
        for (idx, g) in grads {
            store.add_grad(idx, &g);
        }
        reports.push(report);
    }
    store.scale_grads(1.0 / indices.len() as f64);
    opt.step(store)?;
    Ok(mean_report(&reports))
}

/// Epoch-based autoencoder training with deterministic shuffling.
/// `on_epoch(epoch, report, store)` fires after every epoch.
pub fn train_autoencoder<F: Real>(
    model: &HourglassModel,
    store: &mut ParameterStore<F>,
    opt: &mut OptimizerState<F>,
    batch: &FragmentBatch,
    weights: &LossWeights,
    settings: &TrainSettings,
    start_epoch: usize,
    mut on_epoch: impl FnMut(usize, &LossReport, &ParameterStore<F>, &OptimizerState<F>) -> Result<()>,
) -> Result<Vec<LossReport>> {
    if batch.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut history = Vec::new();
    for epoch in start_epoch..settings.epochs {
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(settings.seed ^ (epoch as u64).wrapping_mul(0x9e3779b9));
        order.shuffle(&mut rng);
        let mut reports = Vec::new();
        for chunk in order.chunks(settings.batch_size.max(1)) {
            reports.push(autoencoder_step(
                model,
                store,
                opt,
                batch,
                chunk,
                weights,
                settings.threads,
            )?);
        }
        let epoch_report = mean_report(&reports);
        on_epoch(epoch, &epoch_report, store, opt)?;
        history.push(epoch_report);
    }
    Ok(history)
}

/// Denoiser training: batched Monte-Carlo steps of the diffusion loss.
#[allow(clippy::too_many_arguments)]
pub fn train_denoiser<F: Real>(
    denoiser: &DenoiserParams,
    store: &mut ParameterStore<F>,
    opt: &mut OptimizerState<F>,
    latents: &[IrrepTensor],
    schedule: &NoiseSchedule,
    target: LossTarget,
    steps: usize,
    batch_draws: usize,
    seed: u64,
    mut on_step: impl FnMut(usize, f64) -> Result<()>,
) -> Result<Vec<f64>> {
    if latents.is_empty() {
        return Err(Error::Config("no latents to train on".into()));
    }
    let ctx: CgCtx<F> = CgCtx::new(denoiser.signature.max_degree());
    let mut history = Vec::with_capacity(steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for step in 0..steps {
        store.zero_grads();
        let mut tape: Tape<F> = Tape::new();
        let batch: Vec<&IrrepTensor> = (0..batch_draws)
            .map(|k| &latents[(step * batch_draws + k) % latents.len()])
            .collect();
        let loss = diffusion_loss(
            &mut tape, denoiser, store, &ctx, &batch, schedule, &mut rng, target,
        );
        tape.backward(loss)?;
        tape.accumulate_param_grads(store);
        opt.step(store)?;
        let value = tape.scalar(loss).as_f64();
        on_step(step, value)?;
        history.push(value);
    }
    Ok(history)
}
