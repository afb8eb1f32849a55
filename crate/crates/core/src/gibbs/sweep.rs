use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::conditionals::{update_bias_layer, update_w_layer, update_x_layer};
use crate::gibbs::probit::update_probit_output;
use crate::gibbs::zsample::{update_z_layer, update_z_layer_linear};
use crate::model::{Activation, ChainState, Network, NoiseSchedule, OutputModel, PriorSpec};
use crate::rng::{stream_key, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SweepSchedule {
    /// Layer by layer: first-layer weights, then `X`, `W`, `Z` for each
    /// hidden layer, then the probit scores.
    Sequential,
    /// All `X` blocks, then all `W` (with biases), then all `Z`; the layers
    /// within a phase are independent and run concurrently.
    PhaseParallel { workers: usize },
}

const PHASE_X: u32 = 0;
const PHASE_W: u32 = 1;
const PHASE_Z: u32 = 2;

/// A sampler that advances a [`ChainState`] by whole Gibbs sweeps.
pub trait GibbsSweep: Send {
    fn network(&self) -> &Network;
    fn sweep(&mut self, state: &mut ChainState) -> Result<()>;
}

/// Everything a conditional update reads besides the chain state.
struct Context {
    net: Network,
    noise: NoiseSchedule,
    prior: PriorSpec,
    inputs: DMatrix<f64>,
    labels: Option<Vec<usize>>,
    input_gram: DMatrix<f64>,
}

/// Blocked Gibbs sampler for a fully connected intermediate-noise network.
///
/// Each (phase, layer) pair owns its own random stream, so a sweep's draws do
/// not depend on how work is spread across threads.
pub struct MlpGibbs {
    ctx: Context,
    schedule: SweepSchedule,
    x_streams: Vec<RngStream>,
    w_streams: Vec<RngStream>,
    z_streams: Vec<RngStream>,
    pool: Option<rayon::ThreadPool>,
}

impl MlpGibbs {
    pub fn new(
        net: Network,
        noise: NoiseSchedule,
        prior: PriorSpec,
        schedule: SweepSchedule,
        inputs: DMatrix<f64>,
        labels: Option<Vec<usize>>,
        seed: u64,
    ) -> Result<Self> {
        let spec = net.spec();
        spec.dense_widths()?;
        noise.validate(spec)?;
        prior.validate(spec.depth())?;
        if inputs.ncols() != spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "inputs have {} columns, network expects {}",
                inputs.ncols(),
                spec.input_width()
            )));
        }
        if let OutputModel::MultinomialProbit { .. } = spec.output {
            match &labels {
                None => return Err(Error::InvalidConfig("probit output needs class labels".into())),
                Some(l) if l.len() != inputs.nrows() => {
                    return Err(Error::ShapeMismatch(format!(
                        "{} labels for {} inputs",
                        l.len(),
                        inputs.nrows()
                    )))
                }
                _ => {}
            }
        }
        let depth = spec.depth() as u32;
        let streams = |phase, count| (0..count).map(|k| RngStream::new(seed, stream_key(phase, k))).collect();
        let pool = match schedule {
            SweepSchedule::Sequential => None,
            SweepSchedule::PhaseParallel { workers } => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers.max(1))
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?,
            ),
        };
        Ok(Self {
            x_streams: streams(PHASE_X, depth - 1),
            w_streams: streams(PHASE_W, depth),
            z_streams: streams(PHASE_Z, depth),
            schedule,
            pool,
            ctx: Context {
                input_gram: inputs.tr_mul(&inputs),
                net,
                noise,
                prior,
                inputs,
                labels,
            },
        })
    }

    pub fn network(&self) -> &Network {
        &self.ctx.net
    }

    pub fn noise(&self) -> &NoiseSchedule {
        &self.ctx.noise
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.ctx.prior
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.ctx.inputs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.ctx.labels.as_deref()
    }

    pub fn schedule(&self) -> SweepSchedule {
        self.schedule
    }

    fn sweep_sequential(&mut self, state: &mut ChainState) -> Result<()> {
        let ctx = &self.ctx;
        let depth = ctx.net.depth();
        let (w, b) = draw_w(ctx, 0, state, &mut self.w_streams[0])?;
        set_w(state, 0, w, b);
        for h in 1..depth {
            state.x[h - 1] = draw_x(ctx, h - 1, state, &mut self.x_streams[h - 1])?;
            let (w, b) = draw_w(ctx, h, state, &mut self.w_streams[h])?;
            set_w(state, h, w, b);
            state.z[h - 1] = draw_z(ctx, h - 1, state, &mut self.z_streams[h - 1])?;
        }
        if let Some(z) = draw_output(ctx, state, &mut self.z_streams[depth - 1])? {
            state.z[depth - 1] = z;
        }
        Ok(())
    }

    fn sweep_parallel(&mut self, state: &mut ChainState) -> Result<()> {
        let ctx = &self.ctx;
        let depth = ctx.net.depth();
        let pool = self.pool.as_ref().expect("parallel schedule owns a pool");
        let shared: &ChainState = state;
        let xs: Vec<DMatrix<f64>> = pool.install(|| {
            self.x_streams
                .par_iter_mut()
                .enumerate()
                .map(|(slot, rng)| draw_x(ctx, slot, shared, rng))
                .collect::<Result<_>>()
        })?;
        state.x = xs;

        let shared: &ChainState = state;
        let ws: Vec<_> = pool.install(|| {
            self.w_streams
                .par_iter_mut()
                .enumerate()
                .map(|(k, rng)| draw_w(ctx, k, shared, rng))
                .collect::<Result<_>>()
        })?;
        for (k, (w, b)) in ws.into_iter().enumerate() {
            set_w(state, k, w, b);
        }

        let shared: &ChainState = state;
        let zs: Vec<Option<DMatrix<f64>>> = pool.install(|| {
            self.z_streams
                .par_iter_mut()
                .enumerate()
                .map(|(k, rng)| {
                    if k + 1 < depth {
                        draw_z(ctx, k, shared, rng).map(Some)
                    } else {
                        draw_output(ctx, shared, rng)
                    }
                })
                .collect::<Result<_>>()
        })?;
        for (k, z) in zs.into_iter().enumerate() {
            if let Some(z) = z {
                state.z[k] = z;
            }
        }
        Ok(())
    }
}

impl GibbsSweep for MlpGibbs {
    fn network(&self) -> &Network {
        &self.ctx.net
    }

    fn sweep(&mut self, state: &mut ChainState) -> Result<()> {
        match self.schedule {
            SweepSchedule::Sequential => self.sweep_sequential(state),
            SweepSchedule::PhaseParallel { .. } => self.sweep_parallel(state),
        }
    }
}

fn set_w(state: &mut ChainState, k: usize, w: DMatrix<f64>, b: Option<DVector<f64>>) {
    state.params.weights[k] = w;
    if let Some(b) = b {
        state.params.biases[k] = b;
    }
}

/// Post-activations of hidden slot `slot`, i.e. the input of layer `slot + 1`.
fn draw_x(ctx: &Context, slot: usize, state: &ChainState, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let act = ctx.net.spec().activation;
    let sigma = state.z[slot].map(|v| act.apply(v));
    update_x_layer(
        &sigma,
        &state.params.weights[slot + 1],
        &state.params.biases[slot + 1],
        &state.z[slot + 1],
        ctx.noise.delta_x[slot],
        ctx.noise.delta_z[slot + 1],
        rng,
    )
}

/// Weights of layer `k`, followed by its bias given the new weights.
fn draw_w(
    ctx: &Context,
    k: usize,
    state: &ChainState,
    rng: &mut RngStream,
) -> Result<(DMatrix<f64>, Option<DVector<f64>>)> {
    let input = ctx.net.input_of(k, &ctx.inputs, state);
    let gram = (k == 0).then_some(&ctx.input_gram);
    let dz = ctx.noise.delta_z[k];
    let w = update_w_layer(
        input,
        gram,
        &state.z[k],
        &state.params.biases[k],
        dz,
        ctx.prior.lambda_w[k],
        rng,
    )?;
    let b = if ctx.net.spec().has_bias(k) {
        Some(update_bias_layer(
            input,
            &w,
            &state.z[k],
            dz,
            ctx.prior.lambda_b[k],
            rng,
        )?)
    } else {
        None
    };
    Ok((w, b))
}

/// Pre-activations of hidden slot `slot`, the output of layer `slot`.
fn draw_z(ctx: &Context, slot: usize, state: &ChainState, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let wx = ctx.net.layer_mean(slot, &ctx.inputs, state);
    let (dz, dx) = (ctx.noise.delta_z[slot], ctx.noise.delta_x[slot]);
    match ctx.net.spec().activation {
        Activation::Linear => update_z_layer_linear(&wx, &state.x[slot], dz, dx, rng),
        act => update_z_layer(act, &wx, &state.x[slot], dz, dx, rng),
    }
}

/// Latent class scores under probit output; `None` when the output is clamped.
fn draw_output(ctx: &Context, state: &ChainState, rng: &mut RngStream) -> Result<Option<DMatrix<f64>>> {
    let Some(labels) = ctx.labels.as_deref() else {
        return Ok(None);
    };
    if ctx.net.output_clamped() {
        return Ok(None);
    }
    let last = ctx.net.depth() - 1;
    let mean = ctx.net.layer_mean(last, &ctx.inputs, state);
    let mut z = state.z[last].clone();
    update_probit_output(&mean, &mut z, labels, ctx.noise.delta_z[last], rng)?;
    Ok(Some(z))
}
