use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, Network, NoiseSchedule, Params, PriorSpec, Targets};

/// Which block of the log-posterior gradient the score statistic averages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTarget {
    /// First-layer weights.
    #[default]
    W1,
    /// Second-layer weights.
    W2,
    /// First pre-activation block (needs a differentiable activation).
    Z2,
}

/// `Δ` times the mean of a gradient block.
pub fn score_from_gradient(grad: &[f64], delta: f64) -> f64 {
    if grad.is_empty() {
        return 0.0;
    }
    delta * grad.iter().sum::<f64>() / grad.len() as f64
}

/// Score statistic `U` on the intermediate-noise posterior.
///
/// For weight targets only that layer's likelihood and prior terms contribute,
/// so any activation works. `Δ` is the noise variance of the layer the block
/// feeds.
pub fn score_statistic(
    net: &Network,
    state: &ChainState,
    inputs: &DMatrix<f64>,
    noise: &NoiseSchedule,
    prior: &PriorSpec,
    target: ScoreTarget,
) -> Result<f64> {
    match target {
        ScoreTarget::W1 | ScoreTarget::W2 => {
            let k = if target == ScoreTarget::W1 { 0 } else { 1 };
            if k >= net.depth() {
                return Err(Error::InvalidConfig(format!("network has no layer {}", k + 1)));
            }
            let input = net.input_of(k, inputs, state);
            let w = &state.params.weights[k];
            let mean = net.layer_mean(k, inputs, state);
            let dz = noise.delta_z[k];
            let r = (&state.z[k] - mean) / dz;
            let g = net.op(k).backward(w, input, &r).weight - prior.lambda_w[k] * w;
            Ok(score_from_gradient(g.as_slice(), dz))
        }
        ScoreTarget::Z2 => {
            let (_, grad) = net.intermediate_log_posterior(state, inputs, noise, prior)?;
            Ok(score_from_gradient(grad.z[0].as_slice(), noise.delta_z[0]))
        }
    }
}

/// Score statistic on the loss-based posterior; `Z2` has no meaning there.
pub fn classical_score(
    net: &Network,
    params: &Params,
    inputs: &DMatrix<f64>,
    targets: &Targets,
    delta: f64,
    prior: &PriorSpec,
    target: ScoreTarget,
) -> Result<f64> {
    let k = match target {
        ScoreTarget::W1 => 0,
        ScoreTarget::W2 => 1,
        ScoreTarget::Z2 => {
            return Err(Error::InvalidConfig(
                "the classical posterior has no pre-activation variables".into(),
            ))
        }
    };
    if k >= net.depth() {
        return Err(Error::InvalidConfig(format!("network has no layer {}", k + 1)));
    }
    let (_, grad) = net.classical_log_posterior(params, inputs, targets, delta, prior)?;
    Ok(score_from_gradient(grad.weights[k].as_slice(), delta))
}
