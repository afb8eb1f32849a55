use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::harness::config::Initialization;
use crate::model::{argmax_row, ChainState, Dataset, Network, NoiseMode, NoiseSchedule, Params, PriorSpec, Targets};

/// Starting state for one chain.
///
/// Probit outputs are always left consistent with the training labels: when
/// a random or Gaussian start breaks the argmax constraint for a sample, its
/// label score is raised just above the largest competing score.
pub fn initialize_chain<R: Rng + ?Sized>(
    kind: Initialization,
    dataset: &Dataset,
    net: &Network,
    noise: &NoiseSchedule,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<ChainState> {
    let spec = net.spec();
    let n = dataset.n();
    let targets = &dataset.train.targets;
    let mut state = match kind {
        Initialization::Informed => dataset.teacher.clone().ok_or(Error::MissingTeacher)?,
        Initialization::Zero => ChainState::zeros(spec, n, targets)?,
        Initialization::Random => {
            let params = Params::sample_prior(spec, prior, rng);
            let (state, _) = net.generate(noise, &params, &dataset.train.inputs, NoiseMode::Enabled, rng)?;
            state
        }
        Initialization::Gaussian { scale } => {
            let mut state = ChainState::zeros(spec, n, targets)?;
            let mut draw = || scale * rng.sample::<f64, _>(StandardNormal);
            for m in state.params.weights.iter_mut() {
                m.apply(|v| *v = draw());
            }
            for (k, b) in state.params.biases.iter_mut().enumerate() {
                if spec.has_bias(k) {
                    b.apply(|v| *v = draw());
                }
            }
            let free_z = if net.output_clamped() {
                net.depth() - 1
            } else {
                net.depth()
            };
            for m in state.x.iter_mut().chain(state.z[..free_z].iter_mut()) {
                m.apply(|v| *v = draw());
            }
            state
        }
    };
    match targets {
        Targets::Regression(y) if net.output_clamped() => {
            let last = net.depth() - 1;
            state.z[last] = y.clone();
        }
        Targets::Classes(labels) => {
            let margin = noise.output_delta().sqrt().min(1.0);
            repair_probit(state.z.last_mut().expect("non-empty network"), labels, margin);
        }
        Targets::Regression(_) => {}
    }
    state.check_shapes(spec, n)?;
    Ok(state)
}

/// Raise each violating label score to `max_other + margin`.
pub fn repair_probit(z: &mut DMatrix<f64>, labels: &[usize], margin: f64) {
    for (mu, &y) in labels.iter().enumerate() {
        let best_other = (0..z.ncols())
            .filter(|&c| c != y)
            .map(|c| z[(mu, c)])
            .fold(f64::NEG_INFINITY, f64::max);
        if argmax_row(z, mu) != y || z[(mu, y)] <= best_other {
            z[(mu, y)] = best_other + margin;
        }
    }
}
