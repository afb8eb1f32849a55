//! Fixtures shared by the benchmarks.

use nngibbs_core::model::{ChainState, Network, NetworkSpec, NoiseMode, NoiseSchedule, Params, PriorSpec, Targets};
use nngibbs_core::DMatrix;
use nngibbs_core::RngStream;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A teacher-generated problem: network, noise, prior, inputs, the teacher
/// state and the targets it produced.
pub struct Problem {
    pub net: Network,
    pub noise: NoiseSchedule,
    pub prior: PriorSpec,
    pub inputs: DMatrix<f64>,
    pub teacher: ChainState,
    pub targets: Targets,
}

pub fn teacher_problem(spec: NetworkSpec, n: usize, delta: f64, seed: u64) -> Problem {
    let net = Network::new(spec).expect("valid network");
    let noise = NoiseSchedule::uniform(net.spec(), delta);
    let prior = PriorSpec::fan_in(net.spec());
    let mut rng = RngStream::new(seed, 0);
    let inputs = gaussian_matrix(n, net.spec().input_width(), &mut rng);
    let params = Params::sample_prior(net.spec(), &prior, &mut rng);
    let (teacher, targets) = net
        .generate(&noise, &params, &inputs, NoiseMode::Enabled, &mut rng)
        .expect("generation succeeds");
    Problem {
        net,
        noise,
        prior,
        inputs,
        teacher,
        targets,
    }
}
