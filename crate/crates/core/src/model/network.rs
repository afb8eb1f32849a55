use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ops::LayerOp;
use crate::model::state::argmax_row;
use crate::model::{ChainState, NetworkSpec, NoiseSchedule, OutputModel, Params, Targets};

/// Whether [`Network::generate`] injects the scheduled noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    Enabled,
    /// Deterministic pass; the latents equal the noiseless network's values.
    Disabled,
}

/// A network specification together with its precomputed layer maps.
#[derive(Clone, Debug)]
pub struct Network {
    spec: NetworkSpec,
    ops: Vec<LayerOp>,
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let ops = spec.layers.iter().map(LayerOp::new).collect();
        Ok(Self { spec, ops })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn op(&self, k: usize) -> &LayerOp {
        &self.ops[k]
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    /// Whether the last `z` is fixed by the data.
    pub fn output_clamped(&self) -> bool {
        matches!(self.spec.output, OutputModel::GaussianRegression)
    }

    /// The matrix that layer `k` reads in `state`.
    pub fn input_of<'a>(&self, k: usize, inputs: &'a DMatrix<f64>, state: &'a ChainState) -> &'a DMatrix<f64> {
        if k == 0 {
            inputs
        } else if let Some(slot) = self.spec.x_slot(k - 1) {
            &state.x[slot]
        } else {
            &state.z[k - 1]
        }
    }

    /// Noise-free mean of layer `k` given the current state.
    pub fn layer_mean(&self, k: usize, inputs: &DMatrix<f64>, state: &ChainState) -> DMatrix<f64> {
        let input = self.input_of(k, inputs, state);
        self.ops[k].forward(&state.params.weights[k], &state.params.biases[k], input)
    }

    /// The deterministic network `f(x, W)`: its last-layer output for each row.
    pub fn predict(&self, params: &Params, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_inputs(params, inputs)?;
        let mut a = inputs.clone();
        for k in 0..self.depth() {
            let mut h = self.ops[k].forward(&params.weights[k], &params.biases[k], &a);
            if self.spec.activation_after(k) {
                let act = self.spec.activation;
                h.apply(|v| *v = act.apply(*v));
            }
            a = h;
        }
        Ok(a)
    }

    /// Run the intermediate-noise generative process from `inputs`.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        noise: &NoiseSchedule,
        params: &Params,
        inputs: &DMatrix<f64>,
        mode: NoiseMode,
        rng: &mut R,
    ) -> Result<(ChainState, Targets)> {
        self.check_inputs(params, inputs)?;
        noise.validate(&self.spec)?;
        let add_noise = |m: &mut DMatrix<f64>, var: f64, rng: &mut R| {
            if mode == NoiseMode::Enabled {
                let sd = var.sqrt();
                m.apply(|v| *v += sd * rng.sample::<f64, _>(StandardNormal));
            }
        };
        let mut state = ChainState {
            params: params.clone(),
            x: Vec::with_capacity(self.spec.x_count()),
            z: Vec::with_capacity(self.depth()),
        };
        for k in 0..self.depth() {
            let mut z = self.layer_mean(k, inputs, &state);
            add_noise(&mut z, noise.delta_z[k], rng);
            if let Some(slot) = self.spec.x_slot(k) {
                let act = self.spec.activation;
                let mut x = z.map(|v| act.apply(v));
                add_noise(&mut x, noise.delta_x[slot], rng);
                state.x.push(x);
            }
            state.z.push(z);
        }
        let out = state.output();
        let targets = match self.spec.output {
            OutputModel::GaussianRegression => Targets::Regression(out.clone()),
            OutputModel::MultinomialProbit { .. } => {
                Targets::Classes((0..out.nrows()).map(|mu| argmax_row(out, mu)).collect())
            }
        };
        Ok((state, targets))
    }

    /// `(1/n_test) Σ_μ ‖f(x_μ, W⋆) − f(x_μ, W)‖²`.
    pub fn test_mse(&self, student: &Params, teacher: &Params, inputs: &DMatrix<f64>) -> Result<f64> {
        let n = inputs.nrows();
        if n == 0 {
            return Ok(0.0);
        }
        let diff = self.predict(teacher, inputs)? - self.predict(student, inputs)?;
        Ok(diff.norm_squared() / n as f64)
    }

    /// Fraction of rows whose argmax prediction differs from the label.
    pub fn test_error(&self, params: &Params, inputs: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
        if labels.len() != inputs.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} inputs",
                labels.len(),
                inputs.nrows()
            )));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let out = self.predict(params, inputs)?;
        let wrong = labels
            .iter()
            .enumerate()
            .filter(|(mu, &y)| argmax_row(&out, *mu) != y)
            .count();
        Ok(wrong as f64 / labels.len() as f64)
    }

    fn check_inputs(&self, params: &Params, inputs: &DMatrix<f64>) -> Result<()> {
        params.check_shapes(&self.spec)?;
        if inputs.ncols() != self.spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "inputs have {} columns, network expects {}",
                inputs.ncols(),
                self.spec.input_width()
            )));
        }
        Ok(())
    }
}

/// Convenience wrapper around [`Network::generate`].
pub fn forward_generate<R: Rng + ?Sized>(
    spec: &NetworkSpec,
    noise: &NoiseSchedule,
    params: &Params,
    inputs: &DMatrix<f64>,
    mode: NoiseMode,
    rng: &mut R,
) -> Result<(ChainState, Targets)> {
    Network::new(spec.clone())?.generate(noise, params, inputs, mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, PriorSpec};
    use crate::rng::RngStream;

    #[test]
    fn noiseless_linear_single_layer() {
        let spec = NetworkSpec::mlp(&[3, 2], Activation::Linear, OutputModel::GaussianRegression, false).unwrap();
        let net = Network::new(spec.clone()).unwrap();
        let mut rng = RngStream::new(3, 0);
        let params = Params::sample_prior(&spec, &PriorSpec::uniform(1, 1.0, 1.0), &mut rng);
        let x = DMatrix::from_fn(5, 3, |i, j| (i as f64) - (j as f64) * 0.5);
        let (_, targets) = net
            .generate(
                &NoiseSchedule::uniform(&spec, 1.0),
                &params,
                &x,
                NoiseMode::Disabled,
                &mut rng,
            )
            .unwrap();
        assert_eq!(targets, Targets::Regression(&x * params.weights[0].transpose()));
    }

    #[test]
    fn noiseless_generation_matches_predict() {
        let spec = NetworkSpec::mlp(&[4, 3, 3, 1], Activation::Relu, OutputModel::GaussianRegression, true).unwrap();
        let net = Network::new(spec.clone()).unwrap();
        let mut rng = RngStream::new(9, 0);
        let params = Params::sample_prior(&spec, &PriorSpec::fan_in(&spec), &mut rng);
        let x = DMatrix::from_fn(6, 4, |i, j| ((i * 5 + j) % 7) as f64 - 3.0);
        let (state, _) = net
            .generate(
                &NoiseSchedule::uniform(&spec, 0.3),
                &params,
                &x,
                NoiseMode::Disabled,
                &mut rng,
            )
            .unwrap();
        assert_eq!(state.output(), &net.predict(&params, &x).unwrap());
    }

    #[test]
    fn zero_weights_give_pure_noise() {
        let spec = NetworkSpec::mlp(&[2, 3, 1], Activation::Relu, OutputModel::GaussianRegression, false).unwrap();
        let net = Network::new(spec.clone()).unwrap();
        let x = DMatrix::from_element(20_000, 2, 1.0);
        let mut rng = RngStream::new(4, 0);
        let (s, _) = net
            .generate(
                &NoiseSchedule::uniform(&spec, 1.0),
                &Params::zeros(&spec),
                &x,
                NoiseMode::Enabled,
                &mut rng,
            )
            .unwrap();
        let z = &s.z[0];
        let mean = z.mean();
        let var = z.map(|v| (v - mean).powi(2)).mean();
        assert!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.03);
        // E[max(0, Z)] = 1/√(2π) for Z ~ N(0, 1)
        let xm = s.x[0].mean();
        assert!((xm - 0.398_942).abs() < 0.02);
    }

    #[test]
    fn metrics_basic_cases() {
        let spec = NetworkSpec::mlp(
            &[2, 3],
            Activation::Relu,
            OutputModel::MultinomialProbit { classes: 3 },
            false,
        )
        .unwrap();
        let net = Network::new(spec.clone()).unwrap();
        let zero = Params::zeros(&spec);
        let x = DMatrix::from_element(30, 2, 1.0);
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let err = net.test_error(&zero, &x, &labels).unwrap();
        assert!((err - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(net.test_mse(&zero, &zero, &x).unwrap(), 0.0);
    }
}
