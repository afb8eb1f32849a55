use nalgebra::DMatrix;

use crate::baselines::LogDensity;
use crate::error::{Error, Result};
use crate::model::{ChainState, Network, NoiseSchedule, Params, PriorSpec, Targets};

/// The loss-based posterior over the flattened parameters.
pub struct ClassicalTarget<'a> {
    net: &'a Network,
    inputs: &'a DMatrix<f64>,
    targets: &'a Targets,
    delta: f64,
    prior: &'a PriorSpec,
    dim: usize,
}

impl<'a> ClassicalTarget<'a> {
    pub fn new(
        net: &'a Network,
        inputs: &'a DMatrix<f64>,
        targets: &'a Targets,
        delta: f64,
        prior: &'a PriorSpec,
    ) -> Result<Self> {
        if delta.is_nan() || delta <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be positive, got {delta}"
            )));
        }
        if net.spec().activation.derivative(0.0).is_err() {
            return Err(Error::NonDifferentiableActivation(net.spec().activation.name()));
        }
        prior.validate(net.depth())?;
        let dim = Params::zeros(net.spec()).flat_len(net.spec());
        Ok(Self {
            net,
            inputs,
            targets,
            delta,
            prior,
            dim,
        })
    }

    pub fn params(&self, x: &[f64]) -> Params {
        let mut p = Params::zeros(self.net.spec());
        p.read_flat(self.net.spec(), x);
        p
    }

    pub fn flatten(&self, params: &Params) -> Vec<f64> {
        params.to_flat(self.net.spec())
    }
}

impl LogDensity for ClassicalTarget<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let params = self.params(x);
        match self
            .net
            .classical_log_posterior(&params, self.inputs, self.targets, self.delta, self.prior)
        {
            Ok((v, g)) => {
                grad.copy_from_slice(&g.to_flat(self.net.spec()));
                v
            }
            Err(_) => f64::NAN,
        }
    }
}

/// The intermediate-noise posterior over every unclamped variable.
///
/// Positions are laid out as in [`Network::state_to_flat`]. With probit
/// output, positions violating the argmax constraint have density zero.
pub struct IntermediateTarget<'a> {
    net: &'a Network,
    inputs: &'a DMatrix<f64>,
    noise: &'a NoiseSchedule,
    prior: &'a PriorSpec,
    labels: Option<&'a [usize]>,
    template: ChainState,
    dim: usize,
}

impl<'a> IntermediateTarget<'a> {
    /// `template` supplies the clamped output block and the shapes.
    pub fn new(
        net: &'a Network,
        inputs: &'a DMatrix<f64>,
        noise: &'a NoiseSchedule,
        prior: &'a PriorSpec,
        labels: Option<&'a [usize]>,
        template: ChainState,
    ) -> Result<Self> {
        let spec = net.spec();
        if spec.activation.derivative(0.0).is_err() {
            return Err(Error::NonDifferentiableActivation(spec.activation.name()));
        }
        noise.validate(spec)?;
        prior.validate(net.depth())?;
        template.check_shapes(spec, inputs.nrows())?;
        if spec.classes().is_some() && labels.is_none() {
            return Err(Error::InvalidConfig("probit output needs labels".into()));
        }
        let dim = net.state_flat_len(&template);
        Ok(Self {
            net,
            inputs,
            noise,
            prior,
            labels,
            template,
            dim,
        })
    }

    pub fn state(&self, x: &[f64]) -> ChainState {
        let mut s = self.template.clone();
        self.net.state_read_flat(&mut s, x);
        s
    }

    pub fn flatten(&self, state: &ChainState) -> Vec<f64> {
        self.net.state_to_flat(state)
    }
}

impl LogDensity for IntermediateTarget<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let state = self.state(x);
        if let Some(labels) = self.labels {
            if state.probit_violations(labels) > 0 {
                return f64::NEG_INFINITY;
            }
        }
        match self
            .net
            .intermediate_log_posterior(&state, self.inputs, self.noise, self.prior)
        {
            Ok((v, g)) => {
                grad.copy_from_slice(&self.net.state_to_flat(&g));
                v
            }
            Err(_) => f64::NAN,
        }
    }
}
