use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ChainState, Network, NoiseSchedule, Params, PriorSpec, Targets};

fn prior_term(net: &Network, params: &Params, prior: &PriorSpec, grad: Option<&mut Params>) -> f64 {
    let mut logp = 0.0;
    let mut grad = grad;
    for k in 0..net.depth() {
        let lw = prior.lambda_w[k];
        logp -= 0.5 * lw * params.weights[k].norm_squared();
        if let Some(g) = grad.as_deref_mut() {
            g.weights[k] -= lw * &params.weights[k];
        }
        if net.spec().has_bias(k) {
            let lb = prior.lambda_b[k];
            logp -= 0.5 * lb * params.biases[k].norm_squared();
            if let Some(g) = grad.as_deref_mut() {
                g.biases[k] -= lb * &params.biases[k];
            }
        }
    }
    logp
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = row.clone().fold(f64::NEG_INFINITY, f64::max);
    m + row.map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Network {
    /// Log-density of the loss-based posterior, up to a constant, with its
    /// gradient. Regression uses the squared loss; classification uses
    /// softmax cross-entropy on the last layer.
    pub fn classical_log_posterior(
        &self,
        params: &Params,
        inputs: &DMatrix<f64>,
        targets: &Targets,
        delta: f64,
        prior: &PriorSpec,
    ) -> Result<(f64, Params)> {
        let (logp, grad) = self.classical_impl(params, inputs, targets, delta, prior, true)?;
        Ok((logp, grad.expect("gradient requested")))
    }

    /// Value-only form of [`Network::classical_log_posterior`]; also defined
    /// for non-differentiable activations.
    pub fn classical_log_density(
        &self,
        params: &Params,
        inputs: &DMatrix<f64>,
        targets: &Targets,
        delta: f64,
        prior: &PriorSpec,
    ) -> Result<f64> {
        Ok(self.classical_impl(params, inputs, targets, delta, prior, false)?.0)
    }

    fn classical_impl(
        &self,
        params: &Params,
        inputs: &DMatrix<f64>,
        targets: &Targets,
        delta: f64,
        prior: &PriorSpec,
        want_grad: bool,
    ) -> Result<(f64, Option<Params>)> {
        let spec = self.spec();
        if want_grad && spec.activation.derivative(0.0).is_err() {
            return Err(Error::NonDifferentiableActivation(spec.activation.name()));
        }
        params.check_shapes(spec)?;
        if targets.len() != inputs.nrows() {
            return Err(Error::ShapeMismatch("input and target counts differ".into()));
        }
        let act = spec.activation;
        // a[k] is the input of layer k, h[k] its output before activation.
        let mut a = vec![inputs.clone()];
        let mut h = Vec::with_capacity(self.depth());
        for k in 0..self.depth() {
            let hk = self.op(k).forward(&params.weights[k], &params.biases[k], &a[k]);
            if k + 1 < self.depth() {
                a.push(if spec.activation_after(k) {
                    hk.map(|v| act.apply(v))
                } else {
                    hk.clone()
                });
            }
            h.push(hk);
        }
        let out = &h[self.depth() - 1];
        let (loss, grad_out) = match targets {
            Targets::Regression(y) => {
                if y.shape() != out.shape() {
                    return Err(Error::ShapeMismatch("target width differs from output width".into()));
                }
                let r = y - out;
                (r.norm_squared(), r * 2.0)
            }
            Targets::Classes(labels) => {
                let mut loss = 0.0;
                let mut g = DMatrix::zeros(out.nrows(), out.ncols());
                for (mu, &y) in labels.iter().enumerate() {
                    let row = out.row(mu);
                    let lse = log_sum_exp(row.iter().copied());
                    loss += lse - row[y];
                    for c in 0..out.ncols() {
                        g[(mu, c)] = -(row[c] - lse).exp();
                    }
                    g[(mu, y)] += 1.0;
                }
                (loss, g)
            }
        };
        // d(-loss/(2Δ)) / d out = grad_out / (2Δ), where grad_out = -d loss / d out.
        let mut logp = -loss / (2.0 * delta);
        let mut grad = want_grad.then(|| Params::zeros(spec));
        if let Some(gp) = grad.as_mut() {
            let mut g = grad_out / (2.0 * delta);
            for k in (0..self.depth()).rev() {
                let lg = self.op(k).backward(&params.weights[k], &a[k], &g);
                gp.weights[k] = lg.weight;
                if spec.has_bias(k) {
                    gp.biases[k] = lg.bias;
                }
                if k > 0 {
                    g = lg.input;
                    if spec.activation_after(k - 1) {
                        let hk = &h[k - 1];
                        for (gv, &hv) in g.iter_mut().zip(hk.iter()) {
                            *gv *= act.derivative(hv)?;
                        }
                    }
                }
            }
        }
        logp += prior_term(self, params, prior, grad.as_mut());
        Ok((logp, grad))
    }

    /// Log-density of the intermediate-noise posterior over all unclamped
    /// variables, up to a constant, with its gradient. The gradient entry for
    /// a clamped output block is zero.
    pub fn intermediate_log_posterior(
        &self,
        state: &ChainState,
        inputs: &DMatrix<f64>,
        noise: &NoiseSchedule,
        prior: &PriorSpec,
    ) -> Result<(f64, ChainState)> {
        let (logp, grad) = self.intermediate_impl(state, inputs, noise, prior, None, true)?;
        Ok((logp, grad.expect("gradient requested")))
    }

    /// Value-only form of [`Network::intermediate_log_posterior`]. With
    /// `labels` given, states violating the probit argmax constraint get `-∞`.
    pub fn intermediate_log_density(
        &self,
        state: &ChainState,
        inputs: &DMatrix<f64>,
        noise: &NoiseSchedule,
        prior: &PriorSpec,
        labels: Option<&[usize]>,
    ) -> Result<f64> {
        Ok(self.intermediate_impl(state, inputs, noise, prior, labels, false)?.0)
    }

    fn intermediate_impl(
        &self,
        state: &ChainState,
        inputs: &DMatrix<f64>,
        noise: &NoiseSchedule,
        prior: &PriorSpec,
        labels: Option<&[usize]>,
        want_grad: bool,
    ) -> Result<(f64, Option<ChainState>)> {
        let spec = self.spec();
        if want_grad && spec.activation.derivative(0.0).is_err() {
            return Err(Error::NonDifferentiableActivation(spec.activation.name()));
        }
        state.check_shapes(spec, inputs.nrows())?;
        if let Some(labels) = labels {
            if state.probit_violations(labels) > 0 {
                return Ok((f64::NEG_INFINITY, None));
            }
        }
        let act = spec.activation;
        let mut grad = want_grad.then(|| zeros_like(state));
        let mut logp = 0.0;
        for k in 0..self.depth() {
            let input = self.input_of(k, inputs, state);
            let mean = self
                .op(k)
                .forward(&state.params.weights[k], &state.params.biases[k], input);
            let dz = noise.delta_z[k];
            let r = &state.z[k] - mean;
            logp -= r.norm_squared() / (2.0 * dz);
            if let Some(g) = grad.as_mut() {
                let gr = r / dz;
                let lg = self.op(k).backward(&state.params.weights[k], input, &gr);
                g.params.weights[k] += lg.weight;
                if spec.has_bias(k) {
                    g.params.biases[k] += lg.bias;
                }
                if k > 0 {
                    match spec.x_slot(k - 1) {
                        Some(slot) => g.x[slot] += lg.input,
                        None => g.z[k - 1] += lg.input,
                    }
                }
                if !(k + 1 == self.depth() && self.output_clamped()) {
                    g.z[k] -= gr;
                }
            }
            if let Some(slot) = spec.x_slot(k) {
                let dx = noise.delta_x[slot];
                let s = &state.x[slot] - state.z[k].map(|v| act.apply(v));
                logp -= s.norm_squared() / (2.0 * dx);
                if let Some(g) = grad.as_mut() {
                    g.x[slot] -= &s / dx;
                    for ((gz, &sv), &zv) in g.z[k].iter_mut().zip(s.iter()).zip(state.z[k].iter()) {
                        *gz += sv * act.derivative(zv)? / dx;
                    }
                }
            }
        }
        logp += prior_term(self, &state.params, prior, grad.as_mut().map(|g| &mut g.params));
        Ok((logp, grad))
    }

    /// Number of coordinates [`Network::state_to_flat`] produces.
    pub fn state_flat_len(&self, state: &ChainState) -> usize {
        let z_count = if self.output_clamped() {
            self.depth() - 1
        } else {
            self.depth()
        };
        state.params.flat_len(self.spec())
            + state.x.iter().map(|m| m.len()).sum::<usize>()
            + state.z[..z_count].iter().map(|m| m.len()).sum::<usize>()
    }

    /// Flatten every unclamped variable: parameters, then `x`, then `z`.
    pub fn state_to_flat(&self, state: &ChainState) -> Vec<f64> {
        let mut out = state.params.to_flat(self.spec());
        for m in &state.x {
            out.extend_from_slice(m.as_slice());
        }
        let z_count = if self.output_clamped() {
            self.depth() - 1
        } else {
            self.depth()
        };
        for m in &state.z[..z_count] {
            out.extend_from_slice(m.as_slice());
        }
        out
    }

    /// Inverse of [`Network::state_to_flat`]; clamped blocks are left as is.
    pub fn state_read_flat(&self, state: &mut ChainState, flat: &[f64]) {
        let mut at = state.params.read_flat(self.spec(), flat);
        for m in state.x.iter_mut() {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        let z_count = if self.output_clamped() {
            self.depth() - 1
        } else {
            self.depth()
        };
        for m in state.z[..z_count].iter_mut() {
            let n = m.len();
            m.as_mut_slice().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        debug_assert_eq!(at, flat.len());
    }
}

fn zeros_like(state: &ChainState) -> ChainState {
    let z = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
    ChainState {
        params: Params {
            weights: state.params.weights.iter().map(z).collect(),
            biases: state.params.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        },
        x: state.x.iter().map(z).collect(),
        z: state.z.iter().map(z).collect(),
    }
}
