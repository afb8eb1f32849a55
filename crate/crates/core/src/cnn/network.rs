use nalgebra::DMatrix;

use crate::cnn::{update_conv_bias, update_conv_w, update_pool_x, ConvIndexMap, PoolMap};
use crate::error::{Error, Result};
use crate::gibbs::{
    update_bias_layer, update_probit_output, update_w_layer, update_x_layer, update_z_layer, update_z_layer_linear,
    GibbsSweep,
};
use crate::model::{
    Activation, ChainState, ConvSpec, LayerSpec, Network, NetworkSpec, NoiseSchedule, OutputModel, PoolSpec, PriorSpec,
};
use crate::rng::{stream_key, RngStream};

impl NetworkSpec {
    /// Convolution, average pooling, activation, then a dense output layer.
    pub fn conv_pool_dense(
        conv: ConvSpec,
        pool_height: usize,
        pool_width: usize,
        activation: Activation,
        output: OutputModel,
        dense_bias: bool,
    ) -> Result<Self> {
        let pool = PoolSpec {
            channels: conv.channels_out,
            in_height: conv.out_height(),
            in_width: conv.out_width(),
            window_height: pool_height,
            window_width: pool_width,
        };
        let out_width = match output {
            OutputModel::MultinomialProbit { classes } => classes,
            OutputModel::GaussianRegression => 1,
        };
        let spec = Self {
            layers: vec![
                LayerSpec::Conv(conv),
                LayerSpec::Pool(pool),
                LayerSpec::Dense {
                    in_width: pool.out_len(),
                    out_width,
                    bias: dense_bias,
                },
            ],
            activation,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Gibbs sampler for the conv → pool → activation → dense network.
///
/// State layout: `z[0]` is the noisy convolution output, `z[1]` the noisy
/// pooled map (the activation's pre-activation), `x[0]` the noisy activation
/// and `z[2]` the output. One sweep redraws, in order, the filter and its
/// bias, `z[0]`, `z[1]`, `x[0]`, the dense weights and bias, and the probit
/// scores.
pub struct CnnGibbs {
    net: Network,
    noise: NoiseSchedule,
    prior: PriorSpec,
    inputs: DMatrix<f64>,
    labels: Option<Vec<usize>>,
    conv: ConvIndexMap,
    pool: PoolMap,
    filter_precision: DMatrix<f64>,
    streams: Vec<RngStream>,
}

impl CnnGibbs {
    pub fn new(
        net: Network,
        noise: NoiseSchedule,
        prior: PriorSpec,
        inputs: DMatrix<f64>,
        labels: Option<Vec<usize>>,
        seed: u64,
    ) -> Result<Self> {
        let spec = net.spec();
        let (conv, pool) = match spec.layers.as_slice() {
            [LayerSpec::Conv(c), LayerSpec::Pool(p), LayerSpec::Dense { .. }] => {
                (ConvIndexMap::new(c), PoolMap::new(p))
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "the convolutional sampler expects conv, pool and dense layers".into(),
                ))
            }
        };
        noise.validate(spec)?;
        prior.validate(spec.depth())?;
        if inputs.ncols() != spec.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "inputs have {} columns, network expects {}",
                inputs.ncols(),
                spec.input_width()
            )));
        }
        if spec.classes().is_some() && labels.as_ref().map(Vec::len) != Some(inputs.nrows()) {
            return Err(Error::InvalidConfig("probit output needs one label per input".into()));
        }
        let filter_precision = crate::cnn::conv_w_precision(&conv, &inputs, noise.delta_z[0], prior.lambda_w[0]);
        let streams = (0..7).map(|step| RngStream::new(seed, stream_key(3, step))).collect();
        Ok(Self {
            net,
            noise,
            prior,
            inputs,
            labels,
            conv,
            pool,
            filter_precision,
            streams,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn noise(&self) -> &NoiseSchedule {
        &self.noise
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }
}

impl GibbsSweep for CnnGibbs {
    fn network(&self) -> &Network {
        &self.net
    }

    fn sweep(&mut self, state: &mut ChainState) -> Result<()> {
        let spec = self.net.spec();
        let act = spec.activation;
        let (dz, dx) = (&self.noise.delta_z, &self.noise.delta_x);
        let [s_w1, s_b1, s_pool, s_act, s_x, s_w2, s_out] = &mut self.streams[..] else {
            unreachable!("seven streams are created in new")
        };

        state.params.weights[0] = update_conv_w(
            &self.conv,
            &self.inputs,
            Some(&self.filter_precision),
            &state.z[0],
            &state.params.biases[0],
            dz[0],
            self.prior.lambda_w[0],
            s_w1,
        )?;
        if spec.has_bias(0) {
            state.params.biases[0] = update_conv_bias(
                &self.conv,
                &self.inputs,
                &state.params.weights[0],
                &state.z[0],
                dz[0],
                self.prior.lambda_b[0],
                s_b1,
            )?;
        }

        let conv_mean = self.net.layer_mean(0, &self.inputs, state);
        state.z[0] = update_pool_x(&self.pool, &conv_mean, &state.z[1], dz[0], dz[1], s_pool)?;

        let pooled = self.net.layer_mean(1, &self.inputs, state);
        state.z[1] = match act {
            Activation::Linear => update_z_layer_linear(&pooled, &state.x[0], dz[1], dx[0], s_act)?,
            _ => update_z_layer(act, &pooled, &state.x[0], dz[1], dx[0], s_act)?,
        };

        let sigma = state.z[1].map(|v| act.apply(v));
        state.x[0] = update_x_layer(
            &sigma,
            &state.params.weights[2],
            &state.params.biases[2],
            &state.z[2],
            dx[0],
            dz[2],
            s_x,
        )?;

        state.params.weights[2] = update_w_layer(
            &state.x[0],
            None,
            &state.z[2],
            &state.params.biases[2],
            dz[2],
            self.prior.lambda_w[2],
            s_w2,
        )?;
        if spec.has_bias(2) {
            state.params.biases[2] = update_bias_layer(
                &state.x[0],
                &state.params.weights[2],
                &state.z[2],
                dz[2],
                self.prior.lambda_b[2],
                s_w2,
            )?;
        }

        if let (Some(labels), false) = (self.labels.as_deref(), self.net.output_clamped()) {
            let mean = self.net.layer_mean(2, &self.inputs, state);
            update_probit_output(&mean, &mut state.z[2], labels, dz[2], s_out)?;
        }
        Ok(())
    }
}
