use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sign,
    Abs,
    /// Identity. Only useful for exact-oracle tests.
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sign => "sign",
            Activation::Abs => "abs",
            Activation::Linear => "linear",
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            // sign(0) is taken as +1; the set has measure zero under every sampler.
            Activation::Sign => {
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Activation::Abs => z.abs(),
            Activation::Linear => z,
        }
    }

    /// Derivative, with the zero subgradient at the kink for ReLU and abs.
    #[inline]
    pub fn derivative(self, z: f64) -> Result<f64> {
        Ok(match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
            Activation::Sign => return Err(Error::NonDifferentiableActivation("sign")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputModel {
    GaussianRegression,
    MultinomialProbit { classes: usize },
}

/// A convolution without padding. Inputs are laid out channel-major,
/// then row-major within a channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels_in: usize,
    pub channels_out: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub filter_height: usize,
    pub filter_width: usize,
    pub stride_y: usize,
    pub stride_x: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn out_height(&self) -> usize {
        (self.in_height - self.filter_height) / self.stride_y + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width - self.filter_width) / self.stride_x + 1
    }

    pub fn filter_len(&self) -> usize {
        self.filter_height * self.filter_width
    }

    /// Length of one packed filter row, `C_in · H_f · W_f`.
    pub fn packed_len(&self) -> usize {
        self.channels_in * self.filter_len()
    }

    pub fn in_len(&self) -> usize {
        self.channels_in * self.in_height * self.in_width
    }

    pub fn out_len(&self) -> usize {
        self.channels_out * self.out_height() * self.out_width()
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            self.channels_in,
            self.channels_out,
            self.filter_height,
            self.filter_width,
            self.stride_y,
            self.stride_x,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidConfig("conv dimensions must be positive".into()));
        }
        if self.filter_height > self.in_height || self.filter_width > self.in_width {
            return Err(Error::InvalidConfig(format!(
                "filter {}x{} larger than input {}x{}",
                self.filter_height, self.filter_width, self.in_height, self.in_width
            )));
        }
        Ok(())
    }
}

/// Non-overlapping average pooling. Rows and columns that do not fill a
/// whole window are discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub window_height: usize,
    pub window_width: usize,
}

impl PoolSpec {
    pub fn out_height(&self) -> usize {
        self.in_height / self.window_height
    }

    pub fn out_width(&self) -> usize {
        self.in_width / self.window_width
    }

    pub fn window_len(&self) -> usize {
        self.window_height * self.window_width
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.in_height * self.in_width
    }

    pub fn out_len(&self) -> usize {
        self.channels * self.out_height() * self.out_width()
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.window_height == 0 || self.window_width == 0 {
            return Err(Error::InvalidConfig("pool dimensions must be positive".into()));
        }
        if self.out_height() == 0 || self.out_width() == 0 {
            return Err(Error::InvalidConfig("pool window larger than its input".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense {
        in_width: usize,
        out_width: usize,
        bias: bool,
    },
    Conv(ConvSpec),
    Pool(PoolSpec),
}

impl LayerSpec {
    pub fn in_len(&self) -> usize {
        match self {
            LayerSpec::Dense { in_width, .. } => *in_width,
            LayerSpec::Conv(c) => c.in_len(),
            LayerSpec::Pool(p) => p.in_len(),
        }
    }

    pub fn out_len(&self) -> usize {
        match self {
            LayerSpec::Dense { out_width, .. } => *out_width,
            LayerSpec::Conv(c) => c.out_len(),
            LayerSpec::Pool(p) => p.out_len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub activation: Activation,
    pub output: OutputModel,
}

impl NetworkSpec {
    /// Fully connected network with widths `d_1, ..., d_{L+1}`.
    pub fn mlp(widths: &[usize], activation: Activation, output: OutputModel, bias: bool) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        let layers = widths
            .windows(2)
            .map(|w| LayerSpec::Dense {
                in_width: w[0],
                out_width: w[1],
                bias,
            })
            .collect();
        let spec = Self {
            layers,
            activation,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense {
                    in_width, out_width, ..
                } => {
                    if *in_width == 0 || *out_width == 0 {
                        return Err(Error::InvalidConfig(format!("layer {i}: widths must be positive")));
                    }
                }
                LayerSpec::Conv(c) => c.validate()?,
                LayerSpec::Pool(p) => p.validate()?,
            }
            if i > 0 && self.layers[i - 1].out_len() != layer.in_len() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} emits {} values but layer {i} expects {}",
                    i - 1,
                    self.layers[i - 1].out_len(),
                    layer.in_len()
                )));
            }
        }
        if let OutputModel::MultinomialProbit { classes } = self.output {
            if classes < 2 || self.output_width() != classes {
                return Err(Error::InvalidConfig(format!(
                    "probit output needs {} >= 2 classes matching the output width {}",
                    classes,
                    self.output_width()
                )));
            }
        }
        Ok(())
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Whether the output of layer `k` passes through the activation (with
    /// its own noise) before the next layer. Pooling consumes its input
    /// directly, and the last layer has no activation.
    pub fn activation_after(&self, k: usize) -> bool {
        k + 1 < self.layers.len() && !matches!(self.layers[k + 1], LayerSpec::Pool(_))
    }

    /// Index into the post-activation list for the output of layer `k`.
    pub fn x_slot(&self, k: usize) -> Option<usize> {
        self.activation_after(k)
            .then(|| (0..k).filter(|&j| self.activation_after(j)).count())
    }

    pub fn x_count(&self) -> usize {
        (0..self.depth()).filter(|&k| self.activation_after(k)).count()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_len()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_len()
    }

    /// `[d_1, ..., d_{L+1}]` for an all-dense network.
    pub fn dense_widths(&self) -> Result<Vec<usize>> {
        let mut widths = vec![self.input_width()];
        for layer in &self.layers {
            match layer {
                LayerSpec::Dense { out_width, .. } => widths.push(*out_width),
                _ => return Err(Error::InvalidConfig("expected a fully connected network".into())),
            }
        }
        Ok(widths)
    }

    pub fn has_bias(&self, layer: usize) -> bool {
        match self.layers[layer] {
            LayerSpec::Dense { bias, .. } => bias,
            LayerSpec::Conv(c) => c.bias,
            LayerSpec::Pool(_) => false,
        }
    }

    /// Number of weights and biases.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                let (weights, biases) = match layer {
                    LayerSpec::Dense {
                        in_width, out_width, ..
                    } => (in_width * out_width, *out_width),
                    LayerSpec::Conv(c) => (c.channels_out * c.packed_len(), c.channels_out),
                    LayerSpec::Pool(_) => (0, 0),
                };
                weights + if self.has_bias(k) { biases } else { 0 }
            })
            .sum()
    }

    pub fn classes(&self) -> Option<usize> {
        match self.output {
            OutputModel::MultinomialProbit { classes } => Some(classes),
            OutputModel::GaussianRegression => None,
        }
    }
}

/// Noise variances. `delta_z[k]` belongs to the output of layer `k` and
/// `delta_x[s]` to post-activation slot `s` (see [`NetworkSpec::x_slot`]).
/// The last entry of `delta_z` doubles as the classical temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub delta_z: Vec<f64>,
    pub delta_x: Vec<f64>,
}

impl NoiseSchedule {
    /// Every variance set to `delta`.
    pub fn uniform(spec: &NetworkSpec, delta: f64) -> Self {
        Self {
            delta_z: vec![delta; spec.depth()],
            delta_x: vec![delta; spec.x_count()],
        }
    }

    pub fn output_delta(&self) -> f64 {
        self.delta_z[self.delta_z.len() - 1]
    }

    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.delta_z.len() != spec.depth() || self.delta_x.len() != spec.x_count() {
            return Err(Error::InvalidConfig(format!(
                "noise schedule needs {} delta_z and {} delta_x entries, got {} and {}",
                spec.depth(),
                spec.x_count(),
                self.delta_z.len(),
                self.delta_x.len()
            )));
        }
        if let Some(bad) = self
            .delta_z
            .iter()
            .chain(&self.delta_x)
            .find(|d| !(d.is_finite() && **d > 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "noise variances must be finite and positive, got {bad}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub lambda_w: Vec<f64>,
    pub lambda_b: Vec<f64>,
}

impl PriorSpec {
    pub fn uniform(depth: usize, lambda_w: f64, lambda_b: f64) -> Self {
        Self {
            lambda_w: vec![lambda_w; depth],
            lambda_b: vec![lambda_b; depth],
        }
    }

    /// `λ_W^(k) = d_k`, the fan-in scaling used for teacher weights.
    pub fn fan_in(spec: &NetworkSpec) -> Self {
        let lambda: Vec<f64> = spec.layers.iter().map(|l| fan_in(l) as f64).collect();
        Self {
            lambda_b: lambda.clone(),
            lambda_w: lambda,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if self.lambda_w.len() != depth || self.lambda_b.len() != depth {
            return Err(Error::InvalidConfig(format!(
                "prior needs {depth} entries per list, got {} and {}",
                self.lambda_w.len(),
                self.lambda_b.len()
            )));
        }
        if let Some(bad) = self
            .lambda_w
            .iter()
            .chain(&self.lambda_b)
            .find(|l| !(l.is_finite() && **l > 0.0))
        {
            return Err(Error::InvalidConfig(format!(
                "prior precisions must be positive, got {bad}"
            )));
        }
        Ok(())
    }
}

fn fan_in(layer: &LayerSpec) -> usize {
    match layer {
        LayerSpec::Dense { in_width, .. } => *in_width,
        LayerSpec::Conv(c) => c.packed_len(),
        LayerSpec::Pool(p) => p.window_len(),
    }
}
