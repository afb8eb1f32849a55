use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, HmcSettings, MalaSettings};
use crate::diagnostics::{ScoreTarget, WindowRule};
use crate::error::{Error, Result};
use crate::gibbs::SweepSchedule;
use crate::model::{Activation, ConvSpec, LayerSpec, NetworkSpec, NoiseSchedule, OutputModel, PriorSpec};

/// A complete, self-describing experiment. Parsed from and written to TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Sampler steps per chain (Gibbs sweeps or HMC/MALA transitions).
    pub sweeps: u64,
    /// Steps between trace records.
    #[serde(default = "default_spacing")]
    pub spacing: u64,
    /// Wall-clock cap per chain; the trace is flushed when it is hit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_seconds: Option<f64>,
    /// Number of test outputs recorded as `out_<j>` columns for R-hat.
    #[serde(default = "default_record_outputs")]
    pub record_outputs: usize,
    #[serde(default)]
    pub posterior: Posterior,
    pub network: NetworkConfig,
    pub noise: NoiseConfig,
    pub prior: PriorConfig,
    pub data: DataConfig,
    pub sampler: SamplerConfig,
    pub init: Vec<Initialization>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_spacing() -> u64 {
    100
}

fn default_record_outputs() -> usize {
    100
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posterior {
    /// Loss-based likelihood on the network output only.
    Classical,
    /// Noise at every layer, with pre- and post-activations as variables.
    #[default]
    Intermediate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    /// Fully connected; `widths` runs from the input to the output width.
    Mlp {
        widths: Vec<usize>,
        activation: Activation,
        #[serde(default = "yes")]
        bias: bool,
        output: OutputModel,
    },
    /// Convolution, average pooling, activation, dense output layer.
    ConvPoolDense {
        conv: ConvSpec,
        pool: [usize; 2],
        activation: Activation,
        #[serde(default = "yes")]
        dense_bias: bool,
        output: OutputModel,
    },
}

fn yes() -> bool {
    true
}

impl NetworkConfig {
    pub fn spec(&self) -> Result<NetworkSpec> {
        match self {
            Self::Mlp {
                widths,
                activation,
                bias,
                output,
            } => NetworkSpec::mlp(widths, *activation, *output, *bias),
            Self::ConvPoolDense {
                conv,
                pool,
                activation,
                dense_bias,
                output,
            } => NetworkSpec::conv_pool_dense(*conv, pool[0], pool[1], *activation, *output, *dense_bias),
        }
    }
}

/// Either one variance for every noise site or explicit lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_x: Option<Vec<f64>>,
}

impl NoiseConfig {
    pub fn uniform(delta: f64) -> Self {
        Self {
            delta: Some(delta),
            ..Self::default()
        }
    }

    pub fn schedule(&self, spec: &NetworkSpec) -> Result<NoiseSchedule> {
        let sched = match (self.delta, &self.delta_z, &self.delta_x) {
            (Some(d), None, None) => NoiseSchedule::uniform(spec, d),
            (None, Some(z), Some(x)) => NoiseSchedule {
                delta_z: z.clone(),
                delta_x: x.clone(),
            },
            _ => {
                return Err(Error::InvalidConfig(
                    "noise: give either `delta` or both `delta_z` and `delta_x`".into(),
                ))
            }
        };
        sched.validate(spec)?;
        Ok(sched)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// `λ` equal to each layer's fan-in.
    FanIn,
    Uniform {
        lambda_w: f64,
        lambda_b: f64,
    },
    Layers {
        lambda_w: Vec<f64>,
        lambda_b: Vec<f64>,
    },
}

impl PriorConfig {
    pub fn prior(&self, spec: &NetworkSpec) -> Result<PriorSpec> {
        let p = match self {
            Self::FanIn => PriorSpec::fan_in(spec),
            Self::Uniform { lambda_w, lambda_b } => PriorSpec::uniform(spec.depth(), *lambda_w, *lambda_b),
            Self::Layers { lambda_w, lambda_b } => PriorSpec {
                lambda_w: lambda_w.clone(),
                lambda_b: lambda_b.clone(),
            },
        };
        p.validate(spec.depth())?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Teacher–student data with standard Gaussian inputs.
    Synthetic {
        /// Training size; defaults to `params_multiple` times the parameter count.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default = "default_params_multiple")]
        params_multiple: f64,
        #[serde(default = "default_n_test")]
        n_test: usize,
        /// Generating noise variance; defaults to the model's schedule.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_gen: Option<f64>,
        /// Labels from the noiseless forward pass.
        #[serde(default)]
        noiseless: bool,
    },
    /// IDX image and label files, pixels scaled to `[0, 1]`.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_labels: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subset: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_subset: Option<usize>,
    },
    /// Small datasets written directly in the config.
    Inline {
        inputs: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        targets: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<Vec<usize>>,
    },
}

fn default_params_multiple() -> f64 {
    4.0
}

fn default_n_test() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerConfig {
    Gibbs {
        #[serde(default = "sequential")]
        schedule: SweepSchedule,
    },
    Hmc {
        step_size: f64,
        leapfrog_steps: usize,
    },
    Mala {
        step_size: f64,
    },
}

fn sequential() -> SweepSchedule {
    SweepSchedule::Sequential
}

impl SamplerConfig {
    pub fn baseline(&self) -> Option<BaselineKind> {
        match *self {
            Self::Gibbs { .. } => None,
            Self::Hmc {
                step_size,
                leapfrog_steps,
            } => Some(BaselineKind::Hmc(HmcSettings {
                step_size,
                leapfrog_steps,
            })),
            Self::Mala { step_size } => Some(BaselineKind::Mala(MalaSettings { step_size })),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gibbs { .. } => "gibbs",
            Self::Hmc { .. } => "hmc",
            Self::Mala { .. } => "mala",
        }
    }
}

/// Starting point of one chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Initialization {
    /// The teacher's state.
    Informed,
    /// Every free variable at zero (probit scores one-hot on the label).
    Zero,
    /// Weights from the prior, latents from the generative process.
    Random,
    /// Every free variable i.i.d. `N(0, scale²)`.
    Gaussian { scale: f64 },
}

impl Initialization {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Informed => "informed",
            Self::Zero => "zero",
            Self::Random => "random",
            Self::Gaussian { .. } => "gaussian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance_sigmas: f64,
    #[serde(default)]
    pub score_target: ScoreTarget,
    /// R-hat block length in records.
    #[serde(default = "default_window")]
    pub rhat_block: usize,
    /// Floor applied before taking logs of the test MSE.
    #[serde(default = "default_log_floor")]
    pub log_floor: f64,
}

fn default_window() -> usize {
    50
}

fn default_tolerance() -> f64 {
    3.0
}

fn default_log_floor() -> f64 {
    1e-300
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            tolerance_sigmas: default_tolerance(),
            score_target: ScoreTarget::default(),
            rhat_block: default_window(),
            log_floor: default_log_floor(),
        }
    }
}

impl DiagnosticsConfig {
    pub fn rule(&self) -> WindowRule {
        WindowRule {
            window: self.window,
            tolerance_sigmas: self.tolerance_sigmas,
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML; errors carry the offending line and field.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        self.network.spec()
    }

    /// Check cross-field constraints that the TOML schema cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let spec = self.network_spec()?;
        self.noise.schedule(&spec)?;
        self.prior.prior(&spec)?;
        if self.sweeps == 0 {
            return bad("sweeps: must be at least 1".into());
        }
        if self.spacing == 0 {
            return bad("spacing: must be at least 1".into());
        }
        if self.init.is_empty() {
            return bad("init: list at least one initialization".into());
        }
        if let Some(s) = self.max_seconds {
            if s.is_nan() || s <= 0.0 {
                return bad(format!("max_seconds: must be positive, got {s}"));
            }
        }
        if self.diagnostics.window < 3 || self.diagnostics.rhat_block < 2 {
            return bad("diagnostics: window must be >= 3 and rhat_block >= 2".into());
        }
        let synthetic = matches!(self.data, DataConfig::Synthetic { .. });
        if self.init.contains(&Initialization::Informed) && !synthetic {
            return bad("init: `informed` needs a synthetic dataset with a stored teacher".into());
        }
        for init in &self.init {
            if let Initialization::Gaussian { scale } = init {
                if !(*scale >= 0.0 && scale.is_finite()) {
                    return bad(format!(
                        "init: gaussian scale must be finite and non-negative, got {scale}"
                    ));
                }
            }
        }
        match (&self.sampler, self.posterior) {
            (SamplerConfig::Gibbs { .. }, Posterior::Classical) => {
                return bad("sampler: gibbs runs on the intermediate posterior only".into())
            }
            (SamplerConfig::Gibbs { schedule }, _) => {
                let dense = spec.layers.iter().all(|l| matches!(l, LayerSpec::Dense { .. }));
                if !dense && *schedule != SweepSchedule::Sequential {
                    return bad("sampler: the convolutional sampler is sequential only".into());
                }
                if !dense && !is_conv_pool_dense(&spec) {
                    return bad("sampler: gibbs supports dense networks and conv-pool-dense networks".into());
                }
            }
            (other, _) => {
                other.baseline().expect("baseline").validate()?;
                if spec.activation == Activation::Sign {
                    return bad("sampler: gradient samplers need a differentiable activation".into());
                }
            }
        }
        if let DataConfig::Synthetic { n, params_multiple, .. } = &self.data {
            if n.is_none() && (params_multiple.is_nan() || *params_multiple <= 0.0) {
                return bad("data: params_multiple must be positive".into());
            }
        }
        Ok(())
    }
}

fn is_conv_pool_dense(spec: &NetworkSpec) -> bool {
    matches!(
        spec.layers.as_slice(),
        [LayerSpec::Conv(_), LayerSpec::Pool(_), LayerSpec::Dense { .. }]
    )
}
