//! Named experiment configurations.
//!
//! Synthetic presets use the 50-10-1 ReLU teacher with biases and fan-in
//! priors. Step sizes, leapfrog counts and budgets follow the tuned values
//! reported for each noise level; the MNIST presets expect IDX files under
//! `data/mnist/` and run on a 6000-image subset by default.

use crate::error::{Error, Result};
use crate::gibbs::SweepSchedule;
use crate::harness::config::{
    DataConfig, DiagnosticsConfig, ExperimentConfig, Initialization, NetworkConfig, NoiseConfig, Posterior,
    PriorConfig, SamplerConfig,
};
use crate::model::{Activation, ConvSpec, OutputModel};

/// Wall-clock budget of the synthetic comparison runs.
pub const SYNTHETIC_MAX_SECONDS: f64 = 5.5 * 3600.0;
/// Gibbs sweeps per synthetic run.
pub const GIBBS_SWEEPS: u64 = 2_500_000;

/// `Δ_i = 10^(-i/3)` for `i = 0, ..., 3·decades`: three values per decade.
pub fn delta_grid(decades: u32) -> Vec<f64> {
    (0..=3 * decades).map(|i| delta_at(i as usize)).collect()
}

fn delta_at(i: usize) -> f64 {
    // Round to three significant digits, as the tables print them.
    let d = 10f64.powf(-(i as f64) / 3.0);
    let mag = 10f64.powi(d.log10().floor() as i32 - 2);
    (d / mag).round() * mag
}

/// Which sampler a Δ-sweep preset tunes for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepSampler {
    Gibbs,
    HmcClassical,
    HmcIntermediate,
    MalaInformed,
    MalaZero,
}

impl SweepSampler {
    pub const ALL: [SweepSampler; 5] = [
        Self::Gibbs,
        Self::HmcClassical,
        Self::HmcIntermediate,
        Self::MalaInformed,
        Self::MalaZero,
    ];

    pub fn slug(&self) -> &'static str {
        match self {
            Self::Gibbs => "gibbs",
            Self::HmcClassical => "hmc-classical",
            Self::HmcIntermediate => "hmc-intermediate",
            Self::MalaInformed => "mala-informed",
            Self::MalaZero => "mala-zero",
        }
    }

    /// Number of tabulated noise levels.
    pub fn levels(&self) -> usize {
        match self {
            Self::Gibbs | Self::HmcIntermediate | Self::MalaInformed => 16,
            Self::HmcClassical => 13,
            Self::MalaZero => 17,
        }
    }

    /// Sampler, step budget and record spacing at grid index `i`.
    pub fn tuned(&self, i: usize) -> Option<(SamplerConfig, u64, u64)> {
        if i >= self.levels() {
            return None;
        }
        let hmc = |step_size, leapfrog_steps| SamplerConfig::Hmc {
            step_size,
            leapfrog_steps,
        };
        let mala = |step_size| SamplerConfig::Mala { step_size };
        Some(match self {
            Self::Gibbs => (
                SamplerConfig::Gibbs {
                    schedule: SweepSchedule::Sequential,
                },
                GIBBS_SWEEPS,
                100,
            ),
            Self::HmcIntermediate if i <= 6 => (hmc(5e-4, 1000), 10_000, 10),
            Self::HmcIntermediate => (hmc(5e-5, 1000), 100_000, 10),
            Self::HmcClassical if i <= 4 => (hmc(5e-4, 20), 10_000, 10),
            Self::HmcClassical if i <= 6 => (hmc(5e-5, 100), 100_000, 10),
            Self::HmcClassical => (hmc(5e-5, 1000), 100_000, 10),
            Self::MalaInformed if i <= 3 => (mala(1e-5), 100_000, 100),
            Self::MalaInformed if i == 4 => (mala(1e-5), 1_000_000, 100),
            Self::MalaInformed if i <= 9 => (mala(1e-6), 1_000_000, 100),
            Self::MalaInformed if i <= 12 => (mala(1e-7), 1_000_000, 100),
            Self::MalaInformed => (mala(1e-9), 11_000_000, 1100),
            Self::MalaZero if i <= 1 => (mala(1e-5), 100_000, 100),
            Self::MalaZero if i <= 4 => (mala(1e-5), 1_000_000, 100),
            Self::MalaZero if i == 5 => (mala(1e-6), 1_000_000, 100),
            Self::MalaZero => {
                let eta = match i {
                    6..=8 => 1e-7,
                    9 | 10 => 1e-8,
                    11 | 12 => 1e-9,
                    13 | 14 => 1e-10,
                    _ => 1e-11,
                };
                (mala(eta), 11_000_000, 1100)
            }
        })
    }

    fn posterior(&self) -> Posterior {
        match self {
            Self::Gibbs | Self::HmcIntermediate => Posterior::Intermediate,
            _ => Posterior::Classical,
        }
    }

    fn uninformed(&self) -> Initialization {
        match self {
            Self::Gibbs => Initialization::Zero,
            _ => Initialization::Gaussian { scale: 1e-4 },
        }
    }
}

fn synthetic_network() -> NetworkConfig {
    NetworkConfig::Mlp {
        widths: vec![50, 10, 1],
        activation: Activation::Relu,
        bias: true,
        output: OutputModel::GaussianRegression,
    }
}

fn synthetic_data(noiseless: bool) -> DataConfig {
    DataConfig::Synthetic {
        n: None,
        params_multiple: 4.0,
        n_test: 1000,
        delta_gen: None,
        noiseless,
    }
}

/// Teacher–student diagnostic comparison: Δ = 1e-4, informed, zero and two
/// random starts.
pub fn ts_criterion() -> ExperimentConfig {
    ExperimentConfig {
        name: "ts-criterion".into(),
        seed: 0,
        sweeps: 200_000,
        spacing: 100,
        max_seconds: None,
        record_outputs: 100,
        posterior: Posterior::Intermediate,
        network: synthetic_network(),
        noise: NoiseConfig::uniform(1e-4),
        prior: PriorConfig::FanIn,
        data: synthetic_data(false),
        sampler: SamplerConfig::Gibbs {
            schedule: SweepSchedule::Sequential,
        },
        init: vec![
            Initialization::Informed,
            Initialization::Zero,
            Initialization::Random,
            Initialization::Random,
        ],
        diagnostics: DiagnosticsConfig::default(),
    }
}

/// One synthetic comparison run at grid index `i` (see [`delta_grid`]).
pub fn synthetic_run(sampler: SweepSampler, i: usize) -> Result<ExperimentConfig> {
    let (cfg, sweeps, spacing) = sampler
        .tuned(i)
        .ok_or_else(|| Error::InvalidConfig(format!("no tuned settings for {} at level {i}", sampler.slug())))?;
    let delta = delta_at(i);
    Ok(ExperimentConfig {
        name: format!("synthetic-{}-delta-{delta:e}", sampler.slug()),
        seed: 0,
        sweeps,
        spacing,
        max_seconds: Some(SYNTHETIC_MAX_SECONDS),
        record_outputs: 100,
        posterior: sampler.posterior(),
        network: synthetic_network(),
        noise: NoiseConfig::uniform(delta),
        prior: PriorConfig::FanIn,
        data: synthetic_data(true),
        sampler: cfg,
        init: vec![Initialization::Informed, sampler.uninformed()],
        diagnostics: DiagnosticsConfig::default(),
    })
}

/// Every tabulated noise level for one sampler.
pub fn delta_sweep(sampler: SweepSampler) -> Vec<ExperimentConfig> {
    (0..sampler.levels())
        .map(|i| synthetic_run(sampler, i).expect("level in range"))
        .collect()
}

fn mnist_data() -> DataConfig {
    DataConfig::Idx {
        images: "data/mnist/train-images-idx3-ubyte".into(),
        labels: "data/mnist/train-labels-idx1-ubyte".into(),
        test_images: Some("data/mnist/t10k-images-idx3-ubyte".into()),
        test_labels: Some("data/mnist/t10k-labels-idx1-ubyte".into()),
        subset: Some(6000),
        test_subset: Some(1000),
    }
}

fn mnist(
    name: &str,
    network: NetworkConfig,
    prior: PriorConfig,
    delta: f64,
    sampler: SamplerConfig,
) -> ExperimentConfig {
    let (posterior, init, sweeps, spacing) = match sampler {
        SamplerConfig::Gibbs { .. } => (Posterior::Intermediate, Initialization::Zero, 10_000, 10),
        SamplerConfig::Hmc { .. } => (
            Posterior::Classical,
            Initialization::Gaussian { scale: 1e-1 },
            5_000,
            10,
        ),
        SamplerConfig::Mala { .. } => (
            Posterior::Classical,
            Initialization::Gaussian { scale: 1e-4 },
            100_000,
            100,
        ),
    };
    ExperimentConfig {
        name: name.into(),
        seed: 0,
        sweeps,
        spacing,
        max_seconds: None,
        record_outputs: 0,
        posterior,
        network,
        noise: NoiseConfig::uniform(delta),
        prior,
        data: mnist_data(),
        sampler,
        init: vec![init],
        diagnostics: DiagnosticsConfig::default(),
    }
}

fn mlp12() -> (NetworkConfig, PriorConfig) {
    (
        NetworkConfig::Mlp {
            widths: vec![784, 12, 10],
            activation: Activation::Relu,
            bias: true,
            output: OutputModel::MultinomialProbit { classes: 10 },
        },
        PriorConfig::Layers {
            lambda_w: vec![784.0, 12.0],
            lambda_b: vec![784.0, 12.0],
        },
    )
}

/// The 2×1×4×4 convolution with stride 2 and 2×2 pooling: 28×28 → 13×13 → 6×6,
/// giving 72 features for the dense layer.
pub fn mnist_cnn_conv() -> ConvSpec {
    ConvSpec {
        channels_in: 1,
        channels_out: 2,
        in_height: 28,
        in_width: 28,
        filter_height: 4,
        filter_width: 4,
        stride_y: 2,
        stride_x: 2,
        bias: true,
    }
}

fn cnn() -> (NetworkConfig, PriorConfig) {
    (
        NetworkConfig::ConvPoolDense {
            conv: mnist_cnn_conv(),
            pool: [2, 2],
            activation: Activation::Relu,
            dense_bias: true,
            output: OutputModel::MultinomialProbit { classes: 10 },
        },
        PriorConfig::Layers {
            lambda_w: vec![16.0, 1.0, 72.0],
            lambda_b: vec![16.0, 1.0, 72.0],
        },
    )
}

/// Names and one-line descriptions of every preset.
pub fn preset_names() -> Vec<(String, String)> {
    let mut v = vec![
        (
            "ts-criterion".to_string(),
            "teacher-student diagnostics, 50-10-1 ReLU, delta 1e-4, four Gibbs chains".to_string(),
        ),
        ("synthetic-gibbs".into(), "Gibbs, delta 4.64e-4, 2.5e6 sweeps".into()),
        (
            "synthetic-hmc-classical".into(),
            "HMC on the classical posterior, delta 1e-3".into(),
        ),
        (
            "synthetic-hmc-intermediate".into(),
            "HMC on the intermediate posterior, delta 4.64e-4".into(),
        ),
        (
            "synthetic-mala".into(),
            "MALA on the classical posterior, delta 1e-3".into(),
        ),
    ];
    for s in SweepSampler::ALL {
        v.push((
            format!("delta-sweep-{}", s.slug()),
            format!("{} tuned runs, three noise levels per decade", s.levels()),
        ));
    }
    for (name, what) in [
        ("mnist-mlp12-gibbs", "MLP-12 Gibbs, delta 2"),
        ("mnist-mlp12-hmc", "MLP-12 classical HMC, delta 2"),
        ("mnist-mlp12-mala", "MLP-12 classical MALA, delta 2"),
        ("mnist-cnn-gibbs", "CNN Gibbs, delta 100"),
        ("mnist-cnn-hmc", "CNN classical HMC, delta 10"),
        ("mnist-cnn-mala", "CNN classical MALA, delta 10"),
    ] {
        v.push((name.into(), what.into()));
    }
    v
}

/// Configurations for a named preset; sweep presets expand to several runs.
pub fn preset_configs(name: &str) -> Result<Vec<ExperimentConfig>> {
    let one = |c: ExperimentConfig| Ok(vec![c]);
    let (m_net, m_prior) = mlp12();
    let (c_net, c_prior) = cnn();
    match name {
        "ts-criterion" => one(ts_criterion()),
        "synthetic-gibbs" => one(named(synthetic_run(SweepSampler::Gibbs, 10)?, name)),
        "synthetic-hmc-classical" => one(named(synthetic_run(SweepSampler::HmcClassical, 9)?, name)),
        "synthetic-hmc-intermediate" => one(named(synthetic_run(SweepSampler::HmcIntermediate, 10)?, name)),
        "synthetic-mala" => one(named(synthetic_run(SweepSampler::MalaZero, 9)?, name)),
        "mnist-mlp12-gibbs" => one(mnist(name, m_net, m_prior, 2.0, gibbs())),
        "mnist-mlp12-hmc" => one(mnist(name, m_net, m_prior, 2.0, hmc(1e-3, 200))),
        "mnist-mlp12-mala" => one(mnist(
            name,
            m_net,
            m_prior,
            2.0,
            SamplerConfig::Mala { step_size: 2e-6 },
        )),
        "mnist-cnn-gibbs" => one(mnist(name, c_net, c_prior, 100.0, gibbs())),
        "mnist-cnn-hmc" => one(mnist(name, c_net, c_prior, 10.0, hmc(1e-3, 50))),
        "mnist-cnn-mala" => one(mnist(
            name,
            c_net,
            c_prior,
            10.0,
            SamplerConfig::Mala { step_size: 5e-6 },
        )),
        _ => SweepSampler::ALL
            .into_iter()
            .find(|s| name == format!("delta-sweep-{}", s.slug()))
            .map(delta_sweep)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset `{name}`"))),
    }
}

/// A single-run preset by name.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut v = preset_configs(name)?;
    if v.len() != 1 {
        return Err(Error::InvalidConfig(format!(
            "preset `{name}` expands to {} runs",
            v.len()
        )));
    }
    Ok(v.remove(0))
}

fn named(mut c: ExperimentConfig, name: &str) -> ExperimentConfig {
    c.name = name.to_string();
    c
}

fn gibbs() -> SamplerConfig {
    SamplerConfig::Gibbs {
        schedule: SweepSchedule::Sequential,
    }
}

fn hmc(step_size: f64, leapfrog_steps: usize) -> SamplerConfig {
    SamplerConfig::Hmc {
        step_size,
        leapfrog_steps,
    }
}
