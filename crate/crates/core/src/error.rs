use thiserror::Error;

/// Errors raised across the sampler, model and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (after {attempts} jitter attempts, last jitter {last_jitter:e})")]
    NotPositiveDefinite { attempts: usize, last_jitter: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("activation `{0}` is not differentiable; gradients are unavailable")]
    NonDifferentiableActivation(&'static str),

    #[error("activation `{0}` has no truncated-branch Z update")]
    UnsupportedActivation(&'static str),

    #[error("log-density is not finite at the starting position")]
    NonFiniteDensity,

    #[error("within-chain variance is zero; R-hat is undefined")]
    DegenerateVariance,

    #[error("informed chain never becomes stationary")]
    InformedNotStationary,

    #[error("informed initialization requires a dataset with a stored teacher")]
    MissingTeacher,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("IDX file truncated: {0}")]
    TruncatedFile(String),

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("trace parse error: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
