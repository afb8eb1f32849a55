//! Stateless numerical primitives shared by every sampler.

mod gaussian;
mod special;
mod truncnorm;

pub use gaussian::{
    cholesky_factor, sample_mvn, sample_standard_normal_matrix, CholeskyFactor, GaussianParams, PrecisionFactor,
    JITTER_ATTEMPTS,
};
pub use special::{ln_erfcx, log_erfc, log_upper_tail, stable_branch_probability};
pub use truncnorm::{sample_truncated_normal, TruncationSide, TAIL_SWITCH};
