pub mod baselines;
pub mod cnn;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod kernels;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use rng::RngStream;

/// Matrix types used throughout the public API.
pub use nalgebra::{DMatrix, DVector};
