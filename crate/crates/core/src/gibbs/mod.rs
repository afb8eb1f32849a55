mod conditionals;
mod probit;
mod sweep;
mod zsample;

pub use conditionals::{update_bias, update_bias_layer, update_w_layer, update_x_layer};
pub use probit::update_probit_output;
pub use sweep::{GibbsSweep, MlpGibbs, SweepSchedule};
pub use zsample::{sample_z, sample_z_linear, update_z_layer, update_z_layer_linear, z_branch_masses, ZBranchMasses};
