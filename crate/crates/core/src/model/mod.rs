mod network;
mod ops;
mod posterior;
mod spec;
mod state;

pub use network::{forward_generate, Network, NoiseMode};
pub(crate) use ops::column_sums;
pub use ops::{LayerGrad, LayerOp};
pub use spec::{Activation, ConvSpec, LayerSpec, NetworkSpec, NoiseSchedule, OutputModel, PoolSpec, PriorSpec};
pub use state::{argmax_row, ChainState, Dataset, Params, Split, Targets};
