mod index;
mod network;
mod updates;

pub use index::{ConvIndexMap, PoolMap};
pub use network::CnnGibbs;
pub use updates::{
    conv_operator, conv_w_conditional, conv_w_precision, conv_x_conditional, update_conv_bias, update_conv_w,
    update_conv_x, update_pool_x, InformationForm,
};
