//! Small CPU tensor runtime for the demosaicking sub-networks.

pub mod format;
mod forward;
pub mod ops;
pub mod spec;
mod tensor;
mod weights;

pub(crate) use forward::last_readers;
pub use forward::forward;
pub use ops::{batch_norm_infer, conv2d, conv2d_backward, relu, ConvGrads, BN_EPS};
pub use spec::{
    count_flops, count_params, HiddenBlock, LayerKind, LayerSpec, NetworkSpec, Target,
    FIRST_SKIP_LAYER, MAX_DEPTH,
};
pub use tensor::Tensor;
pub use weights::{BatchNorm, LayerWeights, NetworkWeights};
