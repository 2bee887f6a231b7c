//! Numeric primitives the model is assembled from.

pub mod gradcheck;
pub mod init;
pub mod ops;
pub mod tensor;

pub use gradcheck::{finite_diff_grad, GradCheckReport};
pub use ops::{
    dropout, elu, glu, layer_norm, linear, mish, sigmoid, softmax, tanh, DropoutMask, LinearParams,
    LAYER_NORM_EPS,
};
pub use tensor::{Tensor2, Trans};
