//! Differentiable layer kernels: forward maps with exact vector-Jacobian products.

pub mod activation;
pub mod conv;
pub mod layer;
pub mod linear;
pub mod loss;
pub mod pool;
pub mod tensor;

pub use activation::{leaky_relu, relu, sigmoid, DEFAULT_LEAKY_SLOPE};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_extent, conv_transpose2d_backward,
    conv_transpose2d_forward, conv_transpose_output_extent, ConvGrads, ConvParams,
};
pub use layer::{GradPair, Layer, LayerGrads};
pub use linear::{linear_backward, linear_forward, LinearGrads, LinearParams};
pub use loss::{mae_grad, mae_loss, mse_grad, mse_loss, LossKind};
pub use pool::{maxpool2d_backward, maxpool2d_forward, Pooled};
pub use tensor::{Real, Tensor};
