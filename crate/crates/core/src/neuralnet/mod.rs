//! Minimal differentiable layers with hand-written backward passes.
//!
//! Every layer is a pair of free functions (`*_forward`, `*_backward`) over
//! plain [`Tensor`]s; forward passes return whatever cache the backward pass
//! needs. Layers are generic over [`Scalar`] so training runs in `f32` while
//! gradient checks run in `f64`.

mod activation;
mod adam;
mod conv;
mod dense;
pub mod gradcheck;
mod init;
mod lstm;
mod pool;
mod tensor;

pub use activation::{relu_backward, relu_forward, relu_inplace};
pub use adam::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use conv::{conv2d_backward, conv2d_forward, conv2d_forward_padded, Conv2dCache, Conv2dGrads, TimePadding};
pub use dense::{
    dense_softmax_xent, sequence_softmax_xent, softmax_rows, DenseGrads, DenseSoftmaxOutput, SequenceXent,
};
pub use init::{glorot_uniform, uniform};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmParams};
pub use pool::{maxpool_freq, maxpool_freq_backward, pooled_len, PoolRecord};
pub use tensor::{gemm, Scalar, Tensor};
pub(crate) use dense::argmax_lowest;
