//! Small exact reference kernels.
//!
//! These are not performance kernels. They exist to pin down the numerical
//! semantics of the streaming mechanisms: rotary embeddings, windowed
//! attention against a full causal oracle, and chunked causal 3D convolution
//! against a full-sequence oracle. Data is f32, accumulation is f64.

mod attention;
mod conv3d;
mod rope;
mod tensor;

pub use attention::{attention_full, attention_one, attention_streaming, softmax};
pub use conv3d::{conv3d_full, Conv3d, StreamingConv3d};
pub use rope::rope_apply;
pub use tensor::{KernelError, Tensor};
