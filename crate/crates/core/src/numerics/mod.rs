//! Dense tensors and a small reverse-mode autodiff engine covering exactly
//! the operations the model needs.

mod conv;
mod gru;
mod init;
pub mod ops;
mod tape;
mod tensor;

pub use conv::{causal_pad, conv1d, conv_out_len};
pub use gru::{gru_sequence, GruParams};
pub use init::uniform_fan_in;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Real, Tensor};
