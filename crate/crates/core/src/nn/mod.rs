//! Dense tensors, a reverse-mode tape, the layers the fusion network needs,
//! and the Adam optimizer. Everything is 64-bit.

mod adam;
pub mod checkpoint;
pub mod gradcheck;
mod graph;
mod lstm;
pub mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use lstm::{lstm_step, LstmParams, LstmState, LstmVars};
pub use params::{fan_in_uniform, ParamId, ParamStore};
pub use tensor::Tensor;
