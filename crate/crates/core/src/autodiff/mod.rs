//! Minimal reverse-mode automatic differentiation over dense tensors, with
//! exactly the operation set the networks in this crate need, plus the
//! optimizers and checkpoint format that go with it.

mod checkpoint;
pub mod gradcheck;
mod kernels;
mod optim;
mod tape;
mod tensor;

pub use checkpoint::Checkpoint;
pub use kernels::softmax;
pub use optim::{gradient_descent_step, Param, ParamSet, SgdMomentum};
pub use tape::{BnMode, BnObservation, BnStats, NodeId, Padding, Tape};
pub use tensor::Tensor;
