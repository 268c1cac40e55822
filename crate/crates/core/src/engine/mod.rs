//! Dense tensors, reverse-mode autodiff and the MLP regressor.

mod graph;
mod hvp;
mod mlp;
mod params;
mod tensor;

pub use graph::{Graph, NodeId};
pub use hvp::{hvp, value_and_grad, HvpMethod, LossFn};
pub use mlp::{Activation, MlpModel};
pub use params::{ParamRole, ParamVector, Segment};
pub use tensor::Tensor;
