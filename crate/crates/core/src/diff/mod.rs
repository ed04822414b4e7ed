//! Dense tensors, an eager reverse-mode graph, parameter stores and Adam.

mod graph;
mod params;
mod penalty;
mod tensor;

pub use graph::{softmax, Gradients, Graph, LeafKind, Op, Var};
pub use params::{AdamConfig, GradMap, Param, ParamStore};
pub use penalty::{gradient_penalty, penalty_parameter_gradient, PenaltyTerm};
pub use tensor::Tensor;
