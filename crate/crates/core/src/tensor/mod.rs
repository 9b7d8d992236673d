//! Dense float64 arrays with a small reverse-mode autodiff tape.

mod array;
mod gradcheck;
mod graph;
mod params;

pub use array::Array;
pub use gradcheck::grad_check;
pub use graph::{log_softmax_rows, sigmoid, softplus, Gradients, Graph, Var};
pub use params::{Adam, ParamSet};
