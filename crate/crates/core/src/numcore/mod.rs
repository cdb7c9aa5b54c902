//! Differentiable numeric core: dense arrays, a define-by-run tape with
//! reverse-mode accumulation, and a finite-difference gradient checker.

mod array;
mod gradcheck;
mod graph;
mod params;

pub use array::Array;
pub use gradcheck::{
    gradient_check, relative_error, GradCheckOptions, GradCheckReport, ParamCheck, FD_STEP,
};
pub use graph::{bce, l2, sigmoid, softmax, squash, Graph, NodeId, BCE_EPS};
pub use params::{Gradients, ParamId, ParamStore};

#[cfg(test)]
mod tests;
