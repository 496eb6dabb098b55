//! Dense tensors, reverse-mode differentiation and parameter storage.

mod checkpoint;
mod dense;
mod graph;
mod params;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use dense::Tensor;
pub use graph::{Gradients, Graph, Var, LAYER_NORM_EPS};
pub use params::{ParamId, ParamStore};
