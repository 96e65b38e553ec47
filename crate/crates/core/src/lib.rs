//! Graph unlearning for GCN link predictors with learned, layer-wise deletion
//! operators.
//!
//! A trained [`model::GnnModel`] stays frozen. [`unlearn::unlearn`] fits a
//! small square map per layer that is applied only to nodes near the deleted
//! edges, so the deleted edges score like random pairs while every other
//! representation is left as it was.

pub mod error;
pub mod experiment;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod unlearn;

pub use error::{Error, Result};
pub use graph::{Edge, EdgeSplit, Graph, NodeSet};
pub use model::{GnnModel, NodeEmbeddings};
pub use tensor::{SparseMatrix, Tensor};
pub use unlearn::{DeletionOperator, UnlearnConfig, UnlearnedModel};
