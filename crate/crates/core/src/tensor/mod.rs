//! Dense and sparse tensors, the tape, and optimizers.

mod dense;
mod gradcheck;
mod optim;
mod sparse;
mod tape;

pub use dense::Tensor;
pub use gradcheck::finite_diff_check;
pub use optim::{adam_step, sgd_step, AdamParams, AdamState, Optimizer, OptimizerKind};
pub use sparse::SparseMatrix;
pub use tape::{Tape, Var};
