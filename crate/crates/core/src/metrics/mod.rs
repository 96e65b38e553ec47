//! Ranking metrics, deletion-specific evaluations and the dot-product bound check.

mod eval;
mod ranking;
mod bound;

pub use eval::{eval_deleted, eval_test, mi_ratio, node_scores, score_link_sets, EvalReport};
pub use ranking::{auprc, auroc};
pub use bound::{spectral_norm, spectral_norm_with, deletion_bound_check, BoundCheck};
