//! GCN layers, the edge decoder, base-model training and checkpoints.

pub mod checkpoint;
mod gcn;
mod train;

pub use gcn::{
    classify_nodes, decode_edge, edge_logit, edge_probabilities, forward, forward_on_tape, forward_with,
    normalized_adjacency, predict_classes, GnnModel, GraphOperands, NodeEmbeddings,
};
pub(crate) use gcn::resume_forward_on_tape;
pub(crate) use train::link_bce;
pub use train::{train_base, train_cls_head, TrainConfig};
