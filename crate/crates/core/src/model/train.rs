use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{negative_sample, Edge, EdgeSplit, Graph};
use crate::metrics::auroc;
use crate::model::gcn::{edge_probabilities, forward_on_tape, forward_with, GnnModel, GraphOperands, NodeEmbeddings};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor, Var};

/// Base link-prediction training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden and output widths `[d_1, …, d_L]`; the input width comes from the graph.
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dims: vec![128, 64],
            epochs: 200,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

/// Logits `⟨z_u, z_v⟩` for `edges` recorded on the tape.
pub(crate) fn edge_logits(tape: &mut Tape, z: Var, edges: &[Edge]) -> Result<Var> {
    let us: Vec<usize> = edges.iter().map(|e| e.0).collect();
    let vs: Vec<usize> = edges.iter().map(|e| e.1).collect();
    let zu = tape.gather_rows(z, us)?;
    let zv = tape.gather_rows(z, vs)?;
    tape.rowwise_dot(zu, zv)
}

/// Binary cross-entropy of `positives` (label 1) against `negatives` (label 0).
pub(crate) fn link_bce(tape: &mut Tape, z: Var, positives: &[Edge], negatives: &[Edge]) -> Result<Var> {
    let mut edges = positives.to_vec();
    edges.extend_from_slice(negatives);
    let logits = edge_logits(tape, z, &edges)?;
    let mut labels = vec![1.0; positives.len()];
    labels.resize(edges.len(), 0.0);
    tape.bce_with_logits(logits, labels)
}

fn seed_for(base: u64, stream: u64, step: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(step)
}

/// Validation AUROC of `emb`: validation edges against fixed negatives.
fn validation_auroc(emb: &NodeEmbeddings, pos: &[Edge], neg: &[Edge]) -> Result<f64> {
    let mut scores = edge_probabilities(emb, pos)?;
    scores.extend(edge_probabilities(emb, neg)?);
    let mut labels = vec![true; pos.len()];
    labels.resize(scores.len(), false);
    auroc(&scores, &labels)
}

/// Trains a GCN link predictor on `split.remaining`, which serves as both the
/// message-passing edge set and the positive examples. Each epoch draws a
/// fresh, equally sized set of negatives. Returns the weights with the best
/// validation AUROC, the latest one among ties (the final weights when there
/// is no validation set).
pub fn train_base(g: &Graph, split: &EdgeSplit, cfg: &TrainConfig) -> Result<GnnModel> {
    if cfg.epochs == 0 {
        return Err(Error::Argument("training needs at least one epoch".into()));
    }
    if cfg.lr < 0.0 {
        return Err(Error::Argument(format!("learning rate {} is negative", cfg.lr)));
    }
    let positives = &split.remaining;
    if positives.is_empty() {
        return Err(Error::Argument("no training edges".into()));
    }
    let g_msg = g.with_edges(positives)?;
    let ops = GraphOperands::new(&g_msg);
    let mut dims = vec![g.feature_dim()];
    dims.extend_from_slice(&cfg.hidden_dims);
    let mut model = GnnModel::init(&dims, cfg.seed)?;

    let mut held_out: Vec<Edge> = split.validation.clone();
    held_out.extend_from_slice(&split.test);
    let full = g_msg.with_edges(&[positives.as_slice(), &held_out].concat())?;
    let val_neg = if split.validation.is_empty() {
        Vec::new()
    } else {
        negative_sample(&full, split.validation.len(), &split.deleted, seed_for(cfg.seed, 1, 0))?
    };

    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut best: Option<(f64, Vec<Tensor>)> = None;
    let mut tape = Tape::new();
    for epoch in 0..cfg.epochs {
        tape.reset();
        let negatives = negative_sample(&g_msg, positives.len(), &held_out, seed_for(cfg.seed, 2, epoch as u64))?;
        let ws: Vec<Var> = model.weights().iter().map(|w| tape.leaf(w.clone())).collect();
        let outs = forward_on_tape(&mut tape, &ops, &ws, |_, _, h| Ok(h))?;
        let z = *outs.last().expect("at least one layer");
        let loss = link_bce(&mut tape, z, positives, &negatives)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        if !split.validation.is_empty() {
            let emb = NodeEmbeddings::new(outs.iter().map(|&v| tape.value(v).clone()).collect());
            let score = validation_auroc(&emb, &split.validation, &val_neg)?;
            if best.as_ref().is_none_or(|(b, _)| score >= *b) {
                best = Some((score, model.weights().to_vec()));
            }
            debug!("epoch {epoch}: loss {loss_value:.5} val auroc {score:.4}");
        }
        tape.backward(loss)
            .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        let grads: Vec<Tensor> = ws
            .iter()
            .map(|&w| tape.grad(w).cloned().expect("weights feed the loss"))
            .collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        let mut params: Vec<&mut Tensor> = model.weights_mut().iter_mut().collect();
        opt.step(&mut params, &grad_refs)?;
    }

    if !split.validation.is_empty() {
        let emb = forward_with(&ops, &model)?;
        let score = validation_auroc(&emb, &split.validation, &val_neg)?;
        if let Some((b, w)) = best {
            if b > score {
                return GnnModel::from_weights(w, None);
            }
        }
    }
    if model.weights().iter().any(|w| !w.all_finite()) {
        return Err(Error::Numeric("training produced non-finite weights".into()));
    }
    Ok(model)
}

/// Fits a linear classification head on frozen embeddings with one-vs-rest
/// logistic loss over `train_nodes`.
pub fn train_cls_head(
    emb: &NodeEmbeddings,
    labels: &[usize],
    train_nodes: &[usize],
    epochs: usize,
    lr: f64,
) -> Result<Tensor> {
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    if num_classes == 0 || train_nodes.is_empty() {
        return Err(Error::Argument("head training needs labeled nodes".into()));
    }
    let d = emb.z().cols();
    let mut head = Tensor::zeros(d, num_classes);
    let mut targets = Vec::with_capacity(train_nodes.len() * num_classes);
    for &u in train_nodes {
        for c in 0..num_classes {
            targets.push(if labels[u] == c { 1.0 } else { 0.0 });
        }
    }
    let mut opt = Optimizer::new(OptimizerKind::Adam, lr);
    let mut tape = Tape::new();
    for _ in 0..epochs {
        tape.reset();
        let z = tape.constant(emb.z().clone());
        let rows = tape.gather_rows(z, train_nodes.to_vec())?;
        let h = tape.leaf(head.clone());
        let scores = tape.matmul(rows, h)?;
        let loss = tape.bce_with_logits(scores, targets.clone())?;
        tape.backward(loss)?;
        let g = tape.grad(h).cloned().expect("head feeds the loss");
        opt.step(&mut [&mut head], &[&g])?;
    }
    Ok(head)
}
