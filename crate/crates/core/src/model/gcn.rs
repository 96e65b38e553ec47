use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::tensor::{SparseMatrix, Tape, Tensor, Var};

/// Stack of GCN layer weights with a dot-product edge decoder and an
/// optional node-classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    weights: Vec<Tensor>,
    cls_head: Option<Tensor>,
}

impl GnnModel {
    /// Glorot-uniform initialization for `dims = [n_f, d_1, …, d_L]`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Argument(format!(
                "layer dims need an input and at least one positive output, got {dims:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = dims
            .windows(2)
            .map(|w| glorot(w[0], w[1], &mut rng))
            .collect();
        Ok(GnnModel {
            weights,
            cls_head: None,
        })
    }

    pub fn from_weights(weights: Vec<Tensor>, cls_head: Option<Tensor>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("a model needs at least one layer".into()));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::shape(
                    "model",
                    format!(
                        "layer {} outputs {} but layer {} expects {}",
                        l + 1,
                        pair[0].cols(),
                        l + 2,
                        pair[1].rows()
                    ),
                ));
            }
        }
        if let Some(h) = &cls_head {
            if h.rows() != weights.last().expect("non-empty").cols() {
                return Err(Error::shape("model", "classification head does not match the last layer"));
            }
        }
        if weights.iter().chain(&cls_head).any(|w| !w.all_finite()) {
            return Err(Error::Numeric("model weights contain non-finite values".into()));
        }
        Ok(GnnModel { weights, cls_head })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// `[n_f, d_1, …, d_L]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.weights[0].rows()];
        dims.extend(self.weights.iter().map(Tensor::cols));
        dims
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Tensor] {
        &mut self.weights
    }

    pub fn cls_head(&self) -> Option<&Tensor> {
        self.cls_head.as_ref()
    }

    pub fn set_cls_head(&mut self, head: Tensor) -> Result<()> {
        let d = self.weights.last().expect("non-empty").cols();
        if head.rows() != d {
            return Err(Error::shape(
                "cls_head",
                format!("head has {} rows, embeddings have {d} columns", head.rows()),
            ));
        }
        self.cls_head = Some(head);
        Ok(())
    }
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

/// Symmetric normalization with self-loops, `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn normalized_adjacency(g: &Graph) -> SparseMatrix {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|u| 1.0 / ((g.degree(u) + 1) as f64).sqrt()).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(g.neighbor_array().len() + n);
    let mut values = Vec::with_capacity(g.neighbor_array().len() + n);
    offsets.push(0);
    for u in 0..n {
        let mut row: Vec<usize> = g.neighbors(u).to_vec();
        row.push(u);
        row.sort_unstable();
        for v in row {
            indices.push(v);
            values.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        offsets.push(indices.len());
    }
    SparseMatrix::new(n, n, offsets, indices, values).expect("adjacency is valid CSR")
}

/// Constant operands of a forward pass over one graph.
#[derive(Clone, Debug)]
pub struct GraphOperands {
    pub adjacency: Arc<SparseMatrix>,
    pub features: Arc<SparseMatrix>,
}

impl GraphOperands {
    pub fn new(g: &Graph) -> Self {
        GraphOperands {
            adjacency: Arc::new(normalized_adjacency(g)),
            features: Arc::new(g.features().clone()),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }
}

/// Per-layer outputs `H^1 … H^L`; `H^0` is the graph's feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEmbeddings {
    layers: Vec<Tensor>,
}

impl NodeEmbeddings {
    pub fn new(layers: Vec<Tensor>) -> Self {
        NodeEmbeddings { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `H^l` for `1 ≤ l ≤ L`.
    pub fn layer(&self, l: usize) -> &Tensor {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Tensor] {
        &self.layers
    }

    /// Final representations `z = H^L`.
    pub fn z(&self) -> &Tensor {
        self.layers.last().expect("at least one layer")
    }

    pub fn num_nodes(&self) -> usize {
        self.z().rows()
    }
}

/// Records the layer stack on `tape`. After each layer `l` (1-based), `post`
/// may replace the layer output; the replacement feeds layer `l + 1`.
pub fn forward_on_tape<F>(
    tape: &mut Tape,
    ops: &GraphOperands,
    weights: &[Var],
    post: F,
) -> Result<Vec<Var>>
where
    F: FnMut(&mut Tape, usize, Var) -> Result<Var>,
{
    let n_f = tape.value(weights[0]).rows();
    if ops.features.cols() != n_f {
        return Err(Error::shape(
            "forward",
            format!("features have {} columns, first layer expects {n_f}", ops.features.cols()),
        ));
    }
    let first = tape.spmm(&ops.features, weights[0])?;
    let mut out = tape.spmm(&ops.adjacency, first)?;
    if weights.len() > 1 {
        out = tape.relu(out);
    }
    resume_forward_on_tape(tape, ops, weights, 1, out, post)
}

/// Continues a forward pass from `raw`, the output of layer `layer` before
/// `post` is applied. Returns the outputs of layers `layer..=L`.
pub(crate) fn resume_forward_on_tape<F>(
    tape: &mut Tape,
    ops: &GraphOperands,
    weights: &[Var],
    layer: usize,
    raw: Var,
    mut post: F,
) -> Result<Vec<Var>>
where
    F: FnMut(&mut Tape, usize, Var) -> Result<Var>,
{
    let last = weights.len();
    let mut h = post(tape, layer, raw)?;
    let mut outputs = vec![h];
    for (i, &w) in weights.iter().enumerate().skip(layer) {
        let transformed = tape.matmul(h, w)?;
        let mut out = tape.spmm(&ops.adjacency, transformed)?;
        if i + 1 < last {
            out = tape.relu(out);
        }
        h = post(tape, i + 1, out)?;
        outputs.push(h);
    }
    Ok(outputs)
}

/// Plain forward pass: `H^l = ReLU(Â H^{l-1} W^l)`, no ReLU on the last layer.
pub fn forward(g: &Graph, model: &GnnModel) -> Result<NodeEmbeddings> {
    forward_with(&GraphOperands::new(g), model)
}

pub fn forward_with(ops: &GraphOperands, model: &GnnModel) -> Result<NodeEmbeddings> {
    let mut tape = Tape::new();
    let weights: Vec<Var> = model.weights.iter().map(|w| tape.constant(w.clone())).collect();
    let outs = forward_on_tape(&mut tape, ops, &weights, |_, _, h| Ok(h))?;
    tape.check_finite()?;
    Ok(NodeEmbeddings::new(
        outs.into_iter().map(|v| tape.value(v).clone()).collect(),
    ))
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_node(emb: &NodeEmbeddings, u: usize) -> Result<()> {
    if u >= emb.num_nodes() {
        return Err(Error::Index {
            what: "nodes",
            index: u,
            len: emb.num_nodes(),
        });
    }
    Ok(())
}

/// `⟨z_u, z_v⟩` before the sigmoid.
pub fn edge_logit(emb: &NodeEmbeddings, u: usize, v: usize) -> Result<f64> {
    check_node(emb, u)?;
    check_node(emb, v)?;
    let z = emb.z();
    Ok(z.row(u).iter().zip(z.row(v)).map(|(a, b)| a * b).sum())
}

/// `σ(⟨z_u, z_v⟩)`.
pub fn decode_edge(emb: &NodeEmbeddings, u: usize, v: usize) -> Result<f64> {
    edge_logit(emb, u, v).map(logistic)
}

pub fn edge_probabilities(emb: &NodeEmbeddings, edges: &[Edge]) -> Result<Vec<f64>> {
    edges.iter().map(|&(u, v)| decode_edge(emb, u, v)).collect()
}

/// `H^L · head`, one row of class scores per node.
pub fn classify_nodes(emb: &NodeEmbeddings, model: &GnnModel) -> Result<Tensor> {
    let head = model
        .cls_head
        .as_ref()
        .ok_or_else(|| Error::Config("model has no classification head".into()))?;
    emb.z().matmul(head)
}

/// Row-wise argmax; ties go to the lowest class id.
pub fn predict_classes(scores: &Tensor) -> Vec<usize> {
    (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            let mut best = 0;
            for (c, &s) in row.iter().enumerate() {
                if s > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}
