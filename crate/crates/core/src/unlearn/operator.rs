use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{endpoints, khop_nodes, Edge, Graph, NodeSet};
use crate::model::checkpoint::{read_matrices, read_u32, read_u8, write_matrices, write_u32};
use crate::model::{forward_on_tape, resume_forward_on_tape, GnnModel, GraphOperands, NodeEmbeddings};
use crate::tensor::{Tape, Tensor, Var};

/// Which layers carry a deletion map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorMode {
    LayerWise,
    LastLayerOnly,
}

impl FromStr for OperatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "layer-wise" | "layerwise" => Ok(OperatorMode::LayerWise),
            "last-layer-only" | "last" => Ok(OperatorMode::LastLayerOnly),
            other => Err(Error::Config(format!("unknown operator mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Sigmoid,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Activation::Linear),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Per-layer square maps applied only to masked node rows; every other row
/// passes through untouched.
#[derive(Clone, Debug, PartialEq)]
pub struct DeletionOperator {
    w_d: Vec<Tensor>,
    masks: Vec<Arc<[bool]>>,
    mode: OperatorMode,
    activation: Activation,
    num_layers: usize,
}

/// 1-based layer indices that carry a map under `mode`.
pub fn active_layers(mode: OperatorMode, num_layers: usize) -> Vec<usize> {
    match mode {
        OperatorMode::LayerWise => (1..=num_layers).collect(),
        OperatorMode::LastLayerOnly => vec![num_layers],
    }
}

/// Layer-`l` mask: nodes within `l` hops of any seed, on the pre-deletion graph.
pub fn masks_around(g: &Graph, seeds: &NodeSet, num_layers: usize, mode: OperatorMode) -> Result<Vec<Vec<bool>>> {
    active_layers(mode, num_layers)
        .into_iter()
        .map(|l| Ok(khop_nodes(g, seeds, l)?.to_mask(g.num_nodes())))
        .collect()
}

/// Masks for unlearning `e_d`, computed on the original graph `g`.
pub fn build_masks(g: &Graph, e_d: &[Edge], num_layers: usize, mode: OperatorMode) -> Result<Vec<Vec<bool>>> {
    if e_d.is_empty() {
        return Err(Error::Argument("mask construction needs at least one deleted edge".into()));
    }
    masks_around(g, &endpoints(e_d), num_layers, mode)
}

impl DeletionOperator {
    /// Identity maps for every active layer of `base`, with the given masks.
    pub fn identity(
        base: &GnnModel,
        masks: Vec<Vec<bool>>,
        mode: OperatorMode,
        activation: Activation,
    ) -> Result<Self> {
        let dims = base.layer_dims();
        let layers = active_layers(mode, base.num_layers());
        if masks.len() != layers.len() {
            return Err(Error::Argument(format!(
                "{} masks for {} active layers",
                masks.len(),
                layers.len()
            )));
        }
        let w_d = layers.iter().map(|&l| Tensor::identity(dims[l])).collect();
        Ok(DeletionOperator {
            w_d,
            masks: masks.into_iter().map(Arc::from).collect(),
            mode,
            activation,
            num_layers: base.num_layers(),
        })
    }

    /// Identity operator whose masks cover nothing.
    pub fn inactive(base: &GnnModel, num_nodes: usize, mode: OperatorMode, activation: Activation) -> Result<Self> {
        let masks = vec![vec![false; num_nodes]; active_layers(mode, base.num_layers()).len()];
        DeletionOperator::identity(base, masks, mode, activation)
    }

    pub fn mode(&self) -> OperatorMode {
        self.mode
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Tensor] {
        &self.w_d
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Tensor] {
        &mut self.w_d
    }

    pub fn masks(&self) -> &[Arc<[bool]>] {
        &self.masks
    }

    pub fn set_masks(&mut self, masks: Vec<Vec<bool>>) -> Result<()> {
        if masks.len() != self.w_d.len() {
            return Err(Error::Argument(format!(
                "{} masks for {} operator layers",
                masks.len(),
                self.w_d.len()
            )));
        }
        self.masks = masks.into_iter().map(Arc::from).collect();
        Ok(())
    }

    pub fn active_layers(&self) -> Vec<usize> {
        active_layers(self.mode, self.num_layers)
    }

    /// Position of layer `l` (1-based) in the operator's lists.
    pub fn slot(&self, l: usize) -> Option<usize> {
        self.active_layers().iter().position(|&a| a == l)
    }

    /// Σ_l d_l² over active layers.
    pub fn param_count(&self) -> usize {
        self.w_d.iter().map(Tensor::len).sum()
    }

    /// Matrices, then `mode: u8 | activation: u8 | layers: u32 | masks: u32 |
    /// nodes: u32 | ⌈nodes/8⌉ bitmap bytes per mask` (bit `i % 8` of byte `i / 8`).
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        let refs: Vec<&Tensor> = self.w_d.iter().collect();
        write_matrices(w, &refs)?;
        w.write_all(&[
            match self.mode {
                OperatorMode::LayerWise => 0,
                OperatorMode::LastLayerOnly => 1,
            },
            match self.activation {
                Activation::Linear => 0,
                Activation::Sigmoid => 1,
            },
        ])?;
        write_u32(w, self.num_layers)?;
        write_u32(w, self.masks.len())?;
        let n = self.masks.first().map_or(0, |m| m.len());
        write_u32(w, n)?;
        for mask in &self.masks {
            let mut bytes = vec![0u8; n.div_ceil(8)];
            for (i, _) in mask.iter().enumerate().filter(|(_, &b)| b) {
                bytes[i / 8] |= 1 << (i % 8);
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self> {
        let w_d = read_matrices(r)?;
        let mode = match read_u8(r)? {
            0 => OperatorMode::LayerWise,
            1 => OperatorMode::LastLayerOnly,
            x => return Err(Error::Checkpoint(format!("bad mode byte {x}"))),
        };
        let activation = match read_u8(r)? {
            0 => Activation::Linear,
            1 => Activation::Sigmoid,
            x => return Err(Error::Checkpoint(format!("bad activation byte {x}"))),
        };
        let num_layers = read_u32(r)? as usize;
        let count = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        if count != w_d.len() || active_layers(mode, num_layers).len() != count {
            return Err(Error::Checkpoint("mask count does not match operator layers".into()));
        }
        let mut masks = Vec::with_capacity(count);
        for _ in 0..count {
            let mut bytes = vec![0u8; n.div_ceil(8)];
            r.read_exact(&mut bytes)?;
            let mask: Vec<bool> = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
            masks.push(Arc::from(mask));
        }
        Ok(DeletionOperator {
            w_d,
            masks,
            mode,
            activation,
            num_layers,
        })
    }
}

/// Records `DEL` on the tape: masked rows become `act(h_row · W_D)`. Only
/// the masked rows are multiplied.
pub fn del_forward_on_tape(
    tape: &mut Tape,
    h: Var,
    mask: &Arc<[bool]>,
    w_d: Var,
    activation: Activation,
) -> Result<Var> {
    let (rows, cols) = (tape.value(h).rows(), tape.value(h).cols());
    let w_shape = tape.value(w_d).shape();
    if mask.len() != rows || w_shape != [cols, cols] {
        return Err(Error::shape(
            "del_forward",
            format!("mask {} with h {rows}x{cols} and W_D {w_shape:?}", mask.len()),
        ));
    }
    let ids: Arc<[usize]> = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    if ids.is_empty() {
        return Ok(h);
    }
    let picked = tape.gather_rows(h, Arc::clone(&ids))?;
    let hw = tape.matmul(picked, w_d)?;
    let transformed = match activation {
        Activation::Linear => hw,
        Activation::Sigmoid => tape.sigmoid(hw),
    };
    tape.scatter_rows(h, ids, transformed)
}

/// Eager form of [`del_forward_on_tape`].
pub fn del_forward(h: &Tensor, mask: &[bool], w_d: &Tensor, activation: Activation) -> Result<Tensor> {
    if h.cols() != w_d.rows() || w_d.rows() != w_d.cols() {
        return Err(Error::shape(
            "del_forward",
            format!("h {:?} with W_D {:?}", h.shape(), w_d.shape()),
        ));
    }
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let wv = tape.constant(w_d.clone());
    let mask: Arc<[bool]> = Arc::from(mask);
    let out = del_forward_on_tape(&mut tape, hv, &mask, wv, activation)?;
    tape.check_finite()?;
    Ok(tape.value(out).clone())
}

/// Frozen base model, deletion operator and the post-deletion graph.
#[derive(Clone, Debug)]
pub struct UnlearnedModel {
    pub base: GnnModel,
    pub op: DeletionOperator,
    pub graph_r: Graph,
}

fn check_masks(ops: &GraphOperands, op: &DeletionOperator) -> Result<()> {
    for mask in op.masks() {
        if mask.len() != ops.num_nodes() {
            return Err(Error::shape(
                "unlearned_forward",
                format!("mask covers {} nodes, graph has {}", mask.len(), ops.num_nodes()),
            ));
        }
    }
    Ok(())
}

/// Layer hook inserting the operator after each active layer. With
/// `isolate`, each operator's input is detached so a layer's map only sees
/// gradients from losses placed on its own output.
fn del_hook<'a>(
    op: &'a DeletionOperator,
    w_d: &'a [Var],
    isolate: bool,
) -> impl FnMut(&mut Tape, usize, Var) -> Result<Var> + 'a {
    move |tape, l, h| match op.slot(l) {
        Some(s) => {
            let input = if isolate { tape.detach(h) } else { h };
            del_forward_on_tape(tape, input, &op.masks()[s], w_d[s], op.activation())
        }
        None => Ok(h),
    }
}

/// Records the base layers on `ops` with the operator inserted after each
/// active layer.
pub(crate) fn unlearned_forward_on_tape(
    tape: &mut Tape,
    ops: &GraphOperands,
    base: &GnnModel,
    op: &DeletionOperator,
    w_d: &[Var],
    isolate: bool,
) -> Result<Vec<Var>> {
    check_masks(ops, op)?;
    let weights: Vec<Var> = base.weights().iter().map(|w| tape.constant(w.clone())).collect();
    forward_on_tape(tape, ops, &weights, del_hook(op, w_d, isolate))
}

/// Output of base layer `layer` on `ops` before any operator is applied,
/// where `layer` is the first active operator layer. It does not depend on
/// the operator weights.
pub(crate) fn first_active_input(ops: &GraphOperands, base: &GnnModel, layer: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let weights: Vec<Var> = base.weights().iter().map(|w| tape.constant(w.clone())).collect();
    let mut raw = None;
    forward_on_tape(&mut tape, ops, &weights, |tape, l, h| {
        if l == layer {
            raw = Some(tape.value(h).clone());
        }
        Ok(h)
    })?;
    raw.ok_or_else(|| Error::Argument(format!("layer {layer} is beyond the model")))
}

/// Like [`unlearned_forward_on_tape`] but starting from `raw`, the
/// pre-operator output of layer `layer` (see [`first_active_input`]).
/// Returns the outputs of layers `layer..=L`.
pub(crate) fn unlearned_resume_on_tape(
    tape: &mut Tape,
    ops: &GraphOperands,
    base: &GnnModel,
    op: &DeletionOperator,
    w_d: &[Var],
    layer: usize,
    raw: Var,
    isolate: bool,
) -> Result<Vec<Var>> {
    check_masks(ops, op)?;
    // layers before `layer` are never read
    let weights: Vec<Var> = base
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i < layer {
                tape.constant(Tensor::zeros(0, 0))
            } else {
                tape.constant(w.clone())
            }
        })
        .collect();
    resume_forward_on_tape(tape, ops, &weights, layer, raw, del_hook(op, w_d, isolate))
}

/// Embeddings of the unlearned model on its post-deletion graph.
pub fn unlearned_forward(um: &UnlearnedModel) -> Result<NodeEmbeddings> {
    unlearned_forward_with(&GraphOperands::new(&um.graph_r), &um.base, &um.op)
}

pub fn unlearned_forward_with(ops: &GraphOperands, base: &GnnModel, op: &DeletionOperator) -> Result<NodeEmbeddings> {
    let mut tape = Tape::new();
    let w_d: Vec<Var> = op.weights().iter().map(|w| tape.constant(w.clone())).collect();
    let outs = unlearned_forward_on_tape(&mut tape, ops, base, op, &w_d, false)?;
    tape.check_finite()?;
    Ok(NodeEmbeddings::new(
        outs.into_iter().map(|v| tape.value(v).clone()).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward;

    fn path(n: usize) -> Graph {
        let rows: Vec<Edge> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::from_edge_list(n, &rows).unwrap().0
    }

    #[test]
    fn path_masks_by_hop() {
        let g = path(5);
        let masks = build_masks(&g, &[(2, 3)], 2, OperatorMode::LayerWise).unwrap();
        assert_eq!(NodeSet::from_mask(&masks[0]).as_slice(), &[1, 2, 3, 4]);
        assert_eq!(NodeSet::from_mask(&masks[1]).as_slice(), &[0, 1, 2, 3, 4]);
        let last = build_masks(&g, &[(2, 3)], 2, OperatorMode::LastLayerOnly).unwrap();
        assert_eq!(last, vec![masks[1].clone()]);
        assert!(build_masks(&g, &[], 2, OperatorMode::LayerWise).is_err());
    }

    #[test]
    fn del_forward_identity_cases() {
        let h = Tensor::from_vec(3, 2, vec![1.0, -2.0, 0.5, 3.0, -1.5, 0.25]).unwrap();
        let w = Tensor::from_rows(&[vec![0.3, 1.0], vec![-2.0, 0.7]]).unwrap();
        assert_eq!(del_forward(&h, &[false; 3], &w, Activation::Sigmoid).unwrap(), h);
        assert_eq!(
            del_forward(&h, &[true, false, true], &Tensor::identity(2), Activation::Linear).unwrap(),
            h
        );
        assert!(del_forward(&h, &[true; 3], &Tensor::identity(3), Activation::Linear).is_err());
    }

    #[test]
    fn param_count_sums_squares() {
        let base = GnnModel::init(&[10, 64, 32], 0).unwrap();
        let lw = DeletionOperator::inactive(&base, 5, OperatorMode::LayerWise, Activation::Linear).unwrap();
        assert_eq!(lw.param_count(), 5120);
        let last = DeletionOperator::inactive(&base, 5, OperatorMode::LastLayerOnly, Activation::Linear).unwrap();
        assert_eq!(last.param_count(), 1024);
        let big = DeletionOperator::inactive(&base, 5000, OperatorMode::LayerWise, Activation::Linear).unwrap();
        assert_eq!(big.param_count(), 5120);
    }

    #[test]
    fn identity_operator_reproduces_base() {
        let g = path(6)
            .with_dense_features(&Tensor::from_vec(6, 2, (0..12).map(|x| f64::from(x) * 0.1 - 0.4).collect()).unwrap())
            .unwrap();
        let base = GnnModel::init(&[2, 4, 3], 9).unwrap();
        let masks = build_masks(&g, &[(1, 2)], 2, OperatorMode::LayerWise).unwrap();
        let op = DeletionOperator::identity(&base, masks, OperatorMode::LayerWise, Activation::Linear).unwrap();
        let um = UnlearnedModel {
            base: base.clone(),
            op,
            graph_r: g.clone(),
        };
        assert_eq!(unlearned_forward(&um).unwrap(), forward(&g, &base).unwrap());
    }

    #[test]
    fn resumed_forward_matches_full_forward() {
        let g = path(7)
            .with_dense_features(&Tensor::from_vec(7, 2, (0..14).map(|x| f64::from(x % 5) * 0.3 - 0.5).collect()).unwrap())
            .unwrap();
        let base = GnnModel::init(&[2, 4, 3, 3], 4).unwrap();
        for mode in [OperatorMode::LayerWise, OperatorMode::LastLayerOnly] {
            let masks = build_masks(&g, &[(2, 3)], 3, mode).unwrap();
            let mut op = DeletionOperator::identity(&base, masks, mode, Activation::Sigmoid).unwrap();
            for w in op.weights_mut() {
                w.set(0, 1, 0.7);
            }
            let ops = GraphOperands::new(&g);
            let full = unlearned_forward_with(&ops, &base, &op).unwrap();
            let first = op.active_layers()[0];
            let mut tape = Tape::new();
            let raw = tape.constant(first_active_input(&ops, &base, first).unwrap());
            let w_d: Vec<Var> = op.weights().iter().map(|w| tape.constant(w.clone())).collect();
            let outs = unlearned_resume_on_tape(&mut tape, &ops, &base, &op, &w_d, first, raw, true).unwrap();
            for (i, v) in outs.iter().enumerate() {
                assert_eq!(tape.value(*v), full.layer(first + i));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let base = GnnModel::init(&[3, 4, 2], 1).unwrap();
        let g = path(11);
        let masks = build_masks(&g, &[(4, 5)], 2, OperatorMode::LayerWise).unwrap();
        let mut op = DeletionOperator::identity(&base, masks, OperatorMode::LayerWise, Activation::Sigmoid).unwrap();
        op.weights_mut()[1].set(0, 1, -0.125);
        let mut buf = Vec::new();
        op.save(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"GNND");
        assert_eq!(DeletionOperator::load(&mut buf.as_slice()).unwrap(), op);
    }
}
