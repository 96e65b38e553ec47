//! Deleted-edge-consistency and neighborhood-influence losses.

use crate::error::{Error, Result};
use crate::graph::{khop_nodes, Edge, Graph};
use crate::model::{GraphOperands, NodeEmbeddings};
use crate::tensor::{Tape, Tensor, Var};
use crate::unlearn::operator::{unlearned_forward_with, UnlearnedModel};

/// Rows `ids` of `t`, copied.
pub(crate) fn take_rows(t: &Tensor, ids: impl Iterator<Item = usize>) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut rows = 0;
    for i in ids {
        if i >= t.rows() {
            return Err(Error::Index {
                what: "rows",
                index: i,
                len: t.rows(),
            });
        }
        data.extend_from_slice(t.row(i));
        rows += 1;
    }
    Tensor::from_vec(rows, t.cols(), data)
}

/// `[h_u; h_v]` stacked over `pairs`.
pub(crate) fn pair_concat(t: &Tensor, pairs: &[Edge]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(pairs.len() * 2 * t.cols());
    for &(u, v) in pairs {
        for i in [u, v] {
            if i >= t.rows() {
                return Err(Error::Index {
                    what: "rows",
                    index: i,
                    len: t.rows(),
                });
            }
        }
        data.extend_from_slice(t.row(u));
        data.extend_from_slice(t.row(v));
    }
    Tensor::from_vec(pairs.len(), 2 * t.cols(), data)
}

/// MSE between `[h'_u; h'_v]` over deleted edges and the detached base
/// representations `[h_p; h_q]` of random pairs. `pairs` holds
/// `pairs_per_edge` pairs per deleted edge; each deleted edge's
/// representation is repeated to line up with its pairs.
pub fn dec_loss_on_tape(
    tape: &mut Tape,
    h_prime: Var,
    base_layer: &Tensor,
    e_d: &[Edge],
    pairs: &[Edge],
) -> Result<Var> {
    if e_d.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    if pairs.is_empty() || pairs.len() % e_d.len() != 0 {
        return Err(Error::Argument(format!(
            "{} random pairs cannot be split evenly over {} deleted edges",
            pairs.len(),
            e_d.len()
        )));
    }
    let reps = pairs.len() / e_d.len();
    let (us, vs): (Vec<usize>, Vec<usize>) = (0..reps).flat_map(|_| e_d.iter().copied()).unzip();
    let hu = tape.gather_rows(h_prime, us)?;
    let hv = tape.gather_rows(h_prime, vs)?;
    let pred = tape.concat_cols(hu, hv)?;
    let target = tape.constant(pair_concat(base_layer, pairs)?);
    tape.mse(pred, target)
}

/// Concatenation, over deleted edges, of the id-sorted `l`-hop node set of
/// each edge on the original graph.
pub fn ni_node_ids(g: &Graph, e_d: &[Edge], l: usize) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for &(u, v) in e_d {
        let seeds = [u, v].into_iter().collect();
        ids.extend(khop_nodes(g, &seeds, l)?.iter());
    }
    Ok(ids)
}

/// MSE between the unlearned and detached base representations over the
/// concatenated neighborhoods `ids` (see [`ni_node_ids`]).
pub fn ni_loss_on_tape(tape: &mut Tape, h_prime: Var, base_layer: &Tensor, ids: &[usize]) -> Result<Var> {
    if ids.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let pred = tape.gather_rows(h_prime, ids.to_vec())?;
    let target = tape.constant(take_rows(base_layer, ids.iter().copied())?);
    tape.mse(pred, target)
}

fn layer_output(um: &UnlearnedModel, l: usize) -> Result<Tensor> {
    if l == 0 || l > um.base.num_layers() {
        return Err(Error::Index {
            what: "layers",
            index: l,
            len: um.base.num_layers(),
        });
    }
    let emb = unlearned_forward_with(&GraphOperands::new(&um.graph_r), &um.base, &um.op)?;
    Ok(emb.layer(l).clone())
}

/// Deleted-edge-consistency loss at layer `l`.
pub fn dec_loss(
    l: usize,
    um: &UnlearnedModel,
    base_emb: &NodeEmbeddings,
    e_d: &[Edge],
    pairs: &[Edge],
) -> Result<f64> {
    let h = layer_output(um, l)?;
    let mut tape = Tape::new();
    let hv = tape.constant(h);
    let loss = dec_loss_on_tape(&mut tape, hv, base_emb.layer(l), e_d, pairs)?;
    Ok(tape.value(loss).item())
}

/// Neighborhood-influence loss at layer `l`; neighborhoods come from `g`,
/// the graph before deletion.
pub fn ni_loss(l: usize, um: &UnlearnedModel, base_emb: &NodeEmbeddings, g: &Graph, e_d: &[Edge]) -> Result<f64> {
    let h = layer_output(um, l)?;
    let ids = ni_node_ids(g, e_d, l)?;
    let mut tape = Tape::new();
    let hv = tape.constant(h);
    let loss = ni_loss_on_tape(&mut tape, hv, base_emb.layer(l), &ids)?;
    Ok(tape.value(loss).item())
}
