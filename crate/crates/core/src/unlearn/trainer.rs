use std::collections::BTreeSet;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{delete_edges, delete_nodes, endpoints, negative_sample, Edge, Graph, NodeSet};
use crate::model::{forward, GnnModel, GraphOperands, NodeEmbeddings};
use crate::tensor::{Optimizer, OptimizerKind, Tape, Tensor, Var};
use crate::unlearn::losses::{dec_loss_on_tape, ni_loss_on_tape, ni_node_ids};
use crate::unlearn::operator::{
    active_layers, first_active_input, masks_around, unlearned_resume_on_tape, Activation, DeletionOperator, OperatorMode,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnConfig {
    /// Weight of the deleted-edge-consistency term; `1 − lambda` goes to
    /// neighborhood influence.
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub random_pair_seed: u64,
    pub pairs_per_deleted_edge: usize,
    pub mode: OperatorMode,
    pub activation: Activation,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            lambda: 0.5,
            epochs: 200,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            random_pair_seed: 0,
            pairs_per_deleted_edge: 1,
            mode: OperatorMode::LayerWise,
            activation: Activation::Linear,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("unlearning lr {} must be positive", self.lr)));
        }
        if self.pairs_per_deleted_edge == 0 {
            return Err(Error::Config("pairs_per_deleted_edge must be at least 1".into()));
        }
        Ok(())
    }
}

/// Loss series of one operator layer, one entry per epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerLosses {
    pub layer: usize,
    pub dec: Vec<f64>,
    pub ni: Vec<f64>,
    pub total: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub layers: Vec<LayerLosses>,
}

/// Everything one unlearning pass needs besides the operator itself.
struct Problem<'a> {
    base: &'a GnnModel,
    /// Graph before deletion: neighborhoods, random pairs and targets.
    g: &'a Graph,
    base_emb: &'a NodeEmbeddings,
    /// Graph the unlearned model runs on.
    ops_r: GraphOperands,
    e_d: Vec<Edge>,
    /// Extra seeds whose neighborhoods are masked besides `e_d`'s endpoints.
    extra_seeds: NodeSet,
    batch: u64,
}

fn pair_seed(base: u64, batch: u64, epoch: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(batch.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(epoch)
}

fn run_epochs(p: &Problem<'_>, op: &mut DeletionOperator, cfg: &UnlearnConfig, report: &mut LossReport) -> Result<()> {
    let layers = active_layers(cfg.mode, p.base.num_layers());
    let seeds: NodeSet = endpoints(&p.e_d).iter().chain(p.extra_seeds.iter()).collect();
    op.set_masks(masks_around(p.g, &seeds, p.base.num_layers(), cfg.mode)?)?;
    if report.layers.is_empty() {
        report.layers = layers.iter().map(|&l| LayerLosses { layer: l, ..Default::default() }).collect();
    }
    let ni_ids: Vec<Vec<usize>> = layers
        .iter()
        .map(|&l| ni_node_ids(p.g, &p.e_d, l))
        .collect::<Result<_>>()?;
    let n_pairs = p.e_d.len() * cfg.pairs_per_deleted_edge;
    let first = layers[0];
    let prefix = first_active_input(&p.ops_r, p.base, first)?;

    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut tape = Tape::new();
    for epoch in 0..cfg.epochs {
        tape.reset();
        let pairs = if n_pairs == 0 {
            Vec::new()
        } else {
            let seed = pair_seed(cfg.random_pair_seed, p.batch, epoch as u64);
            let mut pairs = negative_sample(p.g, n_pairs, &[], seed)?;
            // negative_sample returns pairs sorted
            pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5EED));
            pairs
        };
        let w_d: Vec<Var> = op.weights().iter().map(|w| tape.leaf(w.clone())).collect();
        let raw = tape.constant(prefix.clone());
        let outs = unlearned_resume_on_tape(&mut tape, &p.ops_r, p.base, op, &w_d, first, raw, true)?;

        let mut totals = Vec::with_capacity(layers.len());
        for (slot, &l) in layers.iter().enumerate() {
            let h = outs[l - first];
            let dec = dec_loss_on_tape(&mut tape, h, p.base_emb.layer(l), &p.e_d, &pairs)?;
            let ni = ni_loss_on_tape(&mut tape, h, p.base_emb.layer(l), &ni_ids[slot])?;
            let wd = tape.scale(dec, cfg.lambda);
            let wn = tape.scale(ni, 1.0 - cfg.lambda);
            let total = tape.add(wd, wn)?;
            let entry = &mut report.layers[slot];
            entry.dec.push(tape.value(dec).item());
            entry.ni.push(tape.value(ni).item());
            entry.total.push(tape.value(total).item());
            totals.push(total);
        }
        let mut loss = totals[0];
        for &t in &totals[1..] {
            loss = tape.add(loss, t)?;
        }
        let lv = tape.value(loss).item();
        if !lv.is_finite() {
            return Err(Error::Numeric(format!("unlearning loss diverged at epoch {epoch}")));
        }
        debug!("unlearn epoch {epoch}: loss {lv:.6}");
        if p.e_d.is_empty() {
            continue;
        }
        tape.backward(loss)?;
        let grads: Vec<Tensor> = w_d
            .iter()
            .zip(op.weights())
            .map(|(&v, w)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(w.rows(), w.cols())))
            .collect();
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        let mut params: Vec<&mut Tensor> = op.weights_mut().iter_mut().collect();
        opt.step(&mut params, &grad_refs)?;
    }
    if op.weights().iter().any(|w| !w.all_finite()) {
        return Err(Error::Numeric("deletion operator weights became non-finite".into()));
    }
    Ok(())
}

/// Trains a deletion operator that unlearns `e_d` from `base`. The base
/// model is never modified.
pub fn unlearn(base: &GnnModel, g: &Graph, e_d: &[Edge], cfg: &UnlearnConfig) -> Result<(DeletionOperator, LossReport)> {
    cfg.validate()?;
    let mut op = DeletionOperator::inactive(base, g.num_nodes(), cfg.mode, cfg.activation)?;
    let mut report = LossReport::default();
    if e_d.is_empty() {
        return Ok((op, report));
    }
    let base_emb = forward(g, base)?;
    let g_r = delete_edges(g, e_d)?;
    let problem = Problem {
        base,
        g,
        base_emb: &base_emb,
        ops_r: GraphOperands::new(&g_r),
        e_d: canonical_sorted(e_d),
        extra_seeds: NodeSet::new(),
        batch: 0,
    };
    run_epochs(&problem, &mut op, cfg, &mut report)?;
    Ok((op, report))
}

fn canonical_sorted(edges: &[Edge]) -> Vec<Edge> {
    let set: BTreeSet<Edge> = edges.iter().map(|&(u, v)| crate::graph::canonical(u, v)).collect();
    set.into_iter().collect()
}

/// Unlearns `batches` one after another with a single operator. Before batch
/// `i` the masks are rebuilt for the union of batches `0..=i` and the graph
/// loses that union; weights carry over between batches.
pub fn sequential_unlearn(
    base: &GnnModel,
    g: &Graph,
    batches: &[Vec<Edge>],
    cfg: &UnlearnConfig,
) -> Result<(DeletionOperator, LossReport)> {
    cfg.validate()?;
    let mut seen = BTreeSet::new();
    for (i, batch) in batches.iter().enumerate() {
        for &(u, v) in batch {
            if !seen.insert(crate::graph::canonical(u, v)) {
                return Err(Error::Argument(format!("edge ({u}, {v}) appears again in batch {i}")));
            }
        }
    }
    let mut op = DeletionOperator::inactive(base, g.num_nodes(), cfg.mode, cfg.activation)?;
    let mut report = LossReport::default();
    if batches.iter().all(Vec::is_empty) {
        return Ok((op, report));
    }
    let base_emb = forward(g, base)?;
    let mut cumulative: Vec<Edge> = Vec::new();
    for (i, batch) in batches.iter().enumerate() {
        cumulative.extend(batch.iter().copied());
        let e_d = canonical_sorted(&cumulative);
        let g_r = delete_edges(g, &e_d)?;
        let problem = Problem {
            base,
            g,
            base_emb: &base_emb,
            ops_r: GraphOperands::new(&g_r),
            e_d,
            extra_seeds: NodeSet::new(),
            batch: i as u64,
        };
        run_epochs(&problem, &mut op, cfg, &mut report)?;
    }
    Ok((op, report))
}

/// Node deletion: every incident edge of `nodes` becomes the deletion set.
/// Returns the operator and the post-deletion graph.
pub fn unlearn_nodes(
    base: &GnnModel,
    g: &Graph,
    nodes: &NodeSet,
    cfg: &UnlearnConfig,
) -> Result<(DeletionOperator, Graph, LossReport)> {
    let (g_r, e_d) = delete_nodes(g, nodes)?;
    let (op, report) = unlearn(base, g, &e_d, cfg)?;
    Ok((op, g_r, report))
}

/// Feature deletion: the rows of `nodes` are zeroed in the graph the
/// unlearned model runs on; edges are kept. Masks grow from `nodes` and the
/// losses use their incident edges. Returns the operator and that graph.
pub fn unlearn_node_features(
    base: &GnnModel,
    g: &Graph,
    nodes: &NodeSet,
    cfg: &UnlearnConfig,
) -> Result<(DeletionOperator, Graph, LossReport)> {
    cfg.validate()?;
    nodes.check_bounds(g.num_nodes())?;
    let g_r = g.with_zeroed_features(nodes)?;
    let mut incident: Vec<Edge> = nodes
        .iter()
        .flat_map(|u| g.neighbors(u).iter().map(move |&v| crate::graph::canonical(u, v)))
        .collect();
    incident.sort_unstable();
    incident.dedup();
    let base_emb = forward(g, base)?;
    let mut op = DeletionOperator::inactive(base, g.num_nodes(), cfg.mode, cfg.activation)?;
    let mut report = LossReport::default();
    let problem = Problem {
        base,
        g,
        base_emb: &base_emb,
        ops_r: GraphOperands::new(&g_r),
        e_d: incident,
        extra_seeds: nodes.clone(),
        batch: 0,
    };
    run_epochs(&problem, &mut op, cfg, &mut report)?;
    Ok((op, g_r, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_synthetic, FeatureKind, SyntheticGraph};

    fn fixture() -> (Graph, GnnModel) {
        let g = generate_synthetic(
            &SyntheticGraph::ErdosRenyi { n: 20, p: 0.25 },
            FeatureKind::Gaussian(3),
            4,
        )
        .unwrap();
        let base = GnnModel::init(&[3, 5, 4], 2).unwrap();
        (g, base)
    }

    fn small_cfg() -> UnlearnConfig {
        UnlearnConfig {
            epochs: 5,
            lr: 0.01,
            ..UnlearnConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let bad = UnlearnConfig {
            lambda: 1.5,
            ..UnlearnConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = UnlearnConfig {
            lr: 0.0,
            ..UnlearnConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_decomposes_totals() {
        let (g, base) = fixture();
        let e_d = g.edges()[..3].to_vec();
        let cfg = UnlearnConfig {
            lambda: 0.3,
            ..small_cfg()
        };
        let (_, report) = unlearn(&base, &g, &e_d, &cfg).unwrap();
        assert_eq!(report.layers.len(), 2);
        for layer in &report.layers {
            assert_eq!(layer.total.len(), cfg.epochs);
            for ((d, n), t) in layer.dec.iter().zip(&layer.ni).zip(&layer.total) {
                assert!((t - (0.3 * d + 0.7 * n)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn empty_deletion_is_identity() {
        let (g, base) = fixture();
        let (op, report) = unlearn(&base, &g, &[], &small_cfg()).unwrap();
        assert!(op.weights().iter().all(|w| *w == Tensor::identity(w.rows())));
        assert!(report.layers.is_empty());
        let (op, _) = sequential_unlearn(&base, &g, &[], &small_cfg()).unwrap();
        assert!(op.masks().iter().all(|m| m.iter().all(|&b| !b)));
    }

    #[test]
    fn overlapping_batches_rejected() {
        let (g, base) = fixture();
        let e = g.edges();
        let batches = vec![vec![e[0], e[1]], vec![e[1]]];
        assert!(matches!(
            sequential_unlearn(&base, &g, &batches, &small_cfg()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn base_weights_stay_frozen() {
        let (g, base) = fixture();
        let snapshot = base.clone();
        let e_d = g.edges()[..4].to_vec();
        let _ = unlearn(&base, &g, &e_d, &small_cfg()).unwrap();
        assert_eq!(base, snapshot);
    }
}
