//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use graph_unlearn::graph::{canonical, endpoints, negative_sample};
use graph_unlearn::model::{forward, forward_on_tape, GraphOperands};
use graph_unlearn::synthetic::{generate_synthetic, FeatureKind, SyntheticGraph};
use graph_unlearn::tensor::{finite_diff_check, Tape, Var};
use graph_unlearn::unlearn::{
    build_masks, del_forward_on_tape, dec_loss_on_tape, ni_loss_on_tape, ni_node_ids, Activation, OperatorMode,
};
use graph_unlearn::{Edge, GnnModel, Graph, Result, SparseMatrix, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn erdos_renyi(n: usize, p: f64, features: FeatureKind, seed: u64) -> Graph {
    generate_synthetic(&SyntheticGraph::ErdosRenyi { n, p }, features, seed).unwrap()
}

/// Two `per`-node cliques joined by one bridge edge, Gaussian features.
pub fn two_cliques(per: usize, seed: u64) -> Graph {
    generate_synthetic(
        &SyntheticGraph::TwoCliques {
            per_clique: per,
            bridges: 1,
        },
        FeatureKind::Gaussian(16),
        seed,
    )
    .unwrap()
}

pub fn dense_adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut a = vec![vec![false; n]; n];
    for u in 0..n {
        for &v in g.neighbors(u) {
            a[u][v] = true;
        }
    }
    a
}

pub fn edge_set(g: &Graph) -> BTreeSet<Edge> {
    let a = dense_adjacency(g);
    let mut s = BTreeSet::new();
    for (u, row) in a.iter().enumerate() {
        for (v, &x) in row.iter().enumerate() {
            if x && u < v {
                s.insert((u, v));
            }
        }
    }
    s
}

/// All-pairs hop distances; `usize::MAX` when unreachable.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (u, row) in dense_adjacency(g).iter().enumerate() {
        d[u][u] = 0;
        for (v, &x) in row.iter().enumerate() {
            if x {
                d[u][v] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

pub fn within_hops(dist: &[Vec<usize>], seeds: &[usize], k: usize) -> Vec<usize> {
    (0..dist.len())
        .filter(|&w| seeds.iter().any(|&s| dist[s][w] <= k))
        .collect()
}

/// Dense `D̃^{-1/2}(A+I)D̃^{-1/2}`.
pub fn dense_normalized_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let a = dense_adjacency(g);
    let n = a.len();
    let deg: Vec<f64> = a.iter().map(|r| 1.0 + r.iter().filter(|&&x| x).count() as f64).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || a[i][j] {
                out[i][j] = 1.0 / (deg[i] * deg[j]).sqrt();
            }
        }
    }
    out
}

/// Pairwise AUROC: wins plus half ties over all positive/negative pairs.
pub fn auroc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Average precision from an explicit precision/recall sweep over every
/// distinct threshold, each point recomputed from scratch.
pub fn auprc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut predicted = 0.0;
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if l {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        area += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    area
}

/// Random scores (rounded to force ties) with both classes present.
pub fn random_scored(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    loop {
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 50.0).round() / 50.0).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            return (scores, labels);
        }
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Entries bounded away from zero so ReLU's kink is never straddled.
pub fn off_zero_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> SparseMatrix {
    let mut trip = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(density) {
                trip.push((r, c, rng.random_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, &trip).unwrap()
}

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

/// Reduces a tensor-valued output to a scalar through an MSE against a fixed
/// random target, so every output entry contributes a distinct weight.
fn reduce(tape: &mut Tape, out: Var, target: &Tensor) -> Result<Var> {
    let t = tape.constant(target.clone());
    tape.mse(out, t)
}

/// Random instance of a small unlearning problem for the loss checks.
pub struct LossFixture {
    pub g: Graph,
    pub base: GnnModel,
    pub e_d: Vec<Edge>,
    pub pairs: Vec<Edge>,
    pub masks: Vec<Arc<[bool]>>,
    pub w_d: Vec<Tensor>,
    pub activation: Activation,
}

impl LossFixture {
    pub fn new(seed: u64) -> Self {
        let mut r = rng(seed);
        let g = erdos_renyi(20, 0.2, FeatureKind::Gaussian(6), seed);
        let base = GnnModel::init(&[6, 5, 4], seed).unwrap();
        let edges = g.edges();
        let e_d: Vec<Edge> = (0..3).map(|i| edges[(i * 7 + seed as usize) % edges.len()]).collect::<BTreeSet<_>>().into_iter().collect();
        let pairs = negative_sample(&g, e_d.len() * 2, &[], seed).unwrap();
        let masks = build_masks(&g, &e_d, 2, OperatorMode::LayerWise)
            .unwrap()
            .into_iter()
            .map(Arc::from)
            .collect();
        let w_d = [5, 4]
            .iter()
            .map(|&d| {
                let mut w = Tensor::identity(d);
                let noise = random_tensor(&mut r, d, d);
                for (a, b) in w.data_mut().iter_mut().zip(noise.data()) {
                    *a += 0.3 * b;
                }
                w
            })
            .collect();
        let activation = if seed % 2 == 0 { Activation::Linear } else { Activation::Sigmoid };
        LossFixture {
            g,
            base,
            e_d,
            pairs,
            masks,
            w_d,
            activation,
        }
    }

    /// Layer-`l` output of the unlearned model on `G_r`, with `x` standing in
    /// for `W_D^l` and the other maps held constant.
    pub fn layer_output(&self, tape: &mut Tape, l: usize, x: Var) -> Result<Var> {
        let g_r = graph_unlearn::graph::delete_edges(&self.g, &self.e_d)?;
        let ops = GraphOperands::new(&g_r);
        let weights: Vec<Var> = self.base.weights().iter().map(|w| tape.constant(w.clone())).collect();
        let w_d: Vec<Var> = (1..=2)
            .map(|k| if k == l { x } else { tape.constant(self.w_d[k - 1].clone()) })
            .collect();
        let outs = forward_on_tape(tape, &ops, &weights, |tape, k, h| {
            let input = tape.detach(h);
            del_forward_on_tape(tape, input, &self.masks[k - 1], w_d[k - 1], self.activation)
        })?;
        Ok(outs[l - 1])
    }
}

/// Worst finite-difference relative error per differentiable op and per loss
/// over `instances` random inputs each.
pub fn gradient_suite(instances: u64) -> Vec<(&'static str, f64)> {
    let mut results: Vec<(&'static str, f64)> = Vec::new();
    let mut record = |name: &'static str, err: f64| match results.iter_mut().find(|(n, _)| *n == name) {
        Some(entry) => entry.1 = entry.1.max(err),
        None => results.push((name, err)),
    };
    for i in 0..instances {
        let mut r = rng(1000 + i);
        let a = random_tensor(&mut r, 5, 4);
        let b = random_tensor(&mut r, 4, 3);
        let t53 = random_tensor(&mut r, 5, 3);
        let t54 = random_tensor(&mut r, 5, 4);
        let s = Arc::new(random_sparse(&mut r, 6, 5, 0.4));
        let ids: Vec<usize> = (0..7).map(|_| r.random_range(0..5)).collect();
        let mask: Vec<bool> = (0..5).map(|_| r.random_bool(0.5)).collect();
        let labels: Vec<f64> = (0..5).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let target64 = random_tensor(&mut r, 6, 4);
        let target58 = random_tensor(&mut r, 5, 8);
        let target74 = random_tensor(&mut r, 7, 4);
        let target51 = random_tensor(&mut r, 5, 1);
        let target2 = random_tensor(&mut r, 2, 4);
        let scatter_vals = random_tensor(&mut r, 2, 4);
        let relu_in = off_zero_tensor(&mut r, 5, 4);
        let check = |f: &dyn Fn(&mut Tape, Var) -> Result<Var>, x: &Tensor| {
            finite_diff_check(f, x, GRAD_EPS).unwrap()
        };

        record("matmul (left)", check(&|t, x| {
            let bv = t.constant(b.clone());
            let y = t.matmul(x, bv)?;
            reduce(t, y, &t53)
        }, &a));
        record("matmul (right)", check(&|t, x| {
            let av = t.constant(a.clone());
            let y = t.matmul(av, x)?;
            reduce(t, y, &t53)
        }, &b));
        record("spmm", check(&|t, x| {
            let y = t.spmm(&s, x)?;
            reduce(t, y, &target64)
        }, &a));
        record("sigmoid", check(&|t, x| {
            let y = t.sigmoid(x);
            reduce(t, y, &t54)
        }, &a));
        record("relu", check(&|t, x| {
            let y = t.relu(x);
            reduce(t, y, &t54)
        }, &relu_in));
        record("add", check(&|t, x| {
            let c = t.constant(t54.clone());
            let y = t.add(x, c)?;
            let z = t.add(y, x)?;
            reduce(t, z, &t54)
        }, &a));
        record("scale", check(&|t, x| {
            let y = t.scale(x, -1.7);
            reduce(t, y, &t54)
        }, &a));
        record("concat_cols", check(&|t, x| {
            let c = t.constant(t54.clone());
            let y = t.concat_cols(x, c)?;
            let z = t.concat_cols(c, x)?;
            let w = t.add(y, z)?;
            reduce(t, w, &target58)
        }, &a));
        record("gather_rows", check(&|t, x| {
            let y = t.gather_rows(x, ids.clone())?;
            reduce(t, y, &target74)
        }, &a));
        record("rowwise_dot", check(&|t, x| {
            let c = t.constant(t54.clone());
            let y = t.rowwise_dot(x, c)?;
            let z = t.rowwise_dot(x, x)?;
            let w = t.add(y, z)?;
            reduce(t, w, &target51)
        }, &a));
        record("select_rows", check(&|t, x| {
            let c = t.constant(t54.clone());
            let y = t.select_rows(mask.clone(), x, c)?;
            let z = t.select_rows(mask.clone(), c, x)?;
            let w = t.add(y, z)?;
            reduce(t, w, &t54)
        }, &a));
        record("scatter_rows (base)", check(&|t, x| {
            let v = t.constant(scatter_vals.clone());
            let y = t.scatter_rows(x, vec![3, 1], v)?;
            reduce(t, y, &t54)
        }, &a));
        record("scatter_rows (values)", check(&|t, x| {
            let base = t.constant(t54.clone());
            let y = t.scatter_rows(base, vec![0, 4], x)?;
            reduce(t, y, &t54)
        }, &target2));
        record("mse", check(&|t, x| {
            let c = t.constant(t54.clone());
            t.mse(x, c)
        }, &a));
        record("bce_with_logits", check(&|t, x| t.bce_with_logits(x, labels.clone()), &target51.scale(3.0)));

        let fx = LossFixture::new(i);
        let base_emb = forward(&fx.g, &fx.base).unwrap();
        for l in 1..=2 {
            let dec = check(&|t, x| {
                let h = fx.layer_output(t, l, x)?;
                dec_loss_on_tape(t, h, base_emb.layer(l), &fx.e_d, &fx.pairs)
            }, &fx.w_d[l - 1]);
            record("dec_loss", dec);
            let ids = ni_node_ids(&fx.g, &fx.e_d, l).unwrap();
            let ni = check(&|t, x| {
                let h = fx.layer_output(t, l, x)?;
                ni_loss_on_tape(t, h, base_emb.layer(l), &ids)
            }, &fx.w_d[l - 1]);
            record("ni_loss", ni);
        }
    }
    results
}

/// Edges of `g` whose endpoints are both outside `nodes`.
pub fn edges_outside(g: &Graph, nodes: &[usize]) -> Vec<Edge> {
    let set: BTreeSet<usize> = nodes.iter().copied().collect();
    g.edges()
        .into_iter()
        .filter(|&(u, v)| !set.contains(&u) && !set.contains(&v))
        .collect()
}

pub fn endpoint_ids(edges: &[Edge]) -> Vec<usize> {
    endpoints(edges).iter().collect()
}

pub fn canon(u: usize, v: usize) -> Edge {
    canonical(u, v)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Number of sampled `(z_u, z_v, W_D)` instances at width `d` on which the
/// dot-product bound fails.
pub fn bound_violations(d: usize, count: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    (0..count)
        .filter(|_| {
            let zu = normal_vec(&mut r, d);
            let zv = normal_vec(&mut r, d);
            let w = Tensor::from_vec(d, d, normal_vec(&mut r, d * d)).unwrap();
            !graph_unlearn::metrics::deletion_bound_check(&zu, &zv, &w).unwrap().holds
        })
        .count()
}

/// Largest deviation of auroc and auprc from their brute-force oracles over
/// `instances` random tie-heavy inputs.
pub fn metric_oracle_errors(instances: u64) -> (f64, f64) {
    let mut worst = (0.0f64, 0.0f64);
    for i in 0..instances {
        let mut r = rng(500 + i);
        let n = r.random_range(2..200);
        let (scores, labels) = random_scored(&mut r, n);
        let a = graph_unlearn::metrics::auroc(&scores, &labels).unwrap();
        let p = graph_unlearn::metrics::auprc(&scores, &labels).unwrap();
        worst.0 = worst.0.max((a - auroc_oracle(&scores, &labels)).abs());
        worst.1 = worst.1.max((p - auprc_oracle(&scores, &labels)).abs());
    }
    worst
}

/// Base model trained on a two-clique graph and an operator that unlearns
/// the bridge between the cliques.
pub struct BridgeRun {
    pub g_train: Graph,
    pub g_r: Graph,
    pub split: graph_unlearn::EdgeSplit,
    pub bridge: Edge,
    pub base: GnnModel,
    pub op: graph_unlearn::DeletionOperator,
    pub before: graph_unlearn::NodeEmbeddings,
    pub after: graph_unlearn::NodeEmbeddings,
}

pub fn bridge_run(seed: u64, cfg: &graph_unlearn::UnlearnConfig) -> BridgeRun {
    use graph_unlearn::graph::{delete_edges, split_edges};
    use graph_unlearn::model::{train_base, TrainConfig};
    use graph_unlearn::unlearn::{unlearn, unlearned_forward, UnlearnedModel};

    let per = 20;
    let g = two_cliques(per, seed);
    let bridge = g.edges().into_iter().find(|&(u, v)| u < per && v >= per).unwrap();
    let split = (0..)
        .map(|s| split_edges(&g, 0.1, 0.05, seed * 1000 + s).unwrap())
        .find(|s| s.train.contains(&bridge))
        .unwrap();
    let g_train = g.with_edges(&split.remaining).unwrap();
    let tc = TrainConfig {
        hidden_dims: vec![32, 16],
        seed,
        ..TrainConfig::default()
    };
    let base = train_base(&g_train, &split, &tc).unwrap();
    let (op, _) = unlearn(&base, &g_train, &[bridge], cfg).unwrap();
    let g_r = delete_edges(&g_train, &[bridge]).unwrap();
    let before = forward(&g_train, &base).unwrap();
    let after = unlearned_forward(&UnlearnedModel {
        base: base.clone(),
        op: op.clone(),
        graph_r: g_r.clone(),
    })
    .unwrap();
    BridgeRun {
        g_train,
        g_r,
        split,
        bridge,
        base,
        op,
        before,
        after,
    }
}
