//! Fixtures shared by the benchmarks.

use graph_unlearn::graph::{sample_deletion, split_edges, Locality};
use graph_unlearn::model::{train_base, TrainConfig};
use graph_unlearn::synthetic::{generate_synthetic, FeatureKind, SyntheticGraph};
use graph_unlearn::{EdgeSplit, GnnModel, Graph};

/// A preferential-attachment graph with a trained base model and a sampled
/// deletion set.
pub struct Workload {
    pub graph: Graph,
    pub split: EdgeSplit,
    pub base: GnnModel,
}

pub fn workload(nodes: usize, hidden_dims: &[usize], deletion_ratio: f64) -> Workload {
    let graph = generate_synthetic(
        &SyntheticGraph::BarabasiAlbert { n: nodes, m: 4 },
        FeatureKind::Gaussian(32),
        7,
    )
    .expect("generator arguments are valid");
    let split = split_edges(&graph, 0.05, 0.05, 7).expect("split fractions are valid");
    let cfg = TrainConfig {
        hidden_dims: hidden_dims.to_vec(),
        epochs: 5,
        seed: 7,
        ..TrainConfig::default()
    };
    let base = train_base(&graph, &split.with_deleted(Vec::new()), &cfg).expect("base trains");
    let split = sample_deletion(&graph, &split, deletion_ratio, Locality::In, 7).expect("deletion pool is large enough");
    Workload { graph, split, base }
}

/// Deterministic scores with a label that agrees with them about 3 times in 4.
pub fn ranked_scores(n: usize) -> (Vec<f64>, Vec<bool>) {
    let scores: Vec<f64> = (0..n).map(|i| ((i * 7919) % 10007) as f64 / 10007.0).collect();
    let labels = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| if i % 4 == 0 { s < 0.5 } else { s >= 0.5 })
        .collect();
    (scores, labels)
}
