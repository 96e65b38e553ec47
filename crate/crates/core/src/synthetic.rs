//! Seeded synthetic graphs used as desk-scale fixtures.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::tensor::SparseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SyntheticGraph {
    ErdosRenyi { n: usize, p: f64 },
    BarabasiAlbert { n: usize, m: usize },
    TwoCliques { per_clique: usize, bridges: usize },
    /// Equal-sized communities with intra/inter edge probabilities. Node
    /// labels are the community ids.
    PlantedPartition {
        n: usize,
        blocks: usize,
        p_in: f64,
        p_out: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// One-hot degree buckets: bucket `min(deg, dim − 1)`.
    Degree(usize),
    /// I.i.d. standard normal entries.
    Gaussian(usize),
    /// Sparse binary bag of words. Each class owns an equal slice of the
    /// vocabulary and a node draws most of its words from its class's slice.
    Topic(usize),
}

impl Default for FeatureKind {
    fn default() -> Self {
        FeatureKind::Degree(16)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Degree(d) => write!(f, "degree:{d}"),
            FeatureKind::Gaussian(d) => write!(f, "gaussian:{d}"),
            FeatureKind::Topic(d) => write!(f, "topic:{d}"),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, dim) = s.split_once(':').unwrap_or((s, "16"));
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad feature dimension in {s:?}")))?;
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        match kind.trim() {
            "degree" => Ok(FeatureKind::Degree(dim)),
            "gaussian" => Ok(FeatureKind::Gaussian(dim)),
            "topic" => Ok(FeatureKind::Topic(dim)),
            other => Err(Error::Config(format!("unknown feature kind {other:?}"))),
        }
    }
}

impl fmt::Display for SyntheticGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntheticGraph::ErdosRenyi { n, p } => write!(f, "erdos_renyi({n},{p})"),
            SyntheticGraph::BarabasiAlbert { n, m } => write!(f, "barabasi_albert({n},{m})"),
            SyntheticGraph::TwoCliques {
                per_clique,
                bridges,
            } => write!(f, "two_cliques({per_clique},{bridges})"),
            SyntheticGraph::PlantedPartition {
                n,
                blocks,
                p_in,
                p_out,
            } => write!(f, "planted_partition({n},{blocks},{p_in},{p_out})"),
        }
    }
}

impl FromStr for SyntheticGraph {
    type Err = Error;

    /// Parses `name(arg, ...)`, e.g. `two_cliques(20, 1)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse synthetic graph spec {s:?}"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<&str> = inner.split(',').map(str::trim).collect();
        let int = |i: usize| -> Result<usize> { args.get(i).and_then(|a| a.parse().ok()).ok_or_else(bad) };
        let real = |i: usize| -> Result<f64> { args.get(i).and_then(|a| a.parse().ok()).ok_or_else(bad) };
        let spec = match (&s[..open], args.len()) {
            ("erdos_renyi", 2) => SyntheticGraph::ErdosRenyi { n: int(0)?, p: real(1)? },
            ("barabasi_albert", 2) => SyntheticGraph::BarabasiAlbert { n: int(0)?, m: int(1)? },
            ("two_cliques", 2) => SyntheticGraph::TwoCliques {
                per_clique: int(0)?,
                bridges: int(1)?,
            },
            ("planted_partition", 4) => SyntheticGraph::PlantedPartition {
                n: int(0)?,
                blocks: int(1)?,
                p_in: real(2)?,
                p_out: real(3)?,
            },
            _ => return Err(bad()),
        };
        Ok(spec)
    }
}

/// One-hot degree buckets, `min(deg, dim − 1)`.
pub fn degree_bucket_features(g: &Graph, dim: usize) -> SparseMatrix {
    let n = g.num_nodes();
    SparseMatrix::new(
        n,
        dim,
        (0..=n).collect(),
        (0..n).map(|u| g.degree(u).min(dim - 1)).collect(),
        vec![1.0; n],
    )
    .expect("one entry per row is valid CSR")
}

fn gaussian_features(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let values: Vec<f64> = (0..n * dim).map(|_| rng.sample(StandardNormal)).collect();
    SparseMatrix::new(
        n,
        dim,
        (0..=n).map(|r| r * dim).collect(),
        (0..n).flat_map(|_| 0..dim).collect(),
        values,
    )
    .expect("dense CSR layout is valid")
}

const TOPIC_WORDS: usize = 18;
const TOPIC_FOCUS: f64 = 0.6;

fn topic_features(labels: Option<&[usize]>, n: usize, dim: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let classes = labels.and_then(|l| l.iter().max()).map_or(1, |m| m + 1);
    let mut offsets = vec![0];
    let mut indices = Vec::new();
    for u in 0..n {
        let c = labels.map_or(0, |l| l[u]);
        let (lo, hi) = (c * dim / classes, ((c + 1) * dim / classes).max(c * dim / classes + 1));
        let mut words: Vec<usize> = (0..TOPIC_WORDS.min(dim))
            .map(|_| {
                if rng.random::<f64>() < TOPIC_FOCUS {
                    rng.random_range(lo..hi.min(dim))
                } else {
                    rng.random_range(0..dim)
                }
            })
            .collect();
        words.sort_unstable();
        words.dedup();
        indices.extend_from_slice(&words);
        offsets.push(indices.len());
    }
    let values = vec![1.0; indices.len()];
    SparseMatrix::new(n, dim, offsets, indices, values).expect("sorted unique columns per row")
}

fn pairs_with_prob(nodes: std::ops::Range<usize>, p: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Edge>) {
    for u in nodes.clone() {
        for v in u + 1..nodes.end {
            if rng.random::<f64>() < p {
                out.push((u, v));
            }
        }
    }
}

/// Deterministic graph generation; structure and features use one seeded stream.
pub fn generate_synthetic(spec: &SyntheticGraph, features: FeatureKind, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<Edge> = Vec::new();
    let mut labels = None;
    let n = match *spec {
        SyntheticGraph::ErdosRenyi { n, p } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("edge probability {p} outside [0, 1]")));
            }
            pairs_with_prob(0..n, p, &mut rng, &mut edges);
            n
        }
        SyntheticGraph::BarabasiAlbert { n, m } => {
            if m == 0 || m >= n {
                return Err(Error::Argument(format!("barabasi_albert needs 0 < m < n, got m={m}, n={n}")));
            }
            // Each arriving node links to m distinct targets drawn in
            // proportion to degree (via the repeated-endpoint list).
            let mut repeated: Vec<usize> = Vec::new();
            let mut targets: Vec<usize> = (0..m).collect();
            for source in m..n {
                for &t in &targets {
                    edges.push((t, source));
                }
                repeated.extend_from_slice(&targets);
                repeated.extend(std::iter::repeat_n(source, m));
                let mut chosen: Vec<usize> = Vec::with_capacity(m);
                while chosen.len() < m {
                    let pick = repeated[rng.random_range(0..repeated.len())];
                    if !chosen.contains(&pick) {
                        chosen.push(pick);
                    }
                }
                targets = chosen;
            }
            n
        }
        SyntheticGraph::TwoCliques {
            per_clique,
            bridges,
        } => {
            if bridges > per_clique {
                return Err(Error::Argument("at most one bridge per clique node".into()));
            }
            for base in [0, per_clique] {
                for u in base..base + per_clique {
                    for v in u + 1..base + per_clique {
                        edges.push((u, v));
                    }
                }
            }
            for b in 0..bridges {
                edges.push((b, per_clique + b));
            }
            labels = Some((0..2 * per_clique).map(|u| u / per_clique).collect());
            2 * per_clique
        }
        SyntheticGraph::PlantedPartition {
            n,
            blocks,
            p_in,
            p_out,
        } => {
            if blocks == 0 || blocks > n {
                return Err(Error::Argument(format!("need 1..=n blocks, got {blocks}")));
            }
            let block_of = |u: usize| u * blocks / n;
            for u in 0..n {
                for v in u + 1..n {
                    let p = if block_of(u) == block_of(v) { p_in } else { p_out };
                    if rng.random::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            labels = Some((0..n).map(block_of).collect());
            n
        }
    };
    let (g, _) = Graph::from_edge_list(n, &edges)?;
    let x = match features {
        FeatureKind::Degree(dim) => degree_bucket_features(&g, dim),
        FeatureKind::Gaussian(dim) => gaussian_features(n, dim, &mut rng),
        FeatureKind::Topic(dim) => topic_features(labels.as_deref(), n, dim, &mut rng),
    };
    let g = g.with_features(x)?;
    match labels {
        Some(l) => g.with_labels(l),
        None => Ok(g),
    }
}
