use std::collections::HashSet;
use std::str::FromStr;

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{canonical, endpoints, khop_nodes, Edge, EdgeSplit, Graph};

/// Where deletion candidates sit relative to the test edges' 2-hop neighborhood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Locality {
    /// At least one endpoint within 2 hops of a test endpoint.
    In,
    /// Both endpoints farther than 2 hops from every test endpoint.
    Out,
}

impl FromStr for Locality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "in" => Ok(Locality::In),
            "out" => Ok(Locality::Out),
            other => Err(Error::Config(format!("locality must be in|out, got {other:?}"))),
        }
    }
}

/// `⌊frac · total⌋`, tolerant of representation error such as `0.07 · 100`.
fn fraction_of(frac: f64, total: usize) -> usize {
    (frac * total as f64 + 1e-9).floor() as usize
}

/// Uniform train/validation/test split of `g`'s edges.
pub fn split_edges(g: &Graph, test_frac: f64, val_frac: f64, seed: u64) -> Result<EdgeSplit> {
    if !(0.0..1.0).contains(&test_frac)
        || !(0.0..1.0).contains(&val_frac)
        || test_frac + val_frac >= 1.0
    {
        return Err(Error::Argument(format!(
            "test_frac={test_frac} and val_frac={val_frac} must be non-negative and sum below 1"
        )));
    }
    let mut edges = g.edges();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let n_test = fraction_of(test_frac, edges.len());
    let n_val = fraction_of(val_frac, edges.len());
    let mut test = edges[..n_test].to_vec();
    let mut validation = edges[n_test..n_test + n_val].to_vec();
    let mut train = edges[n_test + n_val..].to_vec();
    test.sort_unstable();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(EdgeSplit {
        remaining: train.clone(),
        train,
        validation,
        test,
        deleted: Vec::new(),
    })
}

/// Training edges split into the (IN, OUT) candidate pools.
pub(crate) fn deletion_pools(g: &Graph, split: &EdgeSplit) -> Result<(Vec<Edge>, Vec<Edge>)> {
    let hood = khop_nodes(g, &endpoints(&split.test), 2)?.to_mask(g.num_nodes());
    Ok(split
        .train
        .iter()
        .copied()
        .partition(|&(u, v)| hood[u] || hood[v]))
}

/// Samples `⌊ratio · |train ∪ val ∪ test|⌋` training edges for deletion from
/// the requested pool.
pub fn sample_deletion(
    g: &Graph,
    split: &EdgeSplit,
    ratio: f64,
    locality: Locality,
    seed: u64,
) -> Result<EdgeSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Argument(format!("deletion ratio {ratio} must lie in (0, 1)")));
    }
    if ratio > 0.05 {
        warn!("deletion ratio {ratio} exceeds the usual 5% ceiling");
    }
    if split.test.is_empty() {
        return Err(Error::Argument("deletion sampling needs a non-empty test set".into()));
    }
    let requested = fraction_of(ratio, split.total_edges());
    if requested == 0 {
        return Ok(split.with_deleted(Vec::new()));
    }
    let (inside, outside) = deletion_pools(g, split)?;
    let pool = match locality {
        Locality::In => inside,
        Locality::Out => outside,
    };
    if pool.len() < requested {
        return Err(Error::InsufficientCandidates {
            requested,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<Edge> = index::sample(&mut rng, pool.len(), requested)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    Ok(split.with_deleted(picked))
}

/// `m` distinct canonical non-edges of `g` that avoid `exclude`.
pub fn negative_sample(g: &Graph, m: usize, exclude: &[Edge], seed: u64) -> Result<Vec<Edge>> {
    let n = g.num_nodes();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let excluded: HashSet<Edge> = exclude
        .iter()
        .map(|&(u, v)| canonical(u, v))
        .filter(|&(u, v)| u != v && !g.has_edge(u, v))
        .collect();
    let available = total_pairs - g.num_edges() - excluded.len();
    if m > available {
        return Err(Error::InsufficientCandidates {
            requested: m,
            available,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let allowed = |u: usize, v: usize| u != v && !g.has_edge(u, v) && !excluded.contains(&canonical(u, v));

    // Dense regime: enumerate the complement and draw from it directly.
    if available <= 4 * m || total_pairs <= 1 << 16 {
        let mut cands = Vec::with_capacity(available);
        for u in 0..n {
            for v in u + 1..n {
                if allowed(u, v) {
                    cands.push((u, v));
                }
            }
        }
        let mut out: Vec<Edge> = index::sample(&mut rng, cands.len(), m)
            .into_iter()
            .map(|i| cands[i])
            .collect();
        out.sort_unstable();
        return Ok(out);
    }

    let mut seen = HashSet::with_capacity(m);
    let mut out = Vec::with_capacity(m);
    while out.len() < m {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if !allowed(u, v) {
            continue;
        }
        let e = canonical(u, v);
        if seen.insert(e) {
            out.push(e);
        }
    }
    out.sort_unstable();
    Ok(out)
}
