//! Undirected attributed graphs in CSR form and the edge/node deletion
//! mechanics built on them.

mod io;
mod sampling;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{SparseMatrix, Tensor};

pub use io::{load_dataset, load_linqs, save_dataset, load_edge_list, load_features_csv, load_labels_csv, read_edge_rows};
pub use sampling::{negative_sample, sample_deletion, split_edges, Locality};

/// Undirected edge stored with `u < v`.
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(u: usize, v: usize) -> Edge {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Sorted set of distinct node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeSet(Vec<usize>);

impl NodeSet {
    pub fn new() -> Self {
        NodeSet(Vec::new())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.iter().all(|&x| other.contains(x))
    }

    /// Boolean membership vector of length `n`.
    pub fn to_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &i in &self.0 {
            mask[i] = true;
        }
        mask
    }

    pub fn from_mask(mask: &[bool]) -> NodeSet {
        NodeSet(
            mask.iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect(),
        )
    }

    pub fn check_bounds(&self, num_nodes: usize) -> Result<()> {
        match self.0.last() {
            Some(&last) if last >= num_nodes => Err(Error::Index {
                what: "nodes",
                index: last,
                len: num_nodes,
            }),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        NodeSet(v)
    }
}

impl IntoIterator for NodeSet {
    type Item = usize;
    type IntoIter = std::vec::IntoIter<usize>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Disjoint canonical edge sets for link prediction and unlearning.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub train: Vec<Edge>,
    pub validation: Vec<Edge>,
    pub test: Vec<Edge>,
    pub deleted: Vec<Edge>,
    pub remaining: Vec<Edge>,
}

impl EdgeSplit {
    pub fn total_edges(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    /// Checks disjointness, `deleted ⊆ train` and `remaining = train \ deleted`.
    pub fn validate(&self) -> Result<()> {
        let train: BTreeSet<Edge> = self.train.iter().copied().collect();
        let val: BTreeSet<Edge> = self.validation.iter().copied().collect();
        let test: BTreeSet<Edge> = self.test.iter().copied().collect();
        let all = [&self.train, &self.validation, &self.test, &self.deleted, &self.remaining];
        if all.iter().flat_map(|s| s.iter()).any(|&(u, v)| u >= v) {
            return Err(Error::Argument("split contains a non-canonical edge".into()));
        }
        if train.len() != self.train.len() || val.len() != self.validation.len() || test.len() != self.test.len() {
            return Err(Error::Argument("split contains duplicate edges".into()));
        }
        if !train.is_disjoint(&val) || !train.is_disjoint(&test) || !val.is_disjoint(&test) {
            return Err(Error::Argument("train/validation/test overlap".into()));
        }
        let deleted: BTreeSet<Edge> = self.deleted.iter().copied().collect();
        if !deleted.is_subset(&train) {
            return Err(Error::Argument("deleted edges must be training edges".into()));
        }
        let remaining: BTreeSet<Edge> = self.remaining.iter().copied().collect();
        let expected: BTreeSet<Edge> = train.difference(&deleted).copied().collect();
        if remaining != expected {
            return Err(Error::Argument("remaining must equal train minus deleted".into()));
        }
        Ok(())
    }

    /// Replaces the deletion set and recomputes `remaining`.
    pub fn with_deleted(&self, mut deleted: Vec<Edge>) -> EdgeSplit {
        deleted.sort_unstable();
        deleted.dedup();
        let del: BTreeSet<Edge> = deleted.iter().copied().collect();
        EdgeSplit {
            train: self.train.clone(),
            validation: self.validation.clone(),
            test: self.test.clone(),
            remaining: self.train.iter().copied().filter(|e| !del.contains(e)).collect(),
            deleted,
        }
    }
}

/// Immutable undirected graph with node features and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: SparseMatrix,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from arbitrary undirected rows. Self-loops and repeated
    /// pairs are dropped; the number of dropped rows is returned alongside.
    pub fn from_edge_list(num_nodes: usize, rows: &[(usize, usize)]) -> Result<(Graph, usize)> {
        let mut edges = Vec::with_capacity(rows.len());
        for &(u, v) in rows {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(Error::Index {
                        what: "nodes",
                        index: id,
                        len: num_nodes,
                    });
                }
            }
            if u != v {
                edges.push(canonical(u, v));
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let dropped = rows.len() - edges.len();
        let features = SparseMatrix::new(num_nodes, 0, vec![0; num_nodes + 1], vec![], vec![])?;
        Ok((Graph::from_canonical(num_nodes, &edges, features, None), dropped))
    }

    /// Graph on `edges` (canonical, duplicate-free) with the given node data.
    fn from_canonical(
        num_nodes: usize,
        edges: &[Edge],
        features: SparseMatrix,
        labels: Option<Vec<usize>>,
    ) -> Graph {
        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut neighbors = vec![0usize; offsets[num_nodes]];
        for &(u, v) in edges {
            neighbors[fill[u]] = v;
            fill[u] += 1;
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for n in 0..num_nodes {
            neighbors[offsets[n]..offsets[n + 1]].sort_unstable();
        }
        Graph {
            num_nodes,
            offsets,
            neighbors,
            features,
            labels,
        }
    }

    /// Builds a graph from raw CSR arrays, validating every structural invariant.
    pub fn from_csr(
        offsets: Vec<usize>,
        neighbors: Vec<usize>,
        features: SparseMatrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Graph> {
        if offsets.is_empty() {
            return Err(Error::Argument("offsets must have at least one entry".into()));
        }
        let g = Graph {
            num_nodes: offsets.len() - 1,
            offsets,
            neighbors,
            features,
            labels,
        };
        g.validate()?;
        Ok(g)
    }

    /// Same nodes and node data, different edge set.
    pub fn with_edges(&self, edges: &[Edge]) -> Result<Graph> {
        let mut sorted: Vec<Edge> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= self.num_nodes || v >= self.num_nodes {
                return Err(Error::Index {
                    what: "nodes",
                    index: u.max(v),
                    len: self.num_nodes,
                });
            }
            if u == v {
                return Err(Error::Argument(format!("self-loop ({u}, {v})")));
            }
            sorted.push(canonical(u, v));
        }
        sorted.sort_unstable();
        sorted.dedup();
        Ok(Graph::from_canonical(
            self.num_nodes,
            &sorted,
            self.features.clone(),
            self.labels.clone(),
        ))
    }

    pub fn with_features(mut self, features: SparseMatrix) -> Result<Graph> {
        if features.rows() != self.num_nodes {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                self.num_nodes
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_dense_features(self, features: &Tensor) -> Result<Graph> {
        self.with_features(SparseMatrix::from_dense(features))
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Graph> {
        if labels.len() != self.num_nodes {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Checks CSR validity, symmetry, and the absence of self-loops and duplicates.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.offsets.len() != n + 1 || self.offsets[0] != 0 {
            return Err(Error::Argument("offsets length must be num_nodes + 1".into()));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Argument("offsets must be non-decreasing".into()));
        }
        if self.offsets[n] != self.neighbors.len() {
            return Err(Error::Argument("offsets do not cover the neighbor array".into()));
        }
        for u in 0..n {
            let nb = &self.neighbors[self.offsets[u]..self.offsets[u + 1]];
            let mut seen = nb.to_vec();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Argument(format!("node {u} has duplicate neighbors")));
            }
            for &v in nb {
                if v >= n {
                    return Err(Error::Index {
                        what: "nodes",
                        index: v,
                        len: n,
                    });
                }
                if v == u {
                    return Err(Error::Argument(format!("self-loop on node {u}")));
                }
                if !self.neighbors(v).contains(&u) {
                    return Err(Error::Argument(format!("edge ({u}, {v}) is not symmetric")));
                }
            }
        }
        if self.features.rows() != n {
            return Err(Error::Dimension(format!(
                "feature matrix has {} rows for {n} nodes",
                self.features.rows()
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Dimension(format!("{} labels for {n} nodes", labels.len())));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[usize] {
        &self.neighbors
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|u| self.degree(u)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        if u >= self.num_nodes || v >= self.num_nodes {
            return false;
        }
        let (a, b) = if self.degree(u) <= self.degree(v) { (u, v) } else { (v, u) };
        let nb = self.neighbors(a);
        // neighbor lists are sorted unless built by `from_csr` with a custom order
        nb.binary_search(&b).is_ok() || nb.contains(&b)
    }

    /// All canonical edges in ascending order.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nodes that still have at least one incident edge.
    pub fn active_nodes(&self) -> NodeSet {
        (0..self.num_nodes).filter(|&u| self.degree(u) > 0).collect()
    }

    pub fn features(&self) -> &SparseMatrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }

    /// Copy with the feature rows of `nodes` set to zero.
    pub fn with_zeroed_features(&self, nodes: &NodeSet) -> Result<Graph> {
        nodes.check_bounds(self.num_nodes)?;
        let mut g = self.clone();
        g.features = self.features.with_zeroed_rows(&nodes.to_mask(self.num_nodes));
        Ok(g)
    }
}

/// All nodes within `k` hops of any seed, seeds included.
pub fn khop_nodes(g: &Graph, seeds: &NodeSet, k: usize) -> Result<NodeSet> {
    seeds.check_bounds(g.num_nodes())?;
    let mut dist = vec![usize::MAX; g.num_nodes()];
    let mut queue = VecDeque::new();
    for s in seeds.iter() {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] == k {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Ok((0..g.num_nodes()).filter(|&u| dist[u] != usize::MAX).collect())
}

/// Both endpoints of every edge.
pub fn endpoints(edges: &[Edge]) -> NodeSet {
    edges.iter().flat_map(|&(u, v)| [u, v]).collect()
}

/// Removes `e_d` in both CSR directions. Node rows, features and labels stay.
pub fn delete_edges(g: &Graph, e_d: &[Edge]) -> Result<Graph> {
    let mut remove = BTreeSet::new();
    for &(u, v) in e_d {
        if !g.has_edge(u, v) {
            return Err(Error::MissingEdge(u.min(v), u.max(v)));
        }
        remove.insert(canonical(u, v));
    }
    if remove.is_empty() {
        return Ok(g.clone());
    }
    let kept: Vec<Edge> = g.edges().into_iter().filter(|e| !remove.contains(e)).collect();
    Ok(Graph::from_canonical(
        g.num_nodes(),
        &kept,
        g.features.clone(),
        g.labels.clone(),
    ))
}

/// Removes every edge incident to `nodes`; returns the pruned graph and the
/// removed edges in canonical order.
pub fn delete_nodes(g: &Graph, nodes: &NodeSet) -> Result<(Graph, Vec<Edge>)> {
    nodes.check_bounds(g.num_nodes())?;
    let mut removed: Vec<Edge> = nodes
        .iter()
        .flat_map(|u| g.neighbors(u).iter().map(move |&v| canonical(u, v)))
        .collect();
    removed.sort_unstable();
    removed.dedup();
    let pruned = delete_edges(g, &removed)?;
    Ok((pruned, removed))
}
