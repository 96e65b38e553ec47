use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::synthetic::degree_bucket_features;
use crate::tensor::SparseMatrix;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Raw `(u, v)` rows of an edge-list file. `#` starts a comment line; fields
/// are separated by a tab (any whitespace is accepted).
pub fn read_edge_rows(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, i + 1, format!("expected two node ids, got {line:?}")));
        };
        let u = a
            .parse::<usize>()
            .map_err(|e| parse_err(path, i + 1, format!("bad node id {a:?}: {e}")))?;
        let v = b
            .parse::<usize>()
            .map_err(|e| parse_err(path, i + 1, format!("bad node id {b:?}: {e}")))?;
        rows.push((u, v));
    }
    Ok(rows)
}

/// Loads an edge list. Without a feature file the nodes get one-hot degree
/// buckets of width `feature_dim`.
pub fn load_edge_list(path: &Path, feature_dim: usize) -> Result<Graph> {
    let rows = read_edge_rows(path)?;
    let num_nodes = rows.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
    let (g, dropped) = Graph::from_edge_list(num_nodes, &rows)?;
    if dropped > 0 {
        warn!(
            "{}: dropped {dropped} self-loop or duplicate rows",
            path.display()
        );
    }
    let feats = degree_bucket_features(&g, feature_dim.max(1));
    g.with_features(feats)
}

/// Dense CSV feature rows, row `i` belonging to node `i`.
pub fn load_features_csv(path: &Path) -> Result<SparseMatrix> {
    let text = fs::read_to_string(path)?;
    let mut cols: Option<usize> = None;
    let mut offsets = vec![0usize];
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut width = 0;
        for (c, field) in line.split(',').enumerate() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(path, i + 1, format!("bad value {field:?}: {e}")))?;
            if x != 0.0 {
                indices.push(c);
                values.push(x);
            }
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(w) if w != width => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {w} columns, found {width}"),
                ))
            }
            _ => {}
        }
        offsets.push(indices.len());
    }
    let rows = offsets.len() - 1;
    SparseMatrix::new(rows, cols.unwrap_or(0), offsets, indices, values)
}

/// `node_id,label` rows. A leading non-numeric header line is skipped.
pub fn load_labels_csv(path: &Path, num_nodes: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut labels: Vec<Option<usize>> = vec![None; num_nodes];
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match parts.as_slice() {
            [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
            _ => None,
        };
        let Some((node, label)) = parsed else {
            if first {
                first = false;
                continue;
            }
            return Err(parse_err(path, i + 1, format!("expected node_id,label, got {line:?}")));
        };
        first = false;
        if node >= num_nodes {
            return Err(Error::Index {
                what: "nodes",
                index: node,
                len: num_nodes,
            });
        }
        labels[node] = Some(label);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(n, l)| l.ok_or_else(|| Error::Dimension(format!("node {n} has no label"))))
        .collect()
}

/// Loads `edges.tsv`, plus `features.csv` and `labels.csv` when present.
pub fn load_dataset(dir: &Path, feature_dim: usize) -> Result<Graph> {
    let mut g = load_edge_list(&dir.join("edges.tsv"), feature_dim)?;
    let features = dir.join("features.csv");
    if features.exists() {
        let x = load_features_csv(&features)?;
        if x.rows() < g.num_nodes() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} nodes",
                x.rows(),
                g.num_nodes()
            )));
        }
        // isolated trailing nodes only show up in the feature file
        if x.rows() > g.num_nodes() {
            let (grown, _) = Graph::from_edge_list(x.rows(), &g.edges())?;
            g = grown;
        }
        g = g.with_features(x)?;
    }
    let labels = dir.join("labels.csv");
    if labels.exists() {
        let y = load_labels_csv(&labels, g.num_nodes())?;
        g = g.with_labels(y)?;
    }
    Ok(g)
}

/// Loads the LINQS citation layout: `<name>.content` rows of
/// `paper_id word_0 .. word_k class` and `<name>.cites` rows of
/// `cited citing`. Nodes are numbered in content order; classes in sorted
/// name order. Citations to unknown papers and self-citations are dropped.
pub fn load_linqs(dir: &Path, name: &str) -> Result<Graph> {
    let content_path = dir.join(format!("{name}.content"));
    let text = fs::read_to_string(&content_path)?;
    let mut ids = std::collections::HashMap::new();
    let mut triplets = Vec::new();
    let mut class_names = Vec::new();
    let mut width: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(&content_path, i + 1, "expected id, attributes and class"));
        }
        let words = &fields[1..fields.len() - 1];
        match width {
            None => width = Some(words.len()),
            Some(w) if w != words.len() => {
                return Err(parse_err(&content_path, i + 1, format!("expected {w} attributes, found {}", words.len())))
            }
            _ => {}
        }
        let node = ids.len();
        if ids.insert(fields[0].to_string(), node).is_some() {
            return Err(parse_err(&content_path, i + 1, format!("duplicate paper id {}", fields[0])));
        }
        for (c, w) in words.iter().enumerate() {
            let x: f64 = w
                .parse()
                .map_err(|e| parse_err(&content_path, i + 1, format!("bad attribute {w:?}: {e}")))?;
            if x != 0.0 {
                triplets.push((node, c, x));
            }
        }
        class_names.push(fields[fields.len() - 1].to_string());
    }
    let n = ids.len();
    let mut classes: Vec<&String> = class_names.iter().collect();
    classes.sort();
    classes.dedup();
    let labels: Vec<usize> = class_names
        .iter()
        .map(|c| classes.binary_search(&c).expect("class was collected"))
        .collect();

    let cites_path = dir.join(format!("{name}.cites"));
    let text = fs::read_to_string(&cites_path)?;
    let mut rows = Vec::new();
    let mut unknown = 0usize;
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [a, b] => match (ids.get(*a), ids.get(*b)) {
                (Some(&u), Some(&v)) => rows.push((u, v)),
                _ => unknown += 1,
            },
            _ => return Err(parse_err(&cites_path, i + 1, "expected two paper ids")),
        }
    }
    let (g, dropped) = Graph::from_edge_list(n, &rows)?;
    if unknown + dropped > 0 {
        warn!("{}: dropped {unknown} citations to unknown papers and {dropped} self/duplicate rows", cites_path.display());
    }
    let x = SparseMatrix::from_triplets(n, width.unwrap_or(0), &triplets)?;
    g.with_features(x)?.with_labels(labels)
}

/// Writes `g` in the layout [`load_dataset`] reads: `edges.tsv`, a dense
/// `features.csv` and, when present, `labels.csv`.
pub fn save_dataset(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut edges = BufWriter::new(fs::File::create(dir.join("edges.tsv"))?);
    writeln!(edges, "# {} nodes", g.num_nodes())?;
    for (u, v) in g.edges() {
        writeln!(edges, "{u}\t{v}")?;
    }
    edges.flush()?;
    let mut feats = BufWriter::new(fs::File::create(dir.join("features.csv"))?);
    let mut row = vec![0.0; g.feature_dim()];
    for r in 0..g.num_nodes() {
        row.iter_mut().for_each(|x| *x = 0.0);
        for (c, x) in g.features().row(r) {
            row[c] = x;
        }
        let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        writeln!(feats, "{}", line.join(","))?;
    }
    feats.flush()?;
    if let Some(labels) = g.labels() {
        let mut out = BufWriter::new(fs::File::create(dir.join("labels.csv"))?);
        writeln!(out, "node,label")?;
        for (n, l) in labels.iter().enumerate() {
            writeln!(out, "{n},{l}")?;
        }
        out.flush()?;
    }
    Ok(())
}
