use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::metrics::{auprc, auroc};
use crate::model::{edge_probabilities, NodeEmbeddings};

/// Flat result record for one method on one seed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc_test: Option<f64>,
    pub auprc_test: Option<f64>,
    pub auroc_deleted: Option<f64>,
    pub auprc_deleted: Option<f64>,
    pub mi_ratio: Option<f64>,
    pub node_accuracy: Option<f64>,
    pub node_f1: Option<f64>,
    pub wall_time_seconds: f64,
    pub delop_params: usize,
}

/// Areas for `positives` (label 1) against `negatives` (label 0).
pub fn score_link_sets(emb: &NodeEmbeddings, positives: &[Edge], negatives: &[Edge]) -> Result<(f64, f64)> {
    let mut scores = edge_probabilities(emb, positives)?;
    scores.extend(edge_probabilities(emb, negatives)?);
    let mut labels = vec![true; positives.len()];
    labels.resize(scores.len(), false);
    Ok((auroc(&scores, &labels)?, auprc(&scores, &labels)?))
}

/// Test-set link prediction: `E_t` against sampled non-edges.
pub fn eval_test(emb: &NodeEmbeddings, test: &[Edge], negatives: &[Edge]) -> Result<(f64, f64)> {
    score_link_sets(emb, test, negatives)
}

/// Distinguishing remaining edges (label 1) from deleted ones (label 0).
/// `|E_d|` remaining edges of `g_r` are drawn with `seed`.
pub fn eval_deleted(emb: &NodeEmbeddings, g_r: &Graph, e_d: &[Edge], seed: u64) -> Result<(f64, f64)> {
    if e_d.is_empty() {
        return Err(Error::UndefinedMetric("no deleted edges".into()));
    }
    let remaining = g_r.edges();
    if remaining.len() < e_d.len() {
        return Err(Error::InsufficientCandidates {
            requested: e_d.len(),
            available: remaining.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<Edge> = index::sample(&mut rng, remaining.len(), e_d.len())
        .into_iter()
        .map(|i| remaining[i])
        .collect();
    picked.sort_unstable();
    score_link_sets(emb, &picked, e_d)
}

/// Mean presence probability of `e_d` before unlearning divided by the mean
/// after; values above 1 mean the model holds less evidence of `e_d`.
pub fn mi_ratio(before: &NodeEmbeddings, after: &NodeEmbeddings, e_d: &[Edge]) -> Result<f64> {
    if e_d.is_empty() {
        return Err(Error::UndefinedMetric("no deleted edges".into()));
    }
    let mean = |emb: &NodeEmbeddings| -> Result<f64> {
        Ok(edge_probabilities(emb, e_d)?.iter().sum::<f64>() / e_d.len() as f64)
    };
    Ok(mean(before)? / mean(after)?.max(1e-9))
}

/// Accuracy and macro-averaged F1 over every class seen in either list.
pub fn node_scores(preds: &[usize], truth: &[usize]) -> Result<(f64, f64)> {
    if preds.len() != truth.len() || preds.is_empty() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let k = preds.iter().chain(truth).max().expect("non-empty") + 1;
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    let mut present = vec![false; k];
    for (&p, &t) in preds.iter().zip(truth) {
        present[p] = true;
        present[t] = true;
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let accuracy = tp.iter().sum::<usize>() as f64 / preds.len() as f64;
    let classes: Vec<usize> = (0..k).filter(|&c| present[c]).collect();
    let f1_sum: f64 = classes
        .iter()
        .map(|&c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok((accuracy, f1_sum / classes.len() as f64))
}
