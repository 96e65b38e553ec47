use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve from the rank-sum statistic, ties counted ½.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Average 1-based ranks over tie groups.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let group_pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += avg_rank * group_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Area under the precision-recall curve by step interpolation (average
/// precision): `Σ_k (R_k − R_{k−1}) · P_k` over descending distinct thresholds.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            }
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}
