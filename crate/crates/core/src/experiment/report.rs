use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::experiment::pipeline::{MethodReport, RunRecord, BASE, OPERATOR};
use crate::metrics::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation over √n; 0 for a single value.
    pub stderr: f64,
    pub n: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<MetricSummary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Some(MetricSummary { mean, stderr, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub methods: Vec<MethodSummary>,
}

pub const METRICS: &[&str] = &[
    "auroc_test",
    "auprc_test",
    "auroc_deleted",
    "auprc_deleted",
    "mi_ratio",
    "node_accuracy",
    "node_f1",
    "wall_time_seconds",
    "delop_params",
];

fn metric(r: &EvalReport, name: &str) -> Option<f64> {
    match name {
        "auroc_test" => r.auroc_test,
        "auprc_test" => r.auprc_test,
        "auroc_deleted" => r.auroc_deleted,
        "auprc_deleted" => r.auprc_deleted,
        "mi_ratio" => r.mi_ratio,
        "node_accuracy" => r.node_accuracy,
        "node_f1" => r.node_f1,
        "wall_time_seconds" => Some(r.wall_time_seconds),
        "delop_params" => Some(r.delop_params as f64),
        _ => None,
    }
}

fn method_rank(m: &str) -> usize {
    match m {
        BASE => 0,
        OPERATOR => 1,
        _ => 2,
    }
}

/// Mean ± standard error per method and metric, across seeds.
pub fn summarize(record: &RunRecord) -> Summary {
    let mut by_method: BTreeMap<(usize, String), Vec<&MethodReport>> = BTreeMap::new();
    for r in record.base_reports.iter().chain(&record.reports) {
        by_method
            .entry((method_rank(&r.method), r.method.clone()))
            .or_default()
            .push(r);
    }
    let methods = by_method
        .into_iter()
        .map(|((_, method), reports)| {
            let metrics = METRICS
                .iter()
                .filter_map(|&name| {
                    let values: Vec<f64> = reports.iter().filter_map(|r| metric(&r.report, name)).collect();
                    MetricSummary::of(&values).map(|s| (name.to_string(), s))
                })
                .collect();
            MethodSummary { method, metrics }
        })
        .collect();
    Summary {
        config_hash: record.config_hash.clone(),
        methods,
    }
}

/// Plain-text table of a summary: one row per method, `mean ± stderr` cells.
pub fn render_table(summary: &Summary) -> String {
    let shown: Vec<&str> = METRICS
        .iter()
        .copied()
        .filter(|m| summary.methods.iter().any(|s| s.metrics.contains_key(*m)))
        .collect();
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
        .chain(shown.iter().map(|s| s.to_string()))
        .collect()];
    for m in &summary.methods {
        let mut row = vec![m.method.clone()];
        for name in &shown {
            row.push(match m.metrics.get(*name) {
                Some(s) => format!("{:.4} ± {:.4}", s.mean, s.stderr),
                None => "-".to_string(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
        }
    }
    out
}
