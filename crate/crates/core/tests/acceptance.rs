//! End-to-end acceptance checks, one line per criterion on stderr.
//!
//! Criteria that need the Cora citation graph read it from the directory in
//! `GRAPH_UNLEARN_CORA_DIR` (either `edges.tsv` + `features.csv` + `labels.csv`
//! or the LINQS `cora.content` / `cora.cites` pair). Without it they are
//! reported as blocked and a synthetic graph of the same size is run in
//! their place for information only.
//!
//! Only the exact criteria in [`GATING`] fail the test; the measured ones
//! print FAIL lines without panicking.

mod common;

use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use graph_unlearn::experiment::{
    load_graph, run_pipeline, stage_eval, stage_train, stage_unlearn, Baseline, DatasetSpec, ExperimentConfig,
    MethodReport, RunRecord, SeedDir, BASE, OPERATOR,
};
use graph_unlearn::graph::delete_edges;
use graph_unlearn::metrics::{mi_ratio, EvalReport};
use graph_unlearn::model::forward;
use graph_unlearn::synthetic::{generate_synthetic, FeatureKind, SyntheticGraph};
use graph_unlearn::unlearn::{build_masks, unlearn, unlearned_forward, Activation, OperatorMode, UnlearnedModel};
use graph_unlearn::{DeletionOperator, Edge, GnnModel, UnlearnConfig};

/// Criteria with exact, data-independent outcomes fail the test. The rest
/// measure trained models or wall time and are reported only.
const GATING: [usize; 5] = [1, 2, 3, 4, 8];

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

fn say(line: &str) {
    // Written to the raw handle so the lines survive output capture.
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn metric_mean(reports: &[MethodReport], method: &str, f: fn(&EvalReport) -> Option<f64>) -> f64 {
    let v: Vec<f64> = reports
        .iter()
        .filter(|r| r.method == method)
        .map(|r| f(&r.report).expect("metric present"))
        .collect();
    mean(&v)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let suite = gradient_suite(10);
    let secs = start.elapsed().as_secs_f64();
    let (worst_name, worst) = suite
        .iter()
        .copied()
        .fold(("", 0.0), |acc, (n, e)| if e > acc.1 { (n, e) } else { acc });
    verdict(
        suite.len() == 17 && worst < 1e-4 && secs < 60.0,
        format!("{} checks, worst rel. error {worst:.2e} ({worst_name}), {secs:.1}s", suite.len()),
    )
}

fn identity_at_init() -> Outcome {
    let g = erdos_renyi(100, 0.05, FeatureKind::Gaussian(8), 21);
    let base = GnnModel::init(&[8, 32, 16], 21).unwrap();
    let e_d: Vec<Edge> = g.edges().into_iter().step_by(9).collect();
    let g_r = delete_edges(&g, &e_d).unwrap();
    let plain = forward(&g_r, &base).unwrap();
    let mut worst = 0.0f64;
    for mode in [OperatorMode::LayerWise, OperatorMode::LastLayerOnly] {
        let masks = build_masks(&g, &e_d, base.num_layers(), mode).unwrap();
        let op = DeletionOperator::identity(&base, masks, mode, Activation::Linear).unwrap();
        let got = unlearned_forward(&UnlearnedModel {
            base: base.clone(),
            op,
            graph_r: g_r.clone(),
        })
        .unwrap();
        for (a, b) in got.layers().iter().zip(plain.layers()) {
            worst = worst.max(a.max_abs_diff(b));
        }
    }
    verdict(
        worst == 0.0,
        format!("max |m'(G_r) - m(G_r)| = {worst:e} over {} deleted edges, both modes", e_d.len()),
    )
}

fn bound_suite() -> Outcome {
    let start = Instant::now();
    let violations: Vec<usize> = [4, 16, 64].iter().map(|&d| bound_violations(d, 1000, d as u64)).collect();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        violations.iter().all(|&v| v == 0) && secs < 10.0,
        format!("violations at d=4/16/64: {violations:?}, {secs:.2}s"),
    )
}

fn metric_oracles() -> Outcome {
    let (roc, prc) = metric_oracle_errors(100);
    verdict(
        roc <= 1e-12 && prc <= 1e-12,
        format!("max |auroc - oracle| = {roc:.1e}, max |auprc - oracle| = {prc:.1e}"),
    )
}

fn lambda_config(out: PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset: DatasetSpec::Synthetic {
            graph: SyntheticGraph::PlantedPartition {
                n: 500,
                blocks: 5,
                p_in: 0.04,
                p_out: 0.004,
            },
            features: FeatureKind::Topic(64),
            seed: 5,
        },
        baselines: Vec::new(),
        seeds: (0..5).collect(),
        output_dir: out,
        ..ExperimentConfig::default()
    };
    cfg.train.hidden_dims = vec![64, 32];
    cfg
}

fn lambda_ablation() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = lambda_config(tmp.path().to_path_buf());
    let g = load_graph(&cfg.dataset).unwrap();
    let lambdas = [0.0, 0.5, 1.0];
    let mut by_lambda: Vec<Vec<MethodReport>> = vec![Vec::new(); lambdas.len()];
    for &seed in &cfg.seeds.clone() {
        let dir = SeedDir::new(&cfg.output_dir, seed);
        stage_train(&cfg, &g, seed, &dir).unwrap();
        for (i, &lambda) in lambdas.iter().enumerate() {
            cfg.unlearn.lambda = lambda;
            stage_unlearn(&cfg, &g, seed, &dir).unwrap();
            by_lambda[i].extend(stage_eval(&cfg, &g, seed, &dir).unwrap());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let e_d: Vec<f64> = by_lambda
        .iter()
        .map(|r| metric_mean(r, OPERATOR, |m| m.auroc_deleted))
        .collect();
    let e_t: Vec<f64> = by_lambda.iter().map(|r| metric_mean(r, OPERATOR, |m| m.auroc_test)).collect();
    let avg: Vec<f64> = e_d.iter().zip(&e_t).map(|(d, t)| (d + t) / 2.0).collect();
    let ok = e_d[2] > e_d[0] && e_t[0] > e_t[2] && avg[1] >= avg[0] - 0.02 && avg[1] >= avg[2] - 0.02 && secs < 900.0;
    verdict(
        ok,
        format!(
            "lambda 0/0.5/1: E_d {:.3}/{:.3}/{:.3}, E_t {:.3}/{:.3}/{:.3}, avg {:.3}/{:.3}/{:.3}, {secs:.0}s",
            e_d[0], e_d[1], e_d[2], e_t[0], e_t[1], e_t[2], avg[0], avg[1], avg[2]
        ),
    )
}

fn parameter_count() -> Outcome {
    let mut counts = Vec::new();
    for (n, seed) in [(60, 1), (400, 2), (1500, 3)] {
        let g = erdos_renyi(n, 8.0 / n as f64, FeatureKind::Gaussian(12), seed);
        let base = GnnModel::init(&[12, 64, 32], seed).unwrap();
        let e_d: Vec<Edge> = g.edges().into_iter().take(3).collect();
        let cfg = UnlearnConfig {
            epochs: 1,
            ..UnlearnConfig::default()
        };
        let (op, _) = unlearn(&base, &g, &e_d, &cfg).unwrap();
        counts.push(op.param_count());
    }
    let small = GnnModel::init(&[5, 7, 3], 0).unwrap();
    let g = erdos_renyi(30, 0.2, FeatureKind::Gaussian(5), 0);
    let masks = build_masks(&g, &g.edges()[..2], 2, OperatorMode::LayerWise).unwrap();
    let other = DeletionOperator::identity(&small, masks, OperatorMode::LayerWise, Activation::Linear)
        .unwrap()
        .param_count();
    verdict(
        counts.iter().all(|&c| c == 5120) && other == 7 * 7 + 3 * 3,
        format!("[64, 32] on 60/400/1500 nodes: {counts:?}; [7, 3]: {other}"),
    )
}

/// Layer-wise pipeline with a retrain baseline, then a last-layer-only
/// operator on the same splits and base models.
struct CoraRuns {
    layer_wise: RunRecord,
    last_layer: Vec<MethodReport>,
}

fn cora_config(dataset: DatasetSpec, out: PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        dataset,
        baselines: vec![Baseline::Retrain],
        seeds: (0..5).collect(),
        output_dir: out,
        ..ExperimentConfig::default()
    };
    cfg.train.hidden_dims = vec![64, 32];
    cfg
}

fn cora_runs(dataset: DatasetSpec) -> CoraRuns {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = cora_config(dataset, tmp.path().to_path_buf());
    let layer_wise = run_pipeline(&cfg, true).unwrap();
    let g = load_graph(&cfg.dataset).unwrap();
    cfg.unlearn.mode = OperatorMode::LastLayerOnly;
    let mut last_layer = Vec::new();
    for &seed in &cfg.seeds {
        let dir = SeedDir::new(&cfg.output_dir, seed);
        stage_unlearn(&cfg, &g, seed, &dir).unwrap();
        last_layer.extend(stage_eval(&cfg, &g, seed, &dir).unwrap());
    }
    CoraRuns { layer_wise, last_layer }
}

struct CoraNumbers {
    base_t: f64,
    del_t: f64,
    del_d: f64,
    retrain_d: f64,
    last_t: f64,
    del_secs: f64,
    retrain_secs: f64,
    mi: f64,
}

fn cora_numbers(runs: &CoraRuns) -> CoraNumbers {
    let r = &runs.layer_wise;
    CoraNumbers {
        base_t: metric_mean(&r.base_reports, BASE, |m| m.auroc_test),
        del_t: metric_mean(&r.reports, OPERATOR, |m| m.auroc_test),
        del_d: metric_mean(&r.reports, OPERATOR, |m| m.auroc_deleted),
        retrain_d: metric_mean(&r.reports, "retrain", |m| m.auroc_deleted),
        last_t: metric_mean(&runs.last_layer, OPERATOR, |m| m.auroc_test),
        del_secs: metric_mean(&r.reports, OPERATOR, |m| Some(m.wall_time_seconds)),
        retrain_secs: metric_mean(&r.reports, "retrain", |m| Some(m.wall_time_seconds)),
        mi: metric_mean(&r.reports, OPERATOR, |m| m.mi_ratio),
    }
}

fn cora_reproduction(c: &CoraNumbers) -> Outcome {
    let band = c.del_t >= 0.88 && c.del_d >= 0.63;
    let gap = c.del_d - c.retrain_d;
    verdict(
        c.base_t >= 0.93 && (band || gap >= 0.10),
        format!(
            "base E_t {:.3}; operator E_t {:.3}, E_d {:.3}; retrain E_d {:.3} (gap {gap:.3})",
            c.base_t, c.del_t, c.del_d, c.retrain_d
        ),
    )
}

fn last_layer_bound(c: &CoraNumbers) -> Outcome {
    verdict(
        (c.last_t - c.del_t).abs() <= 0.05,
        format!("E_t layer-wise {:.3}, last-layer-only {:.3}", c.del_t, c.last_t),
    )
}

fn efficiency(c: &CoraNumbers) -> Outcome {
    verdict(
        c.del_secs <= 0.5 * c.retrain_secs,
        format!(
            "operator {:.2}s vs retrain {:.2}s ({:.1}x)",
            c.del_secs,
            c.retrain_secs,
            c.retrain_secs / c.del_secs
        ),
    )
}

fn bridge_mi() -> (bool, String) {
    let ratios: Vec<f64> = (0..5)
        .map(|seed| {
            let run = bridge_run(seed, &UnlearnConfig::default());
            mi_ratio(&run.before, &run.after, &[run.bridge]).unwrap()
        })
        .collect();
    let ok = ratios.iter().all(|&r| r > 1.0);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    (ok, format!("two-clique MI per seed [{}]", shown.join(", ")))
}

/// Cora-sized stand-in: 2708 nodes in 7 communities, about 5.4k edges,
/// sparse class-correlated binary features.
fn stand_in() -> DatasetSpec {
    DatasetSpec::Synthetic {
        graph: SyntheticGraph::PlantedPartition {
            n: 2708,
            blocks: 7,
            p_in: 0.0082,
            p_out: 0.0003,
        },
        features: FeatureKind::Topic(512),
        seed: 11,
    }
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "gradient correctness", gradients()));
    results.push((2, "identity at init", identity_at_init()));
    results.push((3, "deletion bound suite", bound_suite()));
    results.push((4, "metric oracles", metric_oracles()));
    results.push((5, "lambda ablation direction", lambda_ablation()));

    let cora = std::env::var_os("GRAPH_UNLEARN_CORA_DIR").map(PathBuf::from);
    let (bridge_ok, bridge_detail) = bridge_mi();
    match &cora {
        Some(dir) => {
            let c = cora_numbers(&cora_runs(DatasetSpec::Path {
                path: dir.clone(),
                feature_dim: 16,
            }));
            results.push((6, "Cora-scale reproduction", cora_reproduction(&c)));
            results.push((7, "last-layer-only bound", last_layer_bound(&c)));
            results.push((8, "parameter count", parameter_count()));
            results.push((9, "efficiency ratio", efficiency(&c)));
            results.push((
                10,
                "MI direction",
                verdict(bridge_ok && c.mi > 1.0, format!("{bridge_detail}; Cora MI {:.3}", c.mi)),
            ));
        }
        None => {
            let blocked = || Outcome::Blocked("GRAPH_UNLEARN_CORA_DIR is not set".into());
            results.push((6, "Cora-scale reproduction", blocked()));
            results.push((7, "last-layer-only bound", blocked()));
            results.push((8, "parameter count", parameter_count()));
            results.push((9, "efficiency ratio", blocked()));
            results.push((
                10,
                "MI direction",
                if bridge_ok {
                    Outcome::Blocked(format!("{bridge_detail} holds; Cora part needs GRAPH_UNLEARN_CORA_DIR"))
                } else {
                    Outcome::Fail(bridge_detail.clone())
                },
            ));
        }
    }

    say("");
    for (id, name, outcome) in &results {
        match outcome {
            Outcome::Pass(d) => say(&format!("criterion {id:>2} PASS {name}: {d}")),
            Outcome::Fail(d) => say(&format!("criterion {id:>2} FAIL {name}: {d}")),
            Outcome::Blocked(d) => say(&format!("criterion {id:>2} FAIL (blocked) {name}: {d}")),
        }
    }

    if cora.is_none() {
        let start = Instant::now();
        let c = cora_numbers(&cora_runs(stand_in()));
        say(&format!(
            "stand-in (synthetic, 2708 nodes, {:.0}s, not a substitute for Cora):",
            start.elapsed().as_secs_f64()
        ));
        for (id, o) in [
            (6, cora_reproduction(&c)),
            (7, last_layer_bound(&c)),
            (9, efficiency(&c)),
            (10, verdict(c.mi > 1.0, format!("MI {:.3}", c.mi))),
        ] {
            let (tag, d) = match o {
                Outcome::Pass(d) => ("would pass", d),
                Outcome::Fail(d) | Outcome::Blocked(d) => ("would fail", d),
            };
            say(&format!("  criterion {id:>2} {tag}: {d}"));
        }
    }

    let passed = results.iter().filter(|(_, _, o)| matches!(o, Outcome::Pass(_))).count();
    say(&format!("{passed}/{} criteria pass", results.len()));
    say("");

    let failed: Vec<usize> = results
        .iter()
        .filter_map(|(id, _, o)| (GATING.contains(id) && !matches!(o, Outcome::Pass(_))).then_some(*id))
        .collect();
    assert!(failed.is_empty(), "criteria {failed:?} failed");
}

#[test]
fn stand_in_matches_cora_size() {
    let g = generate_synthetic(
        &match stand_in() {
            DatasetSpec::Synthetic { graph, .. } => graph,
            DatasetSpec::Path { .. } => unreachable!(),
        },
        FeatureKind::Topic(512),
        11,
    )
    .unwrap();
    assert_eq!(g.num_nodes(), 2708);
    assert!((4500..6500).contains(&g.num_edges()), "{} edges", g.num_edges());
}
