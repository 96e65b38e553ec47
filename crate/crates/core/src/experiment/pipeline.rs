use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::{Baseline, DatasetSpec, DeletionSpec, ExperimentConfig};
use crate::graph::{load_dataset, load_edge_list, load_linqs, negative_sample, sample_deletion, split_edges, Edge, EdgeSplit, Graph, NodeSet};
use crate::metrics::{eval_deleted, eval_test, mi_ratio, node_scores, EvalReport};
use crate::model::checkpoint::{load_model, save_model};
use crate::model::{
    forward, forward_with, predict_classes, train_base, train_cls_head, GnnModel, GraphOperands, NodeEmbeddings,
    TrainConfig,
};
use crate::synthetic::generate_synthetic;
use crate::unlearn::{
    baseline_grad_ascent, baseline_noisy_finetune, baseline_retrain, unlearn, unlearn_node_features,
    unlearned_forward_with, DeletionOperator, LossReport, UnlearnConfig,
};

pub const OPERATOR: &str = "delop";
pub const BASE: &str = "base";

const HEAD_EPOCHS: usize = 100;
const HEAD_LR: f64 = 0.05;

/// Mixes a run seed with a stream id so that stages draw independent streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

const STREAM_SPLIT: u64 = 1;
const STREAM_DELETION: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_PAIRS: u64 = 4;
const STREAM_EVAL: u64 = 5;
const STREAM_NOISE: u64 = 6;
const STREAM_NODES: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub seed: u64,
    pub report: EvalReport,
}

/// Results of one pipeline invocation. `reports` holds the unlearning
/// methods; `base_reports` the model before any deletion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub started_at: u64,
    pub finished_at: u64,
    pub base_reports: Vec<MethodReport>,
    pub reports: Vec<MethodReport>,
}

/// Split with the deletion applied, plus the per-seed evaluation fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub split: EdgeSplit,
    /// Nodes removed (node deletion) or whose features are zeroed.
    pub nodes: NodeSet,
    /// Edges the unlearner targets: `split.deleted`, or the incident edges of
    /// `nodes` for feature deletion.
    pub targets: Vec<Edge>,
    pub test_negatives: Vec<Edge>,
    /// Labeled nodes for the classification head, and nodes it is scored on.
    pub head_train: Vec<usize>,
    pub head_eval: Vec<usize>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn load_graph(spec: &DatasetSpec) -> Result<Graph> {
    match spec {
        DatasetSpec::Path { path, feature_dim } => {
            if path.is_dir() {
                if path.join("edges.tsv").exists() {
                    return load_dataset(path, *feature_dim);
                }
                match linqs_name(path)? {
                    Some(name) => load_linqs(path, &name),
                    None => Err(Error::Config(format!(
                        "{} has neither edges.tsv nor a <name>.content/<name>.cites pair",
                        path.display()
                    ))),
                }
            } else {
                load_edge_list(path, *feature_dim)
            }
        }
        DatasetSpec::Synthetic { graph, features, seed } => generate_synthetic(graph, *features, *seed),
    }
}

fn linqs_name(dir: &Path) -> Result<Option<String>> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "content") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if path.with_extension("cites").exists() {
                    return Ok(Some(stem.to_string()));
                }
            }
        }
    }
    Ok(None)
}

fn pick_nodes(g_train: &Graph, explicit: &[usize], count: usize, seed: u64) -> Result<NodeSet> {
    let nodes = if explicit.is_empty() {
        let candidates: Vec<usize> = (0..g_train.num_nodes()).filter(|&u| g_train.degree(u) > 0).collect();
        if candidates.len() < count {
            return Err(Error::InsufficientCandidates {
                requested: count,
                available: candidates.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, candidates.len(), count)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    } else {
        NodeSet::from_iter(explicit.iter().copied())
    };
    nodes.check_bounds(g_train.num_nodes())?;
    Ok(nodes)
}

fn incident_edges(g: &Graph, nodes: &NodeSet) -> Vec<Edge> {
    let mut out: Vec<Edge> = nodes
        .iter()
        .flat_map(|u| g.neighbors(u).iter().map(move |&v| crate::graph::canonical(u, v)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Splits edges, samples the deletion and fixes evaluation negatives.
pub fn prepare(cfg: &ExperimentConfig, g: &Graph, seed: u64) -> Result<Prepared> {
    let split = split_edges(g, cfg.test_fraction, cfg.validation_fraction, derive_seed(seed, STREAM_SPLIT))?;
    let g_train = g.with_edges(&split.train)?;
    let del_seed = derive_seed(seed, STREAM_DELETION);
    let (split, nodes, targets) = match &cfg.deletion {
        DeletionSpec::Edges { ratio, locality } => {
            let split = sample_deletion(g, &split, *ratio, *locality, del_seed)?;
            let targets = split.deleted.clone();
            (split, NodeSet::new(), targets)
        }
        DeletionSpec::Nodes { nodes, count } => {
            let nodes = pick_nodes(&g_train, nodes, *count, del_seed)?;
            let e_d = incident_edges(&g_train, &nodes);
            (split.with_deleted(e_d.clone()), nodes, e_d)
        }
        DeletionSpec::Features { nodes, count } => {
            let nodes = pick_nodes(&g_train, nodes, *count, del_seed)?;
            let e_d = incident_edges(&g_train, &nodes);
            (split, nodes, e_d)
        }
    };
    let test_negatives = if split.test.is_empty() {
        Vec::new()
    } else {
        negative_sample(g, split.test.len(), &[], derive_seed(seed, STREAM_EVAL))?
    };
    let (head_train, head_eval) = match g.labels() {
        None => (Vec::new(), Vec::new()),
        Some(_) => {
            let eligible: Vec<usize> = (0..g.num_nodes()).filter(|&u| !nodes.contains(u)).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_NODES));
            let order = index::sample(&mut rng, eligible.len(), eligible.len()).into_vec();
            let half = eligible.len() / 2;
            let mut train: Vec<usize> = order[..half].iter().map(|&i| eligible[i]).collect();
            let mut eval: Vec<usize> = order[half..].iter().map(|&i| eligible[i]).collect();
            train.sort_unstable();
            eval.sort_unstable();
            (train, eval)
        }
    };
    Ok(Prepared {
        split,
        nodes,
        targets,
        test_negatives,
        head_train,
        head_eval,
    })
}

impl Prepared {
    /// Message-passing graph of the base model.
    pub fn train_graph(&self, g: &Graph) -> Result<Graph> {
        g.with_edges(&self.split.train)
    }

    /// Message-passing graph after the deletion.
    pub fn remaining_graph(&self, g: &Graph, deletion: &DeletionSpec) -> Result<Graph> {
        let g_r = g.with_edges(&self.split.remaining)?;
        match deletion {
            DeletionSpec::Features { .. } => g_r.with_zeroed_features(&self.nodes),
            _ => Ok(g_r),
        }
    }
}

pub fn train_config_for(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(seed, STREAM_TRAIN),
        ..cfg.train.clone()
    }
}

pub fn unlearn_config_for(cfg: &ExperimentConfig, seed: u64) -> UnlearnConfig {
    UnlearnConfig {
        random_pair_seed: derive_seed(seed, STREAM_PAIRS),
        ..cfg.unlearn.clone()
    }
}

/// Scores one method's embeddings. `before` is the base model on its
/// training graph; `after` is the method's output on the post-deletion graph.
pub fn evaluate(
    g: &Graph,
    g_r: &Graph,
    prep: &Prepared,
    deletion: &DeletionSpec,
    before: &NodeEmbeddings,
    after: &NodeEmbeddings,
    seed: u64,
) -> Result<EvalReport> {
    let mut report = EvalReport::default();
    if !prep.split.test.is_empty() {
        let (roc, prc) = eval_test(after, &prep.split.test, &prep.test_negatives)?;
        report.auroc_test = Some(roc);
        report.auprc_test = Some(prc);
    }
    if !prep.targets.is_empty() {
        if !matches!(deletion, DeletionSpec::Features { .. }) {
            let (roc, prc) = eval_deleted(after, g_r, &prep.targets, derive_seed(seed, STREAM_EVAL + 100))?;
            report.auroc_deleted = Some(roc);
            report.auprc_deleted = Some(prc);
        }
        report.mi_ratio = Some(mi_ratio(before, after, &prep.targets)?);
    }
    if let Some(labels) = g.labels() {
        if !prep.head_train.is_empty() && !prep.head_eval.is_empty() {
            let head = train_cls_head(after, labels, &prep.head_train, HEAD_EPOCHS, HEAD_LR)?;
            let scores = after.z().matmul(&head)?;
            let preds = predict_classes(&scores);
            let picked: Vec<usize> = prep.head_eval.iter().map(|&u| preds[u]).collect();
            let truth: Vec<usize> = prep.head_eval.iter().map(|&u| labels[u]).collect();
            let (acc, f1) = node_scores(&picked, &truth)?;
            report.node_accuracy = Some(acc);
            report.node_f1 = Some(f1);
        }
    }
    Ok(report)
}

/// File layout of one seed's stage outputs.
#[derive(Clone, Debug)]
pub struct SeedDir(pub PathBuf);

impl SeedDir {
    pub fn new(out: &Path, seed: u64) -> Self {
        SeedDir(out.join(format!("seed_{seed}")))
    }

    pub fn prepared(&self) -> PathBuf {
        self.0.join("split.json")
    }

    pub fn base(&self) -> PathBuf {
        self.0.join("base.gnnd")
    }

    pub fn operator(&self) -> PathBuf {
        self.0.join("delop.gnnd")
    }

    pub fn losses(&self) -> PathBuf {
        self.0.join("losses.json")
    }

    pub fn eval(&self) -> PathBuf {
        self.0.join("eval.json")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(fs::File::open(path)?))?)
}

pub fn save_model_file(path: &Path, model: &GnnModel) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    save_model(&mut w, model)?;
    use std::io::Write;
    w.flush()?;
    Ok(())
}

pub fn load_model_file(path: &Path) -> Result<GnnModel> {
    load_model(&mut BufReader::new(fs::File::open(path)?))
}

pub fn save_operator_file(path: &Path, op: &DeletionOperator) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    op.save(&mut w)?;
    use std::io::Write;
    w.flush()?;
    Ok(())
}

pub fn load_operator_file(path: &Path) -> Result<DeletionOperator> {
    DeletionOperator::load(&mut BufReader::new(fs::File::open(path)?))
}

/// Output of the training stage.
pub struct TrainStage {
    pub prepared: Prepared,
    pub model: GnnModel,
    pub seconds: f64,
}

/// Prepares the split, trains the base model and writes both to `dir`.
pub fn stage_train(cfg: &ExperimentConfig, g: &Graph, seed: u64, dir: &SeedDir) -> Result<TrainStage> {
    let prepared = prepare(cfg, g, seed)?;
    let start = Instant::now();
    let model = train_base(g, &train_split(&prepared.split), &train_config_for(cfg, seed))?;
    let seconds = start.elapsed().as_secs_f64();
    write_json(&dir.prepared(), &prepared)?;
    save_model_file(&dir.base(), &model)?;
    Ok(TrainStage {
        prepared,
        model,
        seconds,
    })
}

/// The base model trains on every training edge, before any deletion.
fn train_split(split: &EdgeSplit) -> EdgeSplit {
    split.with_deleted(Vec::new())
}

/// Output of the unlearning stage.
pub struct UnlearnStage {
    pub operator: DeletionOperator,
    pub losses: LossReport,
    pub seconds: f64,
}

/// Trains the deletion operator from the stage files in `dir`.
pub fn stage_unlearn(cfg: &ExperimentConfig, g: &Graph, seed: u64, dir: &SeedDir) -> Result<UnlearnStage> {
    let prepared: Prepared = read_json(&dir.prepared())?;
    let base = load_model_file(&dir.base())?;
    let out = run_operator(cfg, g, &prepared, &base, seed)?;
    save_operator_file(&dir.operator(), &out.operator)?;
    write_json(&dir.losses(), &out.losses)?;
    Ok(out)
}

fn run_operator(
    cfg: &ExperimentConfig,
    g: &Graph,
    prepared: &Prepared,
    base: &GnnModel,
    seed: u64,
) -> Result<UnlearnStage> {
    let g_train = prepared.train_graph(g)?;
    let ucfg = unlearn_config_for(cfg, seed);
    let start = Instant::now();
    let (operator, losses) = match cfg.deletion {
        DeletionSpec::Features { .. } => {
            let (op, _, losses) = unlearn_node_features(base, &g_train, &prepared.nodes, &ucfg)?;
            (op, losses)
        }
        _ => unlearn(base, &g_train, &prepared.targets, &ucfg)?,
    };
    Ok(UnlearnStage {
        operator,
        losses,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Evaluates the base model and the deletion operator from the stage files.
pub fn stage_eval(cfg: &ExperimentConfig, g: &Graph, seed: u64, dir: &SeedDir) -> Result<Vec<MethodReport>> {
    let prepared: Prepared = read_json(&dir.prepared())?;
    let base = load_model_file(&dir.base())?;
    let op = load_operator_file(&dir.operator())?;
    let ctx = EvalContext::new(cfg, g, &prepared, &base, seed)?;
    let reports = vec![
        ctx.report(BASE, &ctx.before, 0.0, 0)?,
        ctx.report(OPERATOR, &ctx.unlearned(&base, &op)?, 0.0, op.param_count())?,
    ];
    write_json(&dir.eval(), &reports)?;
    Ok(reports)
}

struct EvalContext<'a> {
    cfg: &'a ExperimentConfig,
    g: &'a Graph,
    g_r: Graph,
    ops_r: GraphOperands,
    prepared: &'a Prepared,
    before: NodeEmbeddings,
    seed: u64,
}

impl<'a> EvalContext<'a> {
    fn new(cfg: &'a ExperimentConfig, g: &'a Graph, prepared: &'a Prepared, base: &GnnModel, seed: u64) -> Result<Self> {
        let g_r = prepared.remaining_graph(g, &cfg.deletion)?;
        let before = forward(&prepared.train_graph(g)?, base)?;
        Ok(EvalContext {
            cfg,
            g,
            ops_r: GraphOperands::new(&g_r),
            g_r,
            prepared,
            before,
            seed,
        })
    }

    fn unlearned(&self, base: &GnnModel, op: &DeletionOperator) -> Result<NodeEmbeddings> {
        unlearned_forward_with(&self.ops_r, base, op)
    }

    fn report(&self, method: &str, after: &NodeEmbeddings, seconds: f64, params: usize) -> Result<MethodReport> {
        let mut report = evaluate(self.g, &self.g_r, self.prepared, &self.cfg.deletion, &self.before, after, self.seed)?;
        report.wall_time_seconds = seconds;
        report.delop_params = params;
        Ok(MethodReport {
            method: method.to_string(),
            seed: self.seed,
            report,
        })
    }
}

/// All stages for one seed. Stage outputs go through `dir` and are read
/// back, so the result matches re-entering the pipeline at any stage.
pub fn run_seed(cfg: &ExperimentConfig, g: &Graph, seed: u64, dir: &SeedDir) -> Result<(MethodReport, Vec<MethodReport>)> {
    info!("seed {seed}: training base model");
    let trained = stage_train(cfg, g, seed, dir)?;
    let prepared: Prepared = read_json(&dir.prepared())?;
    let base = load_model_file(&dir.base())?;
    let ctx = EvalContext::new(cfg, g, &prepared, &base, seed)?;
    let base_report = ctx.report(BASE, &ctx.before, trained.seconds, 0)?;

    info!("seed {seed}: unlearning {} edges", prepared.targets.len());
    let un = stage_unlearn(cfg, g, seed, dir)?;
    let op = load_operator_file(&dir.operator())?;
    let mut reports = vec![ctx.report(OPERATOR, &ctx.unlearned(&base, &op)?, un.seconds, op.param_count())?];

    let p = &cfg.baseline_params;
    for &b in &cfg.baselines {
        info!("seed {seed}: baseline {}", b.name());
        let start = Instant::now();
        let model = match b {
            Baseline::Retrain => baseline_retrain(&ctx.g_r, &prepared.split, &train_config_for(cfg, seed))?,
            Baseline::GradAscent => baseline_grad_ascent(
                &base,
                &prepared.train_graph(g)?,
                &prepared.targets,
                p.grad_ascent_steps,
                p.grad_ascent_lr,
            )?,
            Baseline::NoisyFinetune => baseline_noisy_finetune(
                &base,
                &ctx.g_r,
                &prepared.split,
                p.finetune_steps,
                p.finetune_lr,
                p.noise_sigma,
                derive_seed(seed, STREAM_NOISE),
            )?,
        };
        let seconds = start.elapsed().as_secs_f64();
        reports.push(ctx.report(b.name(), &forward_with(&ctx.ops_r, &model)?, seconds, 0)?);
    }
    write_json(&dir.eval(), &reports)?;
    Ok((base_report, reports))
}

pub fn results_path(out: &Path) -> PathBuf {
    out.join("results.json")
}

/// Runs every seed and writes `results.json` under `cfg.output_dir`. An
/// existing results file is only replaced with `force`.
pub fn run_pipeline(cfg: &ExperimentConfig, force: bool) -> Result<RunRecord> {
    cfg.validate()?;
    let hash = cfg.hash();
    let results = results_path(&cfg.output_dir);
    if results.exists() && !force {
        let previous: Option<RunRecord> = read_json(&results).ok();
        return Err(match previous {
            Some(r) if r.config_hash == hash => Error::Argument(format!(
                "{} already holds results for this config (hash {}); pass --force to rerun",
                results.display(),
                &hash[..12]
            )),
            _ => Error::Argument(format!(
                "{} holds results of a different config; pass --force to overwrite",
                results.display()
            )),
        });
    }
    let started_at = unix_now();
    let g = load_graph(&cfg.dataset)?;
    info!("graph: {} nodes, {} edges", g.num_nodes(), g.num_edges());
    let mut base_reports = Vec::new();
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let (b, r) = run_seed(cfg, &g, seed, &SeedDir::new(&cfg.output_dir, seed))?;
        base_reports.push(b);
        reports.extend(r);
    }
    let record = RunRecord {
        config_hash: hash,
        config: cfg.clone(),
        started_at,
        finished_at: unix_now(),
        base_reports,
        reports,
    };
    write_json(&results, &record)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{FeatureKind, SyntheticGraph};

    fn tiny_config(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = DatasetSpec::Synthetic {
            graph: SyntheticGraph::PlantedPartition {
                n: 60,
                blocks: 3,
                p_in: 0.3,
                p_out: 0.02,
            },
            features: FeatureKind::Gaussian(8),
            seed: 5,
        };
        cfg.test_fraction = 0.1;
        cfg.train.hidden_dims = vec![8, 8];
        cfg.train.epochs = 10;
        cfg.unlearn.epochs = 5;
        cfg.deletion = DeletionSpec::Edges {
            ratio: 0.03,
            locality: crate::graph::Locality::In,
        };
        cfg.seeds = vec![0, 1];
        cfg.output_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }

    #[test]
    fn pipeline_counts_and_guard() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let record = run_pipeline(&cfg, false).unwrap();
        assert_eq!(record.reports.len(), 2 * 4);
        assert_eq!(record.base_reports.len(), 2);
        assert!(matches!(run_pipeline(&cfg, false), Err(Error::Argument(_))));
        assert!(run_pipeline(&cfg, true).is_ok());
    }

    #[test]
    fn empty_baselines_leave_operator_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.baselines.clear();
        cfg.seeds = vec![3];
        let record = run_pipeline(&cfg, false).unwrap();
        assert_eq!(record.reports.len(), 1);
        assert_eq!(record.reports[0].method, OPERATOR);
        assert!(record.reports[0].report.delop_params > 0);
    }
}
