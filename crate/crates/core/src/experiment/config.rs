use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::Locality;
use crate::model::TrainConfig;
use crate::synthetic::{FeatureKind, SyntheticGraph};
use crate::tensor::OptimizerKind;
use crate::unlearn::{Activation, OperatorMode, UnlearnConfig};

/// `[section]` → key → value.
pub type IniDocument = BTreeMap<String, BTreeMap<String, String>>;

/// Parses flat `key = value` lines grouped under `[section]` headers. Keys
/// before any header land in section `""`. `#` and `;` start comment lines.
pub fn parse_ini(text: &str, origin: &Path) -> Result<IniDocument> {
    let mut doc = IniDocument::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header {line:?}")))?;
            section = name.trim().to_string();
            doc.entry(section.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(err("empty key".into()));
        }
        if doc
            .entry(section.clone())
            .or_default()
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(err(format!("duplicate key {key:?} in [{section}]")));
        }
    }
    Ok(doc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Directory with `edges.tsv` and optional `features.csv` / `labels.csv`,
    /// or a single edge-list file. `feature_dim` sizes the degree features
    /// used when no feature file exists.
    Path { path: PathBuf, feature_dim: usize },
    /// Generated graph; `seed` fixes the graph across run seeds.
    Synthetic {
        graph: SyntheticGraph,
        features: FeatureKind,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionSpec {
    /// A fraction of all edges, drawn from training edges inside or outside
    /// the test edges' 2-hop neighborhood.
    Edges { ratio: f64, locality: Locality },
    /// Explicit nodes, or `count` nodes drawn per seed when the list is empty.
    Nodes { nodes: Vec<usize>, count: usize },
    /// Zero the features of the given nodes (or `count` random ones).
    Features { nodes: Vec<usize>, count: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Retrain,
    GradAscent,
    NoisyFinetune,
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "retrain" => Ok(Baseline::Retrain),
            "grad_ascent" | "grad-ascent" => Ok(Baseline::GradAscent),
            "noisy_finetune" | "noisy-finetune" => Ok(Baseline::NoisyFinetune),
            other => Err(Error::Config(format!("unknown baseline {other:?}"))),
        }
    }
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::Retrain => "retrain",
            Baseline::GradAscent => "grad_ascent",
            Baseline::NoisyFinetune => "noisy_finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub grad_ascent_steps: usize,
    pub grad_ascent_lr: f64,
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    pub noise_sigma: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            grad_ascent_steps: 20,
            grad_ascent_lr: 1e-3,
            finetune_steps: 20,
            finetune_lr: 1e-3,
            noise_sigma: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub deletion: DeletionSpec,
    pub baselines: Vec<Baseline>,
    pub baseline_params: BaselineParams,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Synthetic {
                graph: SyntheticGraph::TwoCliques {
                    per_clique: 20,
                    bridges: 1,
                },
                features: FeatureKind::default(),
                seed: 0,
            },
            test_fraction: 0.05,
            validation_fraction: 0.05,
            train: TrainConfig::default(),
            unlearn: UnlearnConfig::default(),
            deletion: DeletionSpec::Edges {
                ratio: 0.025,
                locality: Locality::In,
            },
            baselines: vec![Baseline::Retrain, Baseline::GradAscent, Baseline::NoisyFinetune],
            baseline_params: BaselineParams::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Typed accessors over one INI section.
struct Section<'a> {
    name: &'a str,
    entries: Option<&'a BTreeMap<String, String>>,
}

impl<'a> Section<'a> {
    fn raw(&self, key: &str) -> Option<&'a str> {
        self.entries.and_then(|e| e.get(key)).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{}] {key} = {v:?} is not valid", self.name))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("[{}] {key}: bad item {item:?}", self.name)))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("dataset", &["source", "path", "feature_dim", "graph", "features", "seed"]),
    ("split", &["test_fraction", "validation_fraction"]),
    ("model", &["hidden_dims"]),
    ("train", &["epochs", "lr", "optimizer"]),
    (
        "unlearn",
        &["lambda", "epochs", "lr", "optimizer", "pairs_per_deleted_edge", "mode", "activation"],
    ),
    ("deletion", &["kind", "ratio", "locality", "nodes", "count"]),
    (
        "baselines",
        &[
            "methods",
            "grad_ascent_steps",
            "grad_ascent_lr",
            "finetune_steps",
            "finetune_lr",
            "noise_sigma",
        ],
    ),
    ("run", &["seeds", "output_dir"]),
];

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        // a malformed config is a configuration error, not a data error
        let mut cfg = Self::from_ini(&text, path).map_err(|e| match e {
            Error::Parse { .. } => Error::Config(e.to_string()),
            other => other,
        })?;
        // relative dataset paths resolve against the config's directory
        if let DatasetSpec::Path { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_ini(text: &str, origin: &Path) -> Result<Self> {
        let doc = parse_ini(text, origin)?;
        for (name, keys) in &doc {
            let allowed = KNOWN
                .iter()
                .find(|(s, _)| s == name)
                .ok_or_else(|| Error::Config(format!("unknown section [{name}]")))?
                .1;
            if let Some(k) = keys.keys().find(|k| !allowed.contains(&k.as_str())) {
                return Err(Error::Config(format!("unknown key {k:?} in [{name}]")));
            }
        }
        let section = |name: &'static str| Section {
            name,
            entries: doc.get(name),
        };
        let mut cfg = ExperimentConfig::default();

        let ds = section("dataset");
        match ds.raw("source").unwrap_or("synthetic") {
            "synthetic" => {
                let graph = match ds.raw("graph") {
                    Some(s) => s.parse()?,
                    None => match &cfg.dataset {
                        DatasetSpec::Synthetic { graph, .. } => graph.clone(),
                        DatasetSpec::Path { .. } => unreachable!("default is synthetic"),
                    },
                };
                let features = match ds.raw("features") {
                    Some(s) => s.parse()?,
                    None => FeatureKind::default(),
                };
                cfg.dataset = DatasetSpec::Synthetic {
                    graph,
                    features,
                    seed: ds.parse("seed")?.unwrap_or(0),
                };
            }
            "path" => {
                let path = ds
                    .raw("path")
                    .ok_or_else(|| Error::Config("[dataset] source = path needs path".into()))?;
                cfg.dataset = DatasetSpec::Path {
                    path: PathBuf::from(path),
                    feature_dim: ds.parse("feature_dim")?.unwrap_or(16),
                };
            }
            other => return Err(Error::Config(format!("unknown dataset source {other:?}"))),
        }

        let split = section("split");
        if let Some(v) = split.parse("test_fraction")? {
            cfg.test_fraction = v;
        }
        if let Some(v) = split.parse("validation_fraction")? {
            cfg.validation_fraction = v;
        }

        if let Some(dims) = section("model").list("hidden_dims")? {
            cfg.train.hidden_dims = dims;
        }
        let train = section("train");
        if let Some(v) = train.parse("epochs")? {
            cfg.train.epochs = v;
        }
        if let Some(v) = train.parse("lr")? {
            cfg.train.lr = v;
        }
        if let Some(v) = train.parse::<OptimizerKind>("optimizer")? {
            cfg.train.optimizer = v;
        }

        let un = section("unlearn");
        if let Some(v) = un.parse("lambda")? {
            cfg.unlearn.lambda = v;
        }
        if let Some(v) = un.parse("epochs")? {
            cfg.unlearn.epochs = v;
        }
        if let Some(v) = un.parse("lr")? {
            cfg.unlearn.lr = v;
        }
        if let Some(v) = un.parse::<OptimizerKind>("optimizer")? {
            cfg.unlearn.optimizer = v;
        }
        if let Some(v) = un.parse("pairs_per_deleted_edge")? {
            cfg.unlearn.pairs_per_deleted_edge = v;
        }
        if let Some(v) = un.parse::<OperatorMode>("mode")? {
            cfg.unlearn.mode = v;
        }
        if let Some(v) = un.parse::<Activation>("activation")? {
            cfg.unlearn.activation = v;
        }

        let del = section("deletion");
        let nodes = del.list("nodes")?.unwrap_or_default();
        let count = del.parse("count")?.unwrap_or(0);
        cfg.deletion = match del.raw("kind").unwrap_or("edges") {
            "edges" => DeletionSpec::Edges {
                ratio: del.parse("ratio")?.unwrap_or(0.025),
                locality: del.parse("locality")?.unwrap_or(Locality::In),
            },
            "nodes" => DeletionSpec::Nodes { nodes, count },
            "features" => DeletionSpec::Features { nodes, count },
            other => return Err(Error::Config(format!("unknown deletion kind {other:?}"))),
        };

        let bl = section("baselines");
        if let Some(v) = bl.list("methods")? {
            cfg.baselines = v;
        }
        let p = &mut cfg.baseline_params;
        if let Some(v) = bl.parse("grad_ascent_steps")? {
            p.grad_ascent_steps = v;
        }
        if let Some(v) = bl.parse("grad_ascent_lr")? {
            p.grad_ascent_lr = v;
        }
        if let Some(v) = bl.parse("finetune_steps")? {
            p.finetune_steps = v;
        }
        if let Some(v) = bl.parse("finetune_lr")? {
            p.finetune_lr = v;
        }
        if let Some(v) = bl.parse("noise_sigma")? {
            p.noise_sigma = v;
        }

        let run = section("run");
        if let Some(v) = run.list("seeds")? {
            cfg.seeds = v;
        }
        if let Some(v) = run.raw("output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        Ok(cfg)
    }

    /// Renders the config in the format [`ExperimentConfig::from_ini`] reads.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let join = |v: &[String]| v.join(", ");
        s.push_str("[dataset]\n");
        match &self.dataset {
            DatasetSpec::Path { path, feature_dim } => {
                let _ = writeln!(s, "source = path\npath = {}\nfeature_dim = {feature_dim}", path.display());
            }
            DatasetSpec::Synthetic { graph, features, seed } => {
                let _ = writeln!(
                    s,
                    "source = synthetic\ngraph = {graph}\nfeatures = {features}\nseed = {seed}"
                );
            }
        }
        let _ = writeln!(
            s,
            "\n[split]\ntest_fraction = {}\nvalidation_fraction = {}",
            self.test_fraction, self.validation_fraction
        );
        let dims: Vec<String> = self.train.hidden_dims.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "\n[model]\nhidden_dims = {}", join(&dims));
        let _ = writeln!(
            s,
            "\n[train]\nepochs = {}\nlr = {}\noptimizer = {}",
            self.train.epochs,
            self.train.lr,
            optimizer_name(self.train.optimizer)
        );
        let u = &self.unlearn;
        let _ = writeln!(
            s,
            "\n[unlearn]\nlambda = {}\nepochs = {}\nlr = {}\noptimizer = {}\npairs_per_deleted_edge = {}\nmode = {}\nactivation = {}",
            u.lambda,
            u.epochs,
            u.lr,
            optimizer_name(u.optimizer),
            u.pairs_per_deleted_edge,
            match u.mode {
                OperatorMode::LayerWise => "layer-wise",
                OperatorMode::LastLayerOnly => "last-layer-only",
            },
            match u.activation {
                Activation::Linear => "linear",
                Activation::Sigmoid => "sigmoid",
            }
        );
        s.push_str("\n[deletion]\n");
        let node_list = |nodes: &[usize]| join(&nodes.iter().map(ToString::to_string).collect::<Vec<_>>());
        match &self.deletion {
            DeletionSpec::Edges { ratio, locality } => {
                let loc = match locality {
                    Locality::In => "in",
                    Locality::Out => "out",
                };
                let _ = writeln!(s, "kind = edges\nratio = {ratio}\nlocality = {loc}");
            }
            DeletionSpec::Nodes { nodes, count } => {
                let _ = writeln!(s, "kind = nodes\nnodes = {}\ncount = {count}", node_list(nodes));
            }
            DeletionSpec::Features { nodes, count } => {
                let _ = writeln!(s, "kind = features\nnodes = {}\ncount = {count}", node_list(nodes));
            }
        }
        let methods: Vec<String> = self.baselines.iter().map(|b| b.name().to_string()).collect();
        let p = &self.baseline_params;
        let _ = writeln!(
            s,
            "\n[baselines]\nmethods = {}\ngrad_ascent_steps = {}\ngrad_ascent_lr = {}\nfinetune_steps = {}\nfinetune_lr = {}\nnoise_sigma = {}",
            join(&methods),
            p.grad_ascent_steps,
            p.grad_ascent_lr,
            p.finetune_steps,
            p.finetune_lr,
            p.noise_sigma
        );
        let seeds: Vec<String> = self.seeds.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            s,
            "\n[run]\nseeds = {}\noutput_dir = {}",
            join(&seeds),
            self.output_dir.display()
        );
        s
    }

    /// Checks ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let frac_ok = |f: f64| (0.0..1.0).contains(&f);
        if !frac_ok(self.test_fraction)
            || !frac_ok(self.validation_fraction)
            || self.test_fraction + self.validation_fraction >= 1.0
        {
            return Err(Error::Config("split fractions must be in [0, 1) and sum below 1".into()));
        }
        if self.train.hidden_dims.is_empty() || self.train.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden_dims must be non-empty and positive".into()));
        }
        if self.train.epochs == 0 || !(self.train.lr > 0.0) {
            return Err(Error::Config("training needs epochs > 0 and lr > 0".into()));
        }
        self.unlearn.validate()?;
        if let DeletionSpec::Edges { ratio, .. } = self.deletion {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::Config(format!("deletion ratio {ratio} must lie in (0, 1)")));
            }
        }
        if let DatasetSpec::Path { path, feature_dim } = &self.dataset {
            if !path.exists() {
                return Err(Error::Config(format!("dataset path {} does not exist", path.display())));
            }
            if *feature_dim == 0 {
                return Err(Error::Config("feature_dim must be positive".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn optimizer_name(k: OptimizerKind) -> &'static str {
    match k {
        OptimizerKind::Adam => "adam",
        OptimizerKind::Sgd => "sgd",
    }
}
