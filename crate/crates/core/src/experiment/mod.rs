//! Experiment configuration, the end-to-end pipeline and result reporting.

mod config;
mod pipeline;
mod report;

pub use config::{parse_ini, Baseline, BaselineParams, DatasetSpec, DeletionSpec, ExperimentConfig, IniDocument};
pub use pipeline::{
    derive_seed, evaluate, load_graph, load_model_file, load_operator_file, prepare, read_json, results_path,
    run_pipeline, run_seed, save_model_file, save_operator_file, stage_eval, stage_train, stage_unlearn,
    train_config_for, unlearn_config_for, MethodReport, Prepared, RunRecord, SeedDir, TrainStage, UnlearnStage,
    BASE, OPERATOR,
};
pub use report::{render_table, summarize, MethodSummary, MetricSummary, Summary};
