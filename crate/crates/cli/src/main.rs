use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graph_unlearn::experiment::{
    load_graph, render_table, results_path, run_pipeline, stage_eval, stage_train, stage_unlearn, summarize,
    ExperimentConfig, SeedDir,
};
use graph_unlearn::graph::save_dataset;
use graph_unlearn::synthetic::{generate_synthetic, FeatureKind, SyntheticGraph};
use graph_unlearn::{Error, Result};
use log::info;

/// Learned deletion operators for unlearning edges, nodes and features from
/// GCN link predictors.
#[derive(Parser)]
#[command(name = "graph-unlearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (INI).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Split edges, sample the deletion and train the base model.
    Train(RunArgs),
    /// Train the deletion operator from the files `train` wrote.
    Unlearn(RunArgs),
    /// Evaluate the base model and the deletion operator.
    Eval(RunArgs),
    /// Every stage plus the baselines for all seeds; writes results.json.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        /// Replace an existing results.json.
        #[arg(long)]
        force: bool,
    },
    /// Write a synthetic graph as edges.tsv / features.csv / labels.csv.
    Gen {
        /// e.g. `two_cliques(20,1)`, `erdos_renyi(100,0.05)`,
        /// `barabasi_albert(500,3)`, `planted_partition(500,5,0.1,0.002)`.
        #[arg(long)]
        graph: SyntheticGraph,
        /// `degree:N`, `gaussian:N` or `topic:N`.
        #[arg(long, default_value = "degree:16")]
        features: FeatureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn per_seed<F>(args: &RunArgs, mut stage: F) -> Result<()>
where
    F: FnMut(&ExperimentConfig, &graph_unlearn::Graph, u64, &SeedDir) -> Result<()>,
{
    let cfg = load_config(args)?;
    let g = load_graph(&cfg.dataset)?;
    for &seed in &cfg.seeds {
        stage(&cfg, &g, seed, &SeedDir::new(&cfg.output_dir, seed))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::from)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => per_seed(&args, |cfg, g, seed, dir| {
            let t = stage_train(cfg, g, seed, dir)?;
            info!(
                "seed {seed}: base model trained in {:.2}s, {} edges marked for deletion",
                t.seconds,
                t.prepared.targets.len()
            );
            println!("{}", dir.base().display());
            Ok(())
        }),
        Command::Unlearn(args) => per_seed(&args, |cfg, g, seed, dir| {
            let u = stage_unlearn(cfg, g, seed, dir)?;
            info!(
                "seed {seed}: operator with {} parameters trained in {:.2}s",
                u.operator.param_count(),
                u.seconds
            );
            println!("{}", dir.operator().display());
            Ok(())
        }),
        Command::Eval(args) => per_seed(&args, |cfg, g, seed, dir| {
            let reports = stage_eval(cfg, g, seed, dir)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
            Ok(())
        }),
        Command::Pipeline { run, force } => {
            let cfg = load_config(&run)?;
            let record = run_pipeline(&cfg, force)?;
            let summary = summarize(&record);
            let table = render_table(&summary);
            write_text(&cfg.output_dir.join("summary.txt"), &table)?;
            write_text(
                &cfg.output_dir.join("summary.json"),
                &serde_json::to_string_pretty(&summary)?,
            )?;
            print!("{table}");
            info!("results written to {}", results_path(&cfg.output_dir).display());
            Ok(())
        }
        Command::Gen {
            graph,
            features,
            seed,
            out,
        } => {
            let g = generate_synthetic(&graph, features, seed)?;
            save_dataset(&g, &out)?;
            println!("{} nodes, {} edges -> {}", g.num_nodes(), g.num_edges(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
