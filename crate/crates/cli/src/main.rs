use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _};
use clap::{CommandFactory, Parser, Subcommand};

use hyperset::autodiff::Checkpoint;
use hyperset::harness::config::{ExperimentConfig, Task};
use hyperset::harness::cv::{checkpoint_info, evaluate_checkpoint, run_cv, run_fold};
use hyperset::harness::dataset::{write_native, DatasetSource};
use hyperset::harness::metrics::{summarize, write_jsonl, MetricRecord};
use hyperset::hypergraph::Hypergraph;
use hyperset::iso::hypergraph_wl_test;
use hyperset::par::Exec;

#[derive(Debug, Parser)]
#[command(
    name = "hyperset",
    version,
    about = "Hyperedge classification and expansion on hypergraphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print vertex and hyperedge counts and the hyperedge size histogram.
    Stats {
        /// Native file, or simplex-triple directory named after the dataset.
        dataset: PathBuf,
    },
    /// Rewrite a simplex-triple dataset in native format.
    Convert {
        dir: PathBuf,
        out: PathBuf,
        /// File prefix inside `dir`; defaults to the directory name.
        #[arg(long)]
        name: Option<String>,
    },
    /// Run the 1-WL test on two hypergraphs.
    WlTest { a: PathBuf, b: PathBuf },
    /// Cross-validate hyperedge classification.
    TrainClassify(TrainArgs),
    /// Cross-validate hyperedge expansion.
    TrainExpand(TrainArgs),
    /// Re-run the test evaluation stored in a fold checkpoint.
    Eval {
        checkpoint: PathBuf,
        /// Dataset path; defaults to the one recorded in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct TrainArgs {
    /// Dataset path; may instead be given as `dataset = <path>` in the config file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Plain-text `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Metrics file (line-delimited JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one checkpoint per fold into this directory.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Run only this fold.
    #[arg(long)]
    fold: Option<usize>,
    /// Record wall-time in the metrics rows.
    #[arg(long)]
    time: bool,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

fn load(path: &Path) -> anyhow::Result<(DatasetSource, Hypergraph)> {
    let src =
        DatasetSource::resolve(path).with_context(|| format!("dataset {}", path.display()))?;
    let h = src
        .load()
        .with_context(|| format!("loading {}", path.display()))?;
    Ok((src, h))
}

fn stats(path: &Path) -> anyhow::Result<()> {
    let (src, h) = load(path)?;
    println!("dataset: {}", src.name);
    println!(
        "vertices: {}, hyperedges: {}",
        h.num_vertices(),
        h.num_edges()
    );
    println!("size histogram:");
    for (size, count) in h.size_histogram() {
        println!("  {size}: {count}");
    }
    Ok(())
}

/// Config from defaults, then the file, then flags. Returns the dataset path
/// taken from `--data` or the file.
fn build_config(task: Task, a: &TrainArgs) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut c = ExperimentConfig::new(task);
    let mut data = None;
    if let Some(path) = &a.config {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut rest = String::new();
        for line in text.lines() {
            match line.split('#').next().unwrap_or("").split_once('=') {
                Some((k, v)) if k.trim() == "dataset" => data = Some(PathBuf::from(v.trim())),
                _ => {
                    rest.push_str(line);
                    rest.push('\n');
                }
            }
        }
        c.apply_text(&rest)
            .with_context(|| format!("config {}", path.display()))?;
    }
    c.task = task;
    let flags = [
        ("hidden", a.hidden.map(|v| v.to_string())),
        ("lr", a.lr.map(|v| v.to_string())),
        ("layers", a.layers.map(|v| v.to_string())),
        ("negatives", a.negatives.map(|v| v.to_string())),
        ("folds", a.folds.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("cap", a.cap.map(|v| v.to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("patience", a.patience.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            c.set(k, &v)?;
        }
    }
    c.validate()?;
    let data =
        a.data.clone().or(data).ok_or_else(|| {
            anyhow!("no dataset: pass --data or set `dataset` in the config file")
        })?;
    Ok((c, data))
}

fn print_records(records: &[MetricRecord]) {
    for r in records {
        println!("{}\t{}\t{}", r.fold, r.metric, r.value);
    }
}

fn train(task: Task, a: &TrainArgs) -> anyhow::Result<()> {
    let (config, data) = build_config(task, a)?;
    let (src, h) = load(&data)?;
    let exec = if a.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let runs = match a.fold {
        Some(f) => {
            let run = run_fold(&h, &src.name, &config, f, a.time, exec)?
                .ok_or_else(|| anyhow!("fold {f} has no usable test hyperedge"))?;
            let mut records = run.records.clone();
            records.extend(summarize(&records));
            (vec![run], records)
        }
        None => {
            let cv = run_cv(&h, &src.name, &config, a.time, exec)?;
            (cv.folds, cv.records)
        }
    };
    let (folds, records) = runs;
    print_records(&records);
    if let Some(out) = &a.out {
        write_jsonl(out, &records)?;
    }
    if let Some(dir) = &a.checkpoint_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for run in &folds {
            let mut ckpt = run.checkpoint(&src.name, &config);
            ckpt.meta["source"] = serde_json::Value::String(data.display().to_string());
            let path = dir.join(format!("{}-{}-fold{}.json", src.name, task, run.fold));
            ckpt.save(&path)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn eval(checkpoint: &Path, data: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    checkpoint_info(&ckpt)?;
    let data = match data {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from(
            ckpt.meta["source"]
                .as_str()
                .ok_or_else(|| anyhow!("checkpoint records no dataset path; pass --data"))?,
        ),
    };
    let (_, h) = load(&data)?;
    let records = evaluate_checkpoint(&h, &ckpt, Exec::Parallel)?;
    print_records(&records);
    let recorded = ckpt.meta["metrics"].as_array().cloned().unwrap_or_default();
    for r in &records {
        let stored = recorded
            .iter()
            .find(|m| m["metric"] == serde_json::to_value(r.metric).unwrap_or_default())
            .and_then(|m| m["value"].as_f64());
        match stored {
            Some(v) if v.to_bits() == r.value.to_bits() => {}
            Some(v) => bail!(
                "{:?}: recomputed {} but checkpoint recorded {v}",
                r.metric,
                r.value
            ),
            None => log::warn!("checkpoint records no {:?}", r.metric),
        }
    }
    println!(
        "reproduced: {} metric(s) match the checkpoint",
        records.len()
    );
    if let Some(out) = out {
        write_jsonl(out, &records)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats { dataset } => stats(&dataset),
        Command::Convert { dir, out, name } => {
            let name = match name {
                Some(n) => n,
                None => DatasetSource::resolve(&dir)?.name,
            };
            let h = hyperset::harness::dataset::load_simplex_triple(&dir, &name)?;
            write_native(&h, &out)?;
            println!(
                "vertices: {}, hyperedges: {}",
                h.num_vertices(),
                h.num_edges()
            );
            Ok(())
        }
        Command::WlTest { a, b } => {
            let (_, ha) = load(&a)?;
            let (_, hb) = load(&b)?;
            println!("{}", hypergraph_wl_test(&ha, &hb)?);
            Ok(())
        }
        Command::TrainClassify(a) => train(Task::Classify, &a),
        Command::TrainExpand(a) => train(Task::Expand, &a),
        Command::Eval {
            checkpoint,
            data,
            out,
        } => eval(&checkpoint, data.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::FAILURE
        }
    }
}
