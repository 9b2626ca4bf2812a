//! Seeded k-fold cross-validation over hyperedges.
//!
//! Everything a fold needs (its split, validation edges, fixed test
//! negatives, truncated partial edges) is derived from `(config.seed, fold)`
//! alone, so a saved fold checkpoint can be re-evaluated without the run
//! that produced it.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde_json::json;

use crate::autodiff::checkpoint::Checkpoint;
use crate::classifier::{
    evaluate_pairs, f1, fixed_negatives, train_classifier, ClassificationTask, ClassifierModel,
    NegativeSampler,
};
use crate::encoder::Structure;
use crate::error::{Error, Result};
use crate::expander::{
    evaluate_partials, holdout_split, train_gan, ExpansionContext, ExpansionModel, ExpansionTask,
    PartialEdge,
};
use crate::harness::config::{ExperimentConfig, Task};
use crate::harness::metrics::{summarize, FoldKey, Metric, MetricRecord};
use crate::hypergraph::{EdgeId, Hypergraph, VertexId};
use crate::par::{self, Exec};
use crate::rng::stream;

/// Disjoint, exhaustive folds of `0..m`; sizes differ by at most one.
pub fn fold_partition(m: usize, folds: usize, seed: u64) -> Result<Vec<Vec<EdgeId>>> {
    if folds < 2 || folds > m {
        return Err(Error::Config(format!(
            "cannot split {m} hyperedges into {folds} folds"
        )));
    }
    let mut ids: Vec<EdgeId> = (0..m).collect();
    ids.shuffle(&mut stream(seed, 10));
    let mut out = vec![Vec::new(); folds];
    for (i, id) in ids.into_iter().enumerate() {
        out[i % folds].push(id);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Seed for everything inside one fold.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    stream(seed, 100 + fold as u64).next_u64()
}

#[derive(Clone, Debug)]
pub enum FoldModel {
    Classifier(ClassifierModel),
    Expander(ExpansionModel),
}

impl FoldModel {
    fn store(&self) -> &crate::autodiff::ParamStore {
        match self {
            FoldModel::Classifier(m) => &m.store,
            FoldModel::Expander(m) => &m.store,
        }
    }

    fn store_mut(&mut self) -> &mut crate::autodiff::ParamStore {
        match self {
            FoldModel::Classifier(m) => &mut m.store,
            FoldModel::Expander(m) => &mut m.store,
        }
    }

    /// A freshly initialized model of the shape `config` describes.
    pub fn untrained(config: &ExperimentConfig, fold: usize) -> Result<Self> {
        let s = fold_seed(config.seed, fold);
        Ok(match config.task {
            Task::Classify => {
                FoldModel::Classifier(ClassifierModel::from_config(&config.classifier(s))?)
            }
            Task::Expand => FoldModel::Expander(ExpansionModel::from_config(&config.gan(s))?),
        })
    }
}

struct ClassifyFold {
    task: ClassificationTask,
    test: Vec<Vec<VertexId>>,
    test_negatives: Vec<Vec<VertexId>>,
    /// Every non-test edge; the structure seen at test time.
    observed: Hypergraph,
}

struct ExpandFold {
    task: ExpansionTask,
    partials: Vec<PartialEdge>,
}

enum Prepared {
    Classify(ClassifyFold),
    Expand(ExpandFold),
}

fn prepare(h: &Hypergraph, config: &ExperimentConfig, fold: usize) -> Result<Option<Prepared>> {
    let folds = fold_partition(h.num_edges(), config.folds, config.seed)?;
    let test_ids = folds
        .get(fold)
        .ok_or(Error::OutOfRange {
            kind: "fold",
            id: fold,
            count: folds.len(),
        })?
        .clone();
    let s = fold_seed(config.seed, fold);
    let n = h.num_vertices();
    match config.task {
        Task::Classify => {
            let is_test: Vec<bool> = {
                let mut t = vec![false; h.num_edges()];
                test_ids.iter().for_each(|&i| t[i] = true);
                t
            };
            let mut train: Vec<Vec<VertexId>> = (0..h.num_edges())
                .filter(|&i| !is_test[i])
                .map(|i| h.edge(i).to_vec())
                .collect();
            let test: Vec<Vec<VertexId>> = test_ids.iter().map(|&i| h.edge(i).to_vec()).collect();
            let observed = Hypergraph::new(n, train.clone())?;
            train.shuffle(&mut stream(s, 11));
            let n_val = (train.len() as f64 * config.val_fraction).round() as usize;
            let val = train.split_off(train.len() - n_val);
            let sampler = NegativeSampler::for_hypergraph(h);
            let test_negatives =
                fixed_negatives(&sampler, &test, config.negatives, &mut stream(s, 12));
            Ok(Some(Prepared::Classify(ClassifyFold {
                task: ClassificationTask {
                    n,
                    train_edges: train,
                    val_edges: val,
                    forbidden: h.edges().to_vec(),
                },
                test,
                test_negatives,
                observed,
            })))
        }
        Task::Expand => {
            let (task, partials) = holdout_split(n, h.edges(), &test_ids, &mut stream(s, 13))?;
            if partials.is_empty() {
                log::warn!("fold {fold}: no test hyperedge of size >= 3, skipped");
                return Ok(None);
            }
            Ok(Some(Prepared::Expand(ExpandFold { task, partials })))
        }
    }
}

fn record(
    dataset: &str,
    config: &ExperimentConfig,
    fold: usize,
    metric: Metric,
    value: f64,
) -> MetricRecord {
    MetricRecord {
        dataset: dataset.to_string(),
        task: config.task,
        fold: FoldKey::Fold(fold),
        metric,
        value,
        config_hash: config.hash(),
        seed: config.seed,
        wall_time: None,
    }
}

fn evaluate_prepared(
    prepared: &Prepared,
    model: &FoldModel,
    dataset: &str,
    config: &ExperimentConfig,
    fold: usize,
    exec: Exec,
) -> Result<Vec<MetricRecord>> {
    match (prepared, model) {
        (Prepared::Classify(p), FoldModel::Classifier(m)) => {
            let state = m.encode(&Structure::new(&p.observed))?;
            let scored = evaluate_pairs(m, &state, &p.test, &p.test_negatives, exec)?;
            let threshold = config.classifier(0).threshold;
            Ok(vec![record(
                dataset,
                config,
                fold,
                Metric::F1,
                f1(&scored, threshold)?,
            )])
        }
        (Prepared::Expand(p), FoldModel::Expander(m)) => {
            let ctx = ExpansionContext::new(Hypergraph::new(p.task.n, p.task.edges.clone())?);
            let out = evaluate_partials(
                m,
                &ctx,
                &p.partials,
                config.cap,
                fold_seed(config.seed, fold),
                exec,
            )?;
            let mean = |f: fn(&crate::expander::ExpansionOutcome) -> f64| {
                out.iter().map(f).sum::<f64>() / out.len() as f64
            };
            Ok(vec![
                record(dataset, config, fold, Metric::Nsd, mean(|o| o.nsd)),
                record(
                    dataset,
                    config,
                    fold,
                    Metric::NsdTrueK,
                    mean(|o| o.nsd_true_k),
                ),
                record(
                    dataset,
                    config,
                    fold,
                    Metric::NsdIndependent,
                    mean(|o| o.nsd_independent),
                ),
                record(
                    dataset,
                    config,
                    fold,
                    Metric::NsdRecursive,
                    mean(|o| o.nsd_recursive),
                ),
            ])
        }
        _ => Err(Error::Config(
            "model kind does not match the configured task".into(),
        )),
    }
}

#[derive(Clone, Debug)]
pub struct FoldRun {
    pub fold: usize,
    pub records: Vec<MetricRecord>,
    pub model: FoldModel,
}

impl FoldRun {
    pub fn checkpoint(&self, dataset: &str, config: &ExperimentConfig) -> Checkpoint {
        Checkpoint::capture(
            self.model.store(),
            json!({
                "dataset": dataset,
                "fold": self.fold,
                "config": config.to_text(),
                "metrics": self.records.iter().map(|r| json!({"metric": r.metric, "value": r.value})).collect::<Vec<_>>(),
            }),
        )
    }
}

/// Train and test one fold. `None` when the fold has no usable test edge.
pub fn run_fold(
    h: &Hypergraph,
    dataset: &str,
    config: &ExperimentConfig,
    fold: usize,
    timed: bool,
    exec: Exec,
) -> Result<Option<FoldRun>> {
    config.validate()?;
    let start = Instant::now();
    let Some(prepared) = prepare(h, config, fold)? else {
        return Ok(None);
    };
    let s = fold_seed(config.seed, fold);
    let model = match &prepared {
        Prepared::Classify(p) => {
            FoldModel::Classifier(train_classifier(&p.task, &config.classifier(s), exec)?.model)
        }
        Prepared::Expand(p) => FoldModel::Expander(train_gan(&p.task, &config.gan(s), exec)?.model),
    };
    let mut records = evaluate_prepared(&prepared, &model, dataset, config, fold, exec)?;
    if timed {
        let secs = start.elapsed().as_secs_f64();
        records.iter_mut().for_each(|r| r.wall_time = Some(secs));
    }
    Ok(Some(FoldRun {
        fold,
        records,
        model,
    }))
}

#[derive(Clone, Debug)]
pub struct CvRun {
    pub folds: Vec<FoldRun>,
    /// Fold rows followed by mean and std rows.
    pub records: Vec<MetricRecord>,
}

/// All folds, optionally in parallel. Output does not depend on `exec`.
pub fn run_cv(
    h: &Hypergraph,
    dataset: &str,
    config: &ExperimentConfig,
    timed: bool,
    exec: Exec,
) -> Result<CvRun> {
    config.validate()?;
    let runs = par::map_range(exec, config.folds, |f| {
        run_fold(h, dataset, config, f, timed, exec)
    });
    let mut folds = Vec::new();
    for r in runs {
        if let Some(run) = r? {
            folds.push(run);
        }
    }
    if folds.is_empty() {
        return Err(Error::DegenerateDataset("every fold was skipped".into()));
    }
    let mut records: Vec<MetricRecord> = folds.iter().flat_map(|f| f.records.clone()).collect();
    records.extend(summarize(&records));
    Ok(CvRun { folds, records })
}

/// What a checkpoint says about its run.
#[derive(Clone, Debug)]
pub struct CheckpointInfo {
    pub dataset: String,
    pub fold: usize,
    pub config: ExperimentConfig,
}

pub fn checkpoint_info(ckpt: &Checkpoint) -> Result<CheckpointInfo> {
    let meta = &ckpt.meta;
    let missing = |k: &str| Error::Checkpoint(format!("metadata lacks `{k}`"));
    let dataset = meta["dataset"]
        .as_str()
        .ok_or_else(|| missing("dataset"))?
        .to_string();
    let fold = meta["fold"].as_u64().ok_or_else(|| missing("fold"))? as usize;
    let text = meta["config"].as_str().ok_or_else(|| missing("config"))?;
    let task = text
        .lines()
        .find_map(|l| {
            l.split_once('=')
                .filter(|(k, _)| k.trim() == "task")
                .map(|(_, v)| v.trim())
        })
        .ok_or_else(|| missing("task"))?
        .parse()?;
    let mut config = ExperimentConfig::new(task);
    config.apply_text(text)?;
    Ok(CheckpointInfo {
        dataset,
        fold,
        config,
    })
}

/// Rebuild a fold's model from a checkpoint and re-run its test evaluation
/// on `h`, which must be the dataset the checkpoint was trained on.
pub fn evaluate_checkpoint(
    h: &Hypergraph,
    ckpt: &Checkpoint,
    exec: Exec,
) -> Result<Vec<MetricRecord>> {
    let info = checkpoint_info(ckpt)?;
    let mut model = FoldModel::untrained(&info.config, info.fold)?;
    ckpt.restore_into(model.store_mut())?;
    let prepared = prepare(h, &info.config, info.fold)?.ok_or_else(|| {
        Error::DegenerateDataset(format!("fold {} has no usable test edge", info.fold))
    })?;
    evaluate_prepared(
        &prepared,
        &model,
        &info.dataset,
        &info.config,
        info.fold,
        exec,
    )
}
