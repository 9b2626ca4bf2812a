//! Hyperedge classification: score arbitrary vertex sets as hyperedges with
//! `sigmoid(r(Γ(q)))`, trained under the closed-world assumption with fresh
//! size-matched negatives every epoch.

use std::collections::HashSet;

use rand::seq::index::sample as index_sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Adam, Matrix, Mlp, ParamStore, Tape};
use crate::encoder::{EmbeddingState, Encoder, EncoderConfig, RhoMode, Structure};
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, VertexId};
use crate::par::{self, Exec};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleSource {
    Observed,
    SampledNegative,
    HeldoutPositive,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub vertices: Vec<VertexId>,
    pub label: bool,
    pub source: ExampleSource,
}

impl LabeledExample {
    pub fn new(mut vertices: Vec<VertexId>, source: ExampleSource) -> Self {
        vertices.sort_unstable();
        LabeledExample {
            vertices,
            label: source != ExampleSource::SampledNegative,
            source,
        }
    }
}

/// Draws negatives: uniform vertex subsets of the positive's size that are
/// not known hyperedges and not repeated within one call.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    n: usize,
    forbidden: HashSet<Vec<VertexId>>,
    attempts_per_sample: usize,
}

impl NegativeSampler {
    pub fn new(n: usize, forbidden: impl IntoIterator<Item = Vec<VertexId>>) -> Self {
        NegativeSampler {
            n,
            forbidden: forbidden
                .into_iter()
                .map(|mut e| {
                    e.sort_unstable();
                    e
                })
                .collect(),
            attempts_per_sample: 50,
        }
    }

    pub fn for_hypergraph(h: &Hypergraph) -> Self {
        Self::new(h.num_vertices(), h.edges().iter().cloned())
    }

    pub fn is_forbidden(&self, set: &[VertexId]) -> bool {
        self.forbidden.contains(set)
    }

    /// `count` distinct negatives for `positive`. When rejection sampling
    /// exhausts its budget the remainder comes from replacing one vertex of
    /// the positive; the result may be shorter than `count` only when the
    /// vertex universe is too small to supply more.
    pub fn sample(
        &self,
        positive: &[VertexId],
        count: usize,
        rng: &mut impl Rng,
    ) -> Vec<Vec<VertexId>> {
        let k = positive.len();
        let mut out: Vec<Vec<VertexId>> = Vec::with_capacity(count);
        if count == 0 || k == 0 || k > self.n {
            return out;
        }
        let mut seen: HashSet<Vec<VertexId>> = HashSet::new();
        let mut attempts = 0;
        while out.len() < count && attempts < self.attempts_per_sample * count {
            attempts += 1;
            let mut s = index_sample(rng, self.n, k).into_vec();
            s.sort_unstable();
            if !self.forbidden.contains(&s) && seen.insert(s.clone()) {
                out.push(s);
            }
        }
        let mut attempts = 0;
        while out.len() < count && attempts < self.attempts_per_sample * count && self.n > k {
            attempts += 1;
            let mut s = positive.to_vec();
            let slot = rng.gen_range(0..k);
            let v = rng.gen_range(0..self.n);
            if s.contains(&v) {
                continue;
            }
            s[slot] = v;
            s.sort_unstable();
            if !self.forbidden.contains(&s) && seen.insert(s.clone()) {
                out.push(s);
            }
        }
        out
    }
}

/// F1 of `(probability, label)` pairs at `threshold`; zero when there are no
/// true positives.
pub fn f1(scored: &[(f64, bool)], threshold: f64) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::EmptySet);
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for &(p, y) in scored {
        let pred = p >= threshold;
        match (pred, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub negatives: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Positives per gradient step; 0 means the whole epoch in one step.
    pub batch_size: usize,
    /// Fraction of training positives withheld from the message-passing
    /// structure in each epoch, so training sees positives that are not
    /// themselves observed, as at test time. 0 disables it.
    pub holdout_fraction: f64,
    pub threshold: f64,
    pub rho_mode: RhoMode,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 32,
            layers: 2,
            lr: 0.001,
            negatives: 5,
            max_epochs: 500,
            patience: 20,
            batch_size: 0,
            holdout_fraction: 0.0,
            threshold: 0.5,
            rho_mode: RhoMode::MultisetUnion,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub r: Mlp,
}

/// Shared encoder plus the classification head, with their parameters.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub head: ClassifierHead,
}

impl ClassifierModel {
    pub fn new(encoder_config: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let encoder = Encoder::new(encoder_config, &mut store, rng)?;
        let d = encoder.hidden();
        let r = Mlp::new(
            &mut store,
            "head.r",
            &[encoder.rep_dim(), d, 1],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        Ok(ClassifierModel {
            store,
            encoder,
            head: ClassifierHead { r },
        })
    }

    pub fn from_config(config: &ClassifierConfig) -> Result<Self> {
        let mut cfg = EncoderConfig::new(config.hidden, config.layers);
        cfg.rho_mode = config.rho_mode;
        Self::new(cfg, &mut stream(config.seed, 0))
    }

    pub fn encode(&self, structure: &Structure) -> Result<EmbeddingState> {
        self.encoder.encode(&self.store, structure)
    }

    /// `sigmoid(r(Γ(q)))` for each query.
    pub fn score(
        &self,
        state: &EmbeddingState,
        queries: &[Vec<VertexId>],
        exec: Exec,
    ) -> Result<Vec<f64>> {
        const CHUNK: usize = 512;
        let chunks: Vec<&[Vec<VertexId>]> = queries.chunks(CHUNK).collect();
        let parts = par::map(exec, &chunks, |chunk| -> Result<Vec<f64>> {
            let reps = self.encoder.edge_reps(&self.store, state, chunk)?;
            let logits = self.head.r.infer(&self.store, &reps)?;
            Ok(logits
                .data()
                .iter()
                .map(|&z| crate::autodiff::matrix::sigmoid(z))
                .collect())
        });
        let mut out = Vec::with_capacity(queries.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Mean binary cross-entropy of the queries against their labels, on a
    /// fresh tape over `structure`.
    pub fn loss_tape<'a>(
        &'a self,
        t: &mut Tape<'a>,
        structure: &Structure,
        queries: &[Vec<VertexId>],
        labels: &[f64],
    ) -> Result<crate::autodiff::Var> {
        let state = self.encoder.encode_tape(t, structure)?;
        let reps = self.encoder.edge_reps_tape(t, structure, &state, queries)?;
        let logits = self.head.r.forward(t, reps)?;
        t.bce_with_logits(logits, labels.to_vec())
    }
}

/// Everything the training loop needs about one split.
#[derive(Clone, Debug)]
pub struct ClassificationTask {
    /// Vertex count of the dataset.
    pub n: usize,
    /// Training positives; these are also the message-passing structure.
    pub train_edges: Vec<Vec<VertexId>>,
    /// Validation positives, absent from the structure during training.
    pub val_edges: Vec<Vec<VertexId>>,
    /// Known hyperedges no negative may equal.
    pub forbidden: Vec<Vec<VertexId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Score `positives` against `negatives_per` fixed negatives each and return
/// the `(probability, label)` pairs, positives first.
pub fn evaluate_pairs(
    model: &ClassifierModel,
    state: &EmbeddingState,
    positives: &[Vec<VertexId>],
    negatives: &[Vec<VertexId>],
    exec: Exec,
) -> Result<Vec<(f64, bool)>> {
    let mut queries = positives.to_vec();
    queries.extend_from_slice(negatives);
    let scores = model.score(state, &queries, exec)?;
    Ok(scores
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, i < positives.len()))
        .collect())
}

pub fn fixed_negatives(
    sampler: &NegativeSampler,
    positives: &[Vec<VertexId>],
    per_positive: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<VertexId>> {
    positives
        .iter()
        .flat_map(|p| sampler.sample(p, per_positive, rng))
        .collect()
}

/// Train with per-epoch negative sampling, binary cross-entropy and Adam,
/// keeping the parameters with the best validation F1 (early stopping with
/// `patience`).
pub fn train_classifier(
    task: &ClassificationTask,
    config: &ClassifierConfig,
    exec: Exec,
) -> Result<TrainedClassifier> {
    if task.train_edges.len() < 2 {
        return Err(Error::DegenerateDataset(
            "classifier training needs at least two hyperedges".into(),
        ));
    }
    let mut model = ClassifierModel::from_config(config)?;
    let train_h = Hypergraph::new(task.n, task.train_edges.clone())?;
    let full_structure = Structure::new(&train_h);
    let sampler = NegativeSampler::new(task.n, task.forbidden.iter().cloned());

    let mut val_rng = stream(config.seed, 1);
    let val_negs = fixed_negatives(&sampler, &task.val_edges, config.negatives, &mut val_rng);
    let mut rng = stream(config.seed, 2);

    let mut opt = Adam::for_all(&model.store, config.lr);
    let mut best_store = model.store.clone();
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();

    let batch = if config.batch_size == 0 {
        task.train_edges.len()
    } else {
        config.batch_size
    };

    for epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..task.train_edges.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(batch) {
            let structure = if config.holdout_fraction > 0.0 {
                let withheld: HashSet<usize> = chunk
                    .iter()
                    .copied()
                    .filter(|_| rng.gen::<f64>() < config.holdout_fraction)
                    .collect();
                let kept: Vec<Vec<VertexId>> = task
                    .train_edges
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !withheld.contains(i))
                    .map(|(_, e)| e.clone())
                    .collect();
                Structure::new(&Hypergraph::new(task.n, kept)?)
            } else {
                full_structure.clone()
            };
            let mut queries = Vec::with_capacity(chunk.len() * (config.negatives + 1));
            let mut labels = Vec::with_capacity(queries.capacity());
            for &i in chunk {
                let pos = &task.train_edges[i];
                queries.push(pos.clone());
                labels.push(1.0);
                for neg in sampler.sample(pos, config.negatives, &mut rng) {
                    queries.push(neg);
                    labels.push(0.0);
                }
            }
            let grads = {
                let mut t = Tape::new(&model.store);
                let loss = model.loss_tape(&mut t, &structure, &queries, &labels)?;
                epoch_loss += t.value(loss).item();
                t.backward(loss)?
            };
            opt.step(&mut model.store, &grads)?;
            steps += 1;
        }
        let loss = epoch_loss / steps as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "classifier training diverged in epoch {epoch} (loss {loss})"
            )));
        }

        let (val_f1, val_loss) = if task.val_edges.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let state = model.encode(&full_structure)?;
            let pairs = evaluate_pairs(&model, &state, &task.val_edges, &val_negs, exec)?;
            (f1(&pairs, config.threshold)?, cross_entropy(&pairs))
        };
        log::debug!("epoch {epoch}: loss {loss:.5} val_f1 {val_f1:.4}");
        history.push(EpochLog {
            epoch,
            loss,
            val_f1,
        });

        // Validation F1 decides; its ties (typically all-negative early
        // epochs at F1 = 0) go to the lower validation loss. Without
        // validation data the last epoch wins.
        if task.val_edges.is_empty() || (val_f1, -val_loss) > best {
            best = (val_f1, -val_loss);
            best_epoch = epoch;
            best_store = model.store.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    model.store = best_store;
    Ok(TrainedClassifier {
        model,
        history,
        best_epoch,
    })
}

/// Mean binary cross-entropy of `(probability, label)` pairs.
fn cross_entropy(pairs: &[(f64, bool)]) -> f64 {
    const EPS: f64 = 1e-12;
    let total: f64 = pairs
        .iter()
        .map(|&(p, y)| -(if y { p } else { 1.0 - p }).max(EPS).ln())
        .sum();
    total / pairs.len().max(1) as f64
}

/// Matrix of representations for a batch of queries (used by diagnostics).
pub fn representations(
    model: &ClassifierModel,
    state: &EmbeddingState,
    queries: &[Vec<VertexId>],
) -> Result<Matrix> {
    model.encoder.edge_reps(&model.store, state, queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::tests::figure1;

    #[test]
    fn negatives_respect_contract() {
        let h = figure1();
        let sampler = NegativeSampler::for_hypergraph(&h);
        let mut rng = stream(4, 0);
        let negs = sampler.sample(&[0, 1], 5, &mut rng);
        assert_eq!(negs.len(), 5);
        let distinct: HashSet<_> = negs.iter().cloned().collect();
        assert_eq!(distinct.len(), 5);
        for n in &negs {
            assert_eq!(n.len(), 2);
            assert!(!h.edges().contains(n));
        }
        assert!(sampler.sample(&[0, 1], 0, &mut rng).is_empty());
        let again = sampler.sample(&[0, 1], 5, &mut stream(4, 0));
        assert_eq!(negs, again);
    }

    #[test]
    fn negatives_fall_back_when_universe_is_tiny() {
        // 3 vertices, pairs {0,1},{0,2} known: only {1,2} remains.
        let sampler = NegativeSampler::new(3, vec![vec![0, 1], vec![0, 2]]);
        let negs = sampler.sample(&[0, 1], 5, &mut stream(0, 0));
        assert_eq!(negs, vec![vec![1, 2]]);
    }

    #[test]
    fn f1_examples() {
        let mut trivial = vec![(1.0, true)];
        trivial.extend(std::iter::repeat_n((1.0, false), 5));
        assert!((f1(&trivial, 0.5).unwrap() - 2.0 / 7.0).abs() < 1e-15);
        let perfect = vec![(0.9, true), (0.1, false)];
        assert_eq!(f1(&perfect, 0.5).unwrap(), 1.0);
        let wrong = vec![(0.1, true), (0.9, false)];
        assert_eq!(f1(&wrong, 0.5).unwrap(), 0.0);
        assert_eq!(f1(&[(0.1, false)], 0.5).unwrap(), 0.0);
        assert!(f1(&[], 0.5).is_err());
    }

    #[test]
    fn trivial_identity_over_ratios() {
        for ratio in 1..=10usize {
            let mut pairs = Vec::new();
            for _ in 0..7 {
                pairs.push((1.0, true));
                pairs.extend(std::iter::repeat_n((1.0, false), ratio));
            }
            let expect = 2.0 / (2.0 + ratio as f64);
            assert!((f1(&pairs, 0.5).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_cross_entropy() {
        assert_eq!(cross_entropy(&[(1.0, true), (0.0, false)]), 0.0);
        let half = cross_entropy(&[(0.5, true), (0.5, false)]);
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(cross_entropy(&[(0.0, true)]).is_finite());
    }

    #[test]
    fn zero_head_scores_half() {
        let mut model = ClassifierModel::from_config(&ClassifierConfig {
            hidden: 8,
            ..Default::default()
        })
        .unwrap();
        let last = model.head.r.last_layer().clone();
        model.store.get_mut(last.weight).data_mut().fill(0.0);
        if let Some(b) = last.bias {
            model.store.get_mut(b).data_mut().fill(0.0);
        }
        let state = model.encode(&Structure::new(&figure1())).unwrap();
        let s = model
            .score(
                &state,
                &[vec![0, 1], vec![2, 3, 4], vec![1]],
                Exec::Sequential,
            )
            .unwrap();
        assert!(s.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn labeled_examples() {
        let e = LabeledExample::new(vec![3, 1], ExampleSource::SampledNegative);
        assert_eq!(e.vertices, vec![1, 3]);
        assert!(!e.label);
        assert!(LabeledExample::new(vec![1, 2], ExampleSource::HeldoutPositive).label);
    }
}
