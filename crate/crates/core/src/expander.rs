//! Variable-size hyperedge expansion: size prediction, joint top-1 selection
//! over sampled candidate subsets of the two-hop pool, the discriminator
//! `σ(f(g(Γ(ē ∪ V)) − g(Γ(ē)) − g(Γ(V))))`, adversarial training, the
//! normalized set difference and two single-vertex baselines.

use std::collections::HashSet;

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::matrix::{dot, sigmoid};
use crate::autodiff::{Activation, Adam, Matrix, Mlp, ParamStore, SelectSpan, Tape, Var};
use crate::encoder::{
    EmbeddingState, Encoder, EncoderConfig, QueryBasis, RhoMode, Structure, TapedState,
};
use crate::error::{Error, Result};
use crate::hypergraph::{EdgeId, Hypergraph, VertexId};
use crate::par::{self, Exec};
use crate::rng::stream;

pub const MIN_MISSING: usize = 2;
pub const MAX_MISSING: usize = 7;

/// A hyperedge with `hidden` removed. `partial ∪ hidden` is the origin edge;
/// both parts are sorted and disjoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialEdge {
    pub partial: Vec<VertexId>,
    pub hidden: Vec<VertexId>,
    pub origin: EdgeId,
}

pub fn is_eligible(edge: &[VertexId]) -> bool {
    edge.len() > MIN_MISSING
}

/// Remove `k ~ U{2, …, min(7, |e| − 1)}` uniformly chosen vertices.
pub fn make_partial(edge: &[VertexId], origin: EdgeId, rng: &mut impl Rng) -> Result<PartialEdge> {
    if !is_eligible(edge) {
        return Err(Error::Ineligible(origin));
    }
    let hi = MAX_MISSING.min(edge.len() - 1);
    let k = rng.gen_range(MIN_MISSING..=hi);
    make_partial_k(edge, origin, k, rng)
}

/// Remove exactly `k` uniformly chosen vertices, `1 ≤ k < |e|`.
pub fn make_partial_k(
    edge: &[VertexId],
    origin: EdgeId,
    k: usize,
    rng: &mut impl Rng,
) -> Result<PartialEdge> {
    if k == 0 || k >= edge.len() {
        return Err(Error::Ineligible(origin));
    }
    let mut sorted = edge.to_vec();
    sorted.sort_unstable();
    let mut drop = vec![false; sorted.len()];
    for i in index_sample(rng, sorted.len(), k) {
        drop[i] = true;
    }
    let (mut partial, mut hidden) = (Vec::new(), Vec::new());
    for (v, d) in sorted.into_iter().zip(drop) {
        if d {
            hidden.push(v);
        } else {
            partial.push(v);
        }
    }
    Ok(PartialEdge {
        partial,
        hidden,
        origin,
    })
}

/// `(max(|p|, |t|) − |p ∩ t|) / |t|`, the minimum number of insertions,
/// deletions and substitutions turning `pred` into `target`, per target
/// element.
pub fn normalized_set_difference(pred: &[VertexId], target: &[VertexId]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::EmptySet);
    }
    let p: HashSet<VertexId> = pred.iter().copied().collect();
    let t: HashSet<VertexId> = target.iter().copied().collect();
    let common = p.intersection(&t).count();
    Ok((p.len().max(t.len()) - common) as f64 / t.len() as f64)
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) is divisible by (i + 1) at every step.
        r = match r.checked_mul((n - i) as u128) {
            Some(x) => x / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    r
}

/// All `k`-subsets of the sorted `pool`, lexicographically.
fn combinations(pool: &[VertexId], k: usize) -> Vec<Vec<VertexId>> {
    let n = pool.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| pool[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// `min(C(|pool|, k), cap)` distinct `k`-subsets drawn uniformly without
/// replacement, sorted lexicographically. Enumerates exactly when
/// `C(|pool|, k) ≤ cap`.
pub fn sample_subsets(
    pool: &[VertexId],
    k: usize,
    cap: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<VertexId>>> {
    if cap == 0 || k == 0 {
        return Err(Error::Config(
            "subset sampling needs cap >= 1 and k >= 1".into(),
        ));
    }
    let mut pool = pool.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < k {
        return Err(Error::PoolUnderfull {
            available: pool.len(),
            wanted: k,
        });
    }
    let total = binomial(pool.len(), k);
    if total <= cap as u128 {
        return Ok(combinations(&pool, k));
    }
    if total <= 4 * cap as u128 && total <= 2_000_000 {
        let all = combinations(&pool, k);
        let mut picked = index_sample(rng, all.len(), cap).into_vec();
        picked.sort_unstable();
        return Ok(picked.into_iter().map(|i| all[i].clone()).collect());
    }
    // Fewer than a quarter of all subsets are wanted, so rejection is cheap.
    let mut seen: HashSet<Vec<VertexId>> = HashSet::with_capacity(cap);
    while seen.len() < cap {
        let mut s: Vec<VertexId> = index_sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        s.sort_unstable();
        seen.insert(s);
    }
    let mut out: Vec<_> = seen.into_iter().collect();
    out.sort_unstable();
    Ok(out)
}

/// Index of the highest score; ties go to the lexicographically smallest
/// candidate.
pub fn top1(cands: &[Vec<VertexId>], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if s > scores[b] || (s == scores[b] && cands[i] < cands[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

/// Candidate indices ordered by descending score, ties lexicographically.
fn ranked(cands: &[Vec<VertexId>], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| cands[a].cmp(&cands[b]))
    });
    order
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub hidden: usize,
    pub layers: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Training partials per adversarial step.
    pub batch_size: usize,
    /// Subset cap at evaluation.
    pub cap: usize,
    /// Subset cap while generating negatives during training.
    pub train_cap: usize,
    /// Highest-scoring candidates kept on the tape for the generator step.
    pub shortlist: usize,
    pub rho_mode: RhoMode,
    /// Final activation of the discriminator's `f`.
    pub disc_output: DiscOutput,
    /// Discriminator updates per generator update.
    pub disc_steps: usize,
    pub seed: u64,
}

/// Nonnegative final activation of `f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscOutput {
    #[default]
    Softplus,
    /// `|z|`. Unlike softplus its gradient does not vanish at the
    /// constant solution `f = 0`.
    Abs,
}

impl DiscOutput {
    fn activation(self) -> Activation {
        match self {
            DiscOutput::Softplus => Activation::Softplus,
            DiscOutput::Abs => Activation::Abs,
        }
    }
}

impl std::str::FromStr for DiscOutput {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softplus" => Ok(DiscOutput::Softplus),
            "abs" => Ok(DiscOutput::Abs),
            other => Err(Error::Config(format!(
                "unknown discriminator output `{other}`"
            ))),
        }
    }
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            hidden: 32,
            layers: 2,
            lr: 0.001,
            epochs: 30,
            batch_size: 32,
            cap: 100_000,
            train_cap: 256,
            shortlist: 8,
            rho_mode: RhoMode::MultisetUnion,
            disc_output: DiscOutput::Softplus,
            disc_steps: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SizePredictor {
    pub a1: Mlp,
}

impl SizePredictor {
    pub fn round(raw: f64) -> usize {
        if !(raw >= 1.0) {
            return 1;
        }
        (raw.round() as usize).clamp(1, MAX_MISSING)
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    pub g: Mlp,
    /// Ends in the configured [`DiscOutput`], so its output is nonnegative.
    pub f: Mlp,
}

/// Hypergraph plus its grouped incidence, for pool lookups and encoding.
#[derive(Clone, Debug)]
pub struct ExpansionContext {
    pub h: Hypergraph,
    pub structure: Structure,
}

impl ExpansionContext {
    pub fn new(h: Hypergraph) -> Self {
        let structure = Structure::new(&h);
        ExpansionContext { h, structure }
    }
}

/// Frozen embeddings, plus the per-vertex basis when pooling allows it.
#[derive(Clone, Debug)]
pub struct FrozenState {
    pub state: EmbeddingState,
    basis: Option<QueryBasis>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenerationFlag {
    /// No vertex outside the partial edge is within two hops.
    EmptyPool,
    /// The pool held fewer vertices than requested; `k` was reduced.
    PoolUnderfull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub vertices: Vec<VertexId>,
    pub k: usize,
    pub pool_size: usize,
    pub candidates: usize,
    pub flag: Option<GenerationFlag>,
}

#[derive(Clone, Debug)]
pub struct ExpansionModel {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub size: SizePredictor,
    pub disc: Discriminator,
}

impl ExpansionModel {
    pub fn new(
        encoder_config: EncoderConfig,
        disc_output: DiscOutput,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut store = ParamStore::new();
        let encoder = Encoder::new(encoder_config, &mut store, rng)?;
        let (w, d) = (encoder.rep_dim(), encoder.hidden());
        let a1 = Mlp::new(
            &mut store,
            "size.a1",
            &[w, d, 1],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        let g = Mlp::new(
            &mut store,
            "disc.g",
            &[w, d, d],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        let f = Mlp::new(
            &mut store,
            "disc.f",
            &[d, d, 1],
            Activation::Relu,
            disc_output.activation(),
            rng,
        );
        Ok(ExpansionModel {
            store,
            encoder,
            size: SizePredictor { a1 },
            disc: Discriminator { g, f },
        })
    }

    pub fn from_config(config: &GanConfig) -> Result<Self> {
        let mut cfg = EncoderConfig::new(config.hidden, config.layers);
        cfg.rho_mode = config.rho_mode;
        Self::new(cfg, config.disc_output, &mut stream(config.seed, 0))
    }

    pub fn freeze(&self, structure: &Structure) -> Result<FrozenState> {
        let state = self.encoder.encode(&self.store, structure)?;
        let basis = match self.encoder.config().rho_mode {
            RhoMode::MultisetUnion => Some(self.encoder.query_basis(&state)?),
            RhoMode::Intersection => None,
        };
        Ok(FrozenState { state, basis })
    }

    pub fn reps(&self, frozen: &FrozenState, queries: &[Vec<VertexId>]) -> Result<Matrix> {
        match &frozen.basis {
            Some(b) => self.encoder.reps_from_basis(&self.store, b, queries),
            None => self.encoder.edge_reps(&self.store, &frozen.state, queries),
        }
    }

    pub fn raw_size(&self, frozen: &FrozenState, partial: &[VertexId]) -> Result<f64> {
        let r = self.reps(frozen, &[partial.to_vec()])?;
        Ok(self.size.a1.infer(&self.store, &r)?.item())
    }

    /// `round(a₁(Γ(ē)))` clamped to `[1, 7]`.
    pub fn predict_size(&self, frozen: &FrozenState, partial: &[VertexId]) -> Result<usize> {
        Ok(SizePredictor::round(self.raw_size(frozen, partial)?))
    }

    /// `⟨Γ(c), target⟩` for every candidate.
    pub fn score_candidates(
        &self,
        frozen: &FrozenState,
        target: &[f64],
        cands: &[Vec<VertexId>],
        exec: Exec,
    ) -> Result<Vec<f64>> {
        const CHUNK: usize = 1024;
        let chunks: Vec<&[Vec<VertexId>]> = cands.chunks(CHUNK).collect();
        let parts = par::map(exec, &chunks, |chunk| -> Result<Vec<f64>> {
            let r = self.reps(frozen, chunk)?;
            Ok((0..r.rows()).map(|i| dot(r.row(i), target)).collect())
        });
        let mut out = Vec::with_capacity(cands.len());
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    fn pool(&self, ctx: &ExpansionContext, partial: &[VertexId]) -> Result<Vec<VertexId>> {
        check_partial(partial, ctx.h.num_vertices())?;
        ctx.h.two_hop_pool(partial)
    }

    /// Best of the sampled `k`-subsets of the two-hop pool by inner product
    /// with `Γ(ē)`.
    pub fn generate_with_k(
        &self,
        ctx: &ExpansionContext,
        frozen: &FrozenState,
        partial: &[VertexId],
        k: usize,
        cap: usize,
        rng: &mut impl Rng,
        exec: Exec,
    ) -> Result<Generation> {
        let pool = self.pool(ctx, partial)?;
        if pool.is_empty() {
            return Ok(Generation {
                vertices: Vec::new(),
                k: 0,
                pool_size: 0,
                candidates: 0,
                flag: Some(GenerationFlag::EmptyPool),
            });
        }
        let (k, flag) = if pool.len() < k {
            (pool.len(), Some(GenerationFlag::PoolUnderfull))
        } else {
            (k, None)
        };
        let cands = sample_subsets(&pool, k, cap, rng)?;
        let target = self.reps(frozen, &[partial.to_vec()])?.into_vec();
        let scores = self.score_candidates(frozen, &target, &cands, exec)?;
        let best = top1(&cands, &scores).expect("at least one candidate");
        Ok(Generation {
            vertices: cands[best].clone(),
            k,
            pool_size: pool.len(),
            candidates: cands.len(),
            flag,
        })
    }

    pub fn generate(
        &self,
        ctx: &ExpansionContext,
        frozen: &FrozenState,
        partial: &[VertexId],
        cap: usize,
        rng: &mut impl Rng,
        exec: Exec,
    ) -> Result<Generation> {
        check_partial(partial, ctx.h.num_vertices())?;
        let k = self.predict_size(frozen, partial)?;
        self.generate_with_k(ctx, frozen, partial, k, cap, rng, exec)
    }

    /// `D*(V | ē)`.
    pub fn discriminate(
        &self,
        frozen: &FrozenState,
        completion: &[VertexId],
        partial: &[VertexId],
    ) -> Result<f64> {
        let union = disjoint_union(completion, partial)?;
        let r = self.reps(frozen, &[union, partial.to_vec(), completion.to_vec()])?;
        let g = self.disc.g.infer(&self.store, &r)?;
        let w = g.cols();
        let diff: Vec<f64> = (0..w)
            .map(|j| g.get(0, j) - g.get(1, j) - g.get(2, j))
            .collect();
        let f = self
            .disc
            .f
            .infer(&self.store, &Matrix::from_vec(1, w, diff)?)?;
        Ok(sigmoid(f.item()))
    }

    /// The `k` pool vertices with the best single-vertex scores.
    pub fn baseline_independent_topk(
        &self,
        ctx: &ExpansionContext,
        frozen: &FrozenState,
        partial: &[VertexId],
        k: usize,
        exec: Exec,
    ) -> Result<Generation> {
        let pool = self.pool(ctx, partial)?;
        let singles: Vec<Vec<VertexId>> = pool.iter().map(|&v| vec![v]).collect();
        let target = self.reps(frozen, &[partial.to_vec()])?.into_vec();
        let scores = self.score_candidates(frozen, &target, &singles, exec)?;
        let mut chosen: Vec<VertexId> = ranked(&singles, &scores)
            .into_iter()
            .take(k)
            .map(|i| pool[i])
            .collect();
        chosen.sort_unstable();
        Ok(baseline_result(chosen, k, pool.len()))
    }

    /// Add the best single vertex `k` times, re-encoding the grown set after
    /// each addition.
    pub fn baseline_recursive_top1(
        &self,
        ctx: &ExpansionContext,
        frozen: &FrozenState,
        partial: &[VertexId],
        k: usize,
        exec: Exec,
    ) -> Result<Generation> {
        let mut remaining = self.pool(ctx, partial)?;
        let pool_size = remaining.len();
        let mut grown = partial.to_vec();
        let mut chosen = Vec::new();
        while chosen.len() < k && !remaining.is_empty() {
            let singles: Vec<Vec<VertexId>> = remaining.iter().map(|&v| vec![v]).collect();
            let target = self.reps(frozen, &[grown.clone()])?.into_vec();
            let scores = self.score_candidates(frozen, &target, &singles, exec)?;
            let best = top1(&singles, &scores).expect("nonempty pool");
            let v = remaining.remove(best);
            chosen.push(v);
            grown.push(v);
        }
        chosen.sort_unstable();
        Ok(baseline_result(chosen, k, pool_size))
    }

    /// `f(g(Γ(ē ∪ V)) − g(Γ(ē)) − g(Γ(V)))` from representations on the tape.
    pub fn disc_logits_from_reps(
        &self,
        t: &mut Tape<'_>,
        union: Var,
        partial: Var,
        completion: Var,
    ) -> Result<Var> {
        let gu = self.disc.g.forward(t, union)?;
        let gp = self.disc.g.forward(t, partial)?;
        let gc = self.disc.g.forward(t, completion)?;
        let d1 = t.sub(gu, gp)?;
        let d2 = t.sub(d1, gc)?;
        self.disc.f.forward(t, d2)
    }

    /// Discriminator logits for `(partial, completion)` pairs.
    pub fn disc_logits_tape(
        &self,
        t: &mut Tape<'_>,
        s: &Structure,
        ts: &TapedState,
        pairs: &[(Vec<VertexId>, Vec<VertexId>)],
    ) -> Result<Var> {
        let mut unions = Vec::with_capacity(pairs.len());
        for (p, c) in pairs {
            unions.push(disjoint_union(c, p)?);
        }
        let partials: Vec<_> = pairs.iter().map(|(p, _)| p.clone()).collect();
        let comps: Vec<_> = pairs.iter().map(|(_, c)| c.clone()).collect();
        let ru = self.encoder.edge_reps_tape(t, s, ts, &unions)?;
        let rp = self.encoder.edge_reps_tape(t, s, ts, &partials)?;
        let rc = self.encoder.edge_reps_tape(t, s, ts, &comps)?;
        self.disc_logits_from_reps(t, ru, rp, rc)
    }

    /// Mean binary cross-entropy of the discriminator on labelled pairs.
    pub fn disc_loss_tape(
        &self,
        t: &mut Tape<'_>,
        s: &Structure,
        pairs: &[(Vec<VertexId>, Vec<VertexId>)],
        labels: &[f64],
    ) -> Result<Var> {
        let ts = self.encoder.encode_tape(t, s)?;
        let logits = self.disc_logits_tape(t, s, &ts, pairs)?;
        t.bce_with_logits(logits, labels.to_vec())
    }

    pub fn size_loss_tape(
        &self,
        t: &mut Tape<'_>,
        s: &Structure,
        partials: &[Vec<VertexId>],
        sizes: &[f64],
    ) -> Result<Var> {
        let ts = self.encoder.encode_tape(t, s)?;
        let r = self.encoder.edge_reps_tape(t, s, &ts, partials)?;
        let out = self.size.a1.forward(t, r)?;
        t.mse(out, sizes.to_vec())
    }

    /// Generator loss `−log D*(selected | ē)`, with the selection taken as
    /// the first entry of each shortlist and its gradient passed straight
    /// through to the candidate representation and the selection scores.
    pub fn generator_loss_tape(
        &self,
        t: &mut Tape<'_>,
        s: &Structure,
        shortlists: &[(Vec<VertexId>, Vec<Vec<VertexId>>)],
    ) -> Result<Var> {
        let ts = self.encoder.encode_tape(t, s)?;
        let mut flat = Vec::new();
        let mut targets = Vec::new();
        let mut spans = Vec::with_capacity(shortlists.len());
        let mut partials = Vec::with_capacity(shortlists.len());
        let mut unions = Vec::with_capacity(shortlists.len());
        for (p, cands) in shortlists {
            if cands.is_empty() {
                return Err(Error::EmptySet);
            }
            spans.push(SelectSpan {
                start: flat.len(),
                len: cands.len(),
                chosen: 0,
            });
            for c in cands {
                flat.push(c.clone());
                targets.push(p.clone());
            }
            unions.push(disjoint_union(&cands[0], p)?);
            partials.push(p.clone());
        }
        let rc = self.encoder.edge_reps_tape(t, s, &ts, &flat)?;
        let rt = self.encoder.edge_reps_tape(t, s, &ts, &targets)?;
        let scores = t.row_dot(rc, rt)?;
        // The discriminator's inputs are constants here, so the encoder moves
        // only through the selection scores.
        let ru = self.encoder.edge_reps_tape(t, s, &ts, &unions)?;
        let ru = t.constant(t.value(ru).clone());
        let rp = self.encoder.edge_reps_tape(t, s, &ts, &partials)?;
        let rp = t.constant(t.value(rp).clone());
        let cands = t.constant(t.value(rc).clone());
        let selected = t.select_straight_through(cands, scores, spans)?;
        let logits = self.disc_logits_from_reps(t, ru, rp, selected)?;
        t.bce_with_logits(logits, vec![1.0; shortlists.len()])
    }

    fn shortlist(
        &self,
        ctx: &ExpansionContext,
        frozen: &FrozenState,
        pe: &PartialEdge,
        cap: usize,
        len: usize,
        rng: &mut impl Rng,
        exec: Exec,
    ) -> Result<Option<Vec<Vec<VertexId>>>> {
        let pool = self.pool(ctx, &pe.partial)?;
        if pool.is_empty() {
            return Ok(None);
        }
        let k = pe.hidden.len().min(pool.len());
        let cands = sample_subsets(&pool, k, cap, rng)?;
        let target = self
            .reps(frozen, std::slice::from_ref(&pe.partial))?
            .into_vec();
        let scores = self.score_candidates(frozen, &target, &cands, exec)?;
        Ok(Some(
            ranked(&cands, &scores)
                .into_iter()
                .take(len.max(1))
                .map(|i| cands[i].clone())
                .collect(),
        ))
    }
}

fn check_partial(partial: &[VertexId], n: usize) -> Result<()> {
    if partial.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(&v) = partial.iter().find(|&&v| v >= n) {
        return Err(Error::OutOfRange {
            kind: "vertex",
            id: v,
            count: n,
        });
    }
    Ok(())
}

fn disjoint_union(a: &[VertexId], b: &[VertexId]) -> Result<Vec<VertexId>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let sb: HashSet<VertexId> = b.iter().copied().collect();
    if a.iter().any(|v| sb.contains(v)) {
        return Err(Error::Overlap);
    }
    let mut u: Vec<VertexId> = a.iter().chain(b).copied().collect();
    u.sort_unstable();
    Ok(u)
}

fn baseline_result(chosen: Vec<VertexId>, k: usize, pool_size: usize) -> Generation {
    let flag = if pool_size == 0 {
        Some(GenerationFlag::EmptyPool)
    } else if pool_size < k {
        Some(GenerationFlag::PoolUnderfull)
    } else {
        None
    };
    Generation {
        k: chosen.len(),
        vertices: chosen,
        pool_size,
        candidates: pool_size,
        flag,
    }
}

/// Training input for one split.
#[derive(Clone, Debug)]
pub struct ExpansionTask {
    pub n: usize,
    /// Observed edge family, with held-out partial edges already truncated.
    pub edges: Vec<Vec<VertexId>>,
    /// Indices of fully observed edges of size ≥ 3 that training may
    /// truncate into partial edges.
    pub train_ids: Vec<EdgeId>,
}

/// Truncate the eligible edges among `test_ids` into held-out partial edges
/// and make every other eligible edge available for training.
pub fn holdout_split(
    n: usize,
    edges: &[Vec<VertexId>],
    test_ids: &[EdgeId],
    rng: &mut impl Rng,
) -> Result<(ExpansionTask, Vec<PartialEdge>)> {
    let test: HashSet<EdgeId> = test_ids.iter().copied().collect();
    let mut observed = edges.to_vec();
    let mut partials = Vec::new();
    let mut sorted_test: Vec<EdgeId> = test.iter().copied().collect();
    sorted_test.sort_unstable();
    for id in sorted_test {
        let e = edges.get(id).ok_or(Error::OutOfRange {
            kind: "edge",
            id,
            count: edges.len(),
        })?;
        if is_eligible(e) {
            let pe = make_partial(e, id, rng)?;
            observed[id] = pe.partial.clone();
            partials.push(pe);
        }
    }
    let train_ids = (0..edges.len())
        .filter(|i| !test.contains(i) && is_eligible(&edges[*i]))
        .collect();
    Ok((
        ExpansionTask {
            n,
            edges: observed,
            train_ids,
        },
        partials,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEpochLog {
    pub epoch: usize,
    pub disc_loss: f64,
    pub gen_loss: f64,
    pub size_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedExpander {
    pub model: ExpansionModel,
    pub history: Vec<GanEpochLog>,
}

/// Alternating updates per batch of freshly truncated training edges:
/// a discriminator step (`g`, `f`), a generator step (encoder, which carries
/// the selection scores), and an MSE step for `a₁` (head and encoder).
pub fn train_gan(task: &ExpansionTask, config: &GanConfig, exec: Exec) -> Result<TrainedExpander> {
    let eligible: Vec<EdgeId> = task
        .train_ids
        .iter()
        .copied()
        .filter(|&i| task.edges.get(i).is_some_and(|e| is_eligible(e)))
        .collect();
    if eligible.is_empty() {
        return Err(Error::DegenerateDataset(
            "no training edge of size >= 3".into(),
        ));
    }
    if config.batch_size == 0 || config.train_cap == 0 || config.disc_steps == 0 {
        return Err(Error::Config(
            "batch_size, train_cap and disc_steps must be >= 1".into(),
        ));
    }
    let mut model = ExpansionModel::from_config(config)?;
    let enc_ids = model.store.with_prefixes(&["enc."]);
    let mut d_opt = Adam::new(
        &model.store,
        model.store.with_prefixes(&["disc."]),
        config.lr,
    );
    let mut g_opt = Adam::new(&model.store, enc_ids, config.lr);
    let mut a_opt = Adam::new(
        &model.store,
        model.store.with_prefixes(&["enc.", "size."]),
        config.lr,
    );
    let mut rng = stream(config.seed, 3);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order = eligible.clone();
        order.shuffle(&mut rng);
        let (mut dl, mut gl, mut sl) = (0.0, 0.0, 0.0);
        let (mut dn, mut gn, mut sn) = (0usize, 0usize, 0usize);
        for batch in order.chunks(config.batch_size) {
            let mut partials = Vec::with_capacity(batch.len());
            for &id in batch {
                partials.push(make_partial(&task.edges[id], id, &mut rng)?);
            }
            let replaced: Vec<(EdgeId, Vec<VertexId>)> = partials
                .iter()
                .map(|p| (p.origin, p.partial.clone()))
                .collect();
            let mut edges = task.edges.clone();
            for (id, e) in &replaced {
                edges[*id] = e.clone();
            }
            let ctx = ExpansionContext::new(Hypergraph::new(task.n, edges)?);

            let frozen = model.freeze(&ctx.structure)?;
            let mut pairs = Vec::new();
            let mut labels = Vec::new();
            let mut shortlists = Vec::new();
            for pe in &partials {
                pairs.push((pe.partial.clone(), pe.hidden.clone()));
                labels.push(1.0);
                if let Some(list) = model.shortlist(
                    &ctx,
                    &frozen,
                    pe,
                    config.train_cap,
                    config.shortlist,
                    &mut rng,
                    exec,
                )? {
                    // The best-ranked wrong completion is the negative, so a
                    // generator that already finds the truth still yields one.
                    if let Some(c) = list.iter().find(|c| **c != pe.hidden) {
                        pairs.push((pe.partial.clone(), c.clone()));
                        labels.push(0.0);
                    }
                    shortlists.push((pe.partial.clone(), list));
                }
            }

            for _ in 0..config.disc_steps {
                let grads = {
                    let mut t = Tape::new(&model.store);
                    let loss = model.disc_loss_tape(&mut t, &ctx.structure, &pairs, &labels)?;
                    dl += t.value(loss).item();
                    dn += 1;
                    t.backward(loss)?
                };
                d_opt.step(&mut model.store, &grads)?;
            }

            if !shortlists.is_empty() {
                let grads = {
                    let mut t = Tape::new(&model.store);
                    let loss = model.generator_loss_tape(&mut t, &ctx.structure, &shortlists)?;
                    gl += t.value(loss).item();
                    gn += 1;
                    t.backward(loss)?
                };
                g_opt.step(&mut model.store, &grads)?;
            }

            let grads = {
                let qs: Vec<_> = partials.iter().map(|p| p.partial.clone()).collect();
                let ks: Vec<f64> = partials.iter().map(|p| p.hidden.len() as f64).collect();
                let mut t = Tape::new(&model.store);
                let loss = model.size_loss_tape(&mut t, &ctx.structure, &qs, &ks)?;
                sl += t.value(loss).item();
                sn += 1;
                t.backward(loss)?
            };
            a_opt.step(&mut model.store, &grads)?;
        }
        if !(dl.is_finite() && gl.is_finite() && sl.is_finite()) {
            return Err(Error::NonFinite(format!(
                "adversarial training diverged in epoch {epoch} (D {dl}, G {gl}, size {sl})"
            )));
        }
        let mean = |s: f64, n: usize| if n == 0 { f64::NAN } else { s / n as f64 };
        let log = GanEpochLog {
            epoch,
            disc_loss: mean(dl, dn),
            gen_loss: mean(gl, gn),
            size_mse: mean(sl, sn),
        };
        log::debug!(
            "epoch {epoch}: D {:.4} G {:.4} size {:.4}",
            log.disc_loss,
            log.gen_loss,
            log.size_mse
        );
        history.push(log);
    }
    Ok(TrainedExpander { model, history })
}

/// Evaluation of one held-out partial edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOutcome {
    pub partial: PartialEdge,
    pub predicted_k: usize,
    pub joint: Generation,
    pub nsd: f64,
    pub nsd_true_k: f64,
    pub nsd_independent: f64,
    pub nsd_recursive: f64,
}

/// Run the generator and both baselines on each partial edge. NSD is taken at
/// the predicted size, and additionally at the true size.
pub fn evaluate_partials(
    model: &ExpansionModel,
    ctx: &ExpansionContext,
    partials: &[PartialEdge],
    cap: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<ExpansionOutcome>> {
    let frozen = model.freeze(&ctx.structure)?;
    let mut out = Vec::with_capacity(partials.len());
    for (i, pe) in partials.iter().enumerate() {
        let mut rng = stream(seed, 1000 + i as u64);
        let k = model.predict_size(&frozen, &pe.partial)?;
        let joint = model.generate_with_k(ctx, &frozen, &pe.partial, k, cap, &mut rng, exec)?;
        let nsd = normalized_set_difference(&joint.vertices, &pe.hidden)?;
        let nsd_true_k = if k == pe.hidden.len() {
            nsd
        } else {
            let g = model.generate_with_k(
                ctx,
                &frozen,
                &pe.partial,
                pe.hidden.len(),
                cap,
                &mut rng,
                exec,
            )?;
            normalized_set_difference(&g.vertices, &pe.hidden)?
        };
        let ind = model.baseline_independent_topk(ctx, &frozen, &pe.partial, k, exec)?;
        let rec = model.baseline_recursive_top1(ctx, &frozen, &pe.partial, k, exec)?;
        out.push(ExpansionOutcome {
            partial: pe.clone(),
            predicted_k: k,
            nsd,
            nsd_true_k,
            nsd_independent: normalized_set_difference(&ind.vertices, &pe.hidden)?,
            nsd_recursive: normalized_set_difference(&rec.vertices, &pe.hidden)?,
            joint,
        });
    }
    Ok(out)
}
