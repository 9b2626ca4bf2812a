//! Incidence message passing and the representation functions built on it.
//!
//! Each layer updates every observed hyperedge from its member vertices (each
//! vertex message carrying a summary of that vertex's own star) and every
//! vertex from its incident hyperedges (each carrying a summary of its
//! members). Both updates read only the previous layer's state.
//!
//! After the last layer a hyperedge query `q`, observed or not, is
//! represented as `φ({h_v : v ∈ q}) ⊗ ρ(⊎_{v ∈ q} {h_e : e ∋ v})` and the
//! whole hypergraph as `φ({h_v : v ∈ V}) ⊗ ρ({h_e : e ∈ E})`.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Activation, Groups, Linear, Matrix, Mlp, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, VertexId};

/// How the hyperedge part of a query representation collects edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhoMode {
    /// Multiset union of the stars of the query's vertices.
    #[default]
    MultisetUnion,
    /// Only edges containing every query vertex.
    Intersection,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub vertex_feature_dim: Option<usize>,
    pub edge_feature_dim: Option<usize>,
    pub rho_mode: RhoMode,
}

impl EncoderConfig {
    pub fn new(hidden: usize, layers: usize) -> Self {
        EncoderConfig {
            hidden,
            layers,
            vertex_feature_dim: None,
            edge_feature_dim: None,
            rho_mode: RhoMode::MultisetUnion,
        }
    }
}

/// Sum-decomposed set function: per-element MLP, sum, outer MLP.
#[derive(Clone, Debug)]
pub struct SetFunction {
    inner: Mlp,
    outer: Mlp,
}

impl SetFunction {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        d: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let inner = Mlp::new(
            store,
            &format!("{name}.inner"),
            &[in_dim, d],
            Activation::Relu,
            Activation::Relu,
            rng,
        );
        let outer = Mlp::new(
            store,
            &format!("{name}.outer"),
            &[d, d, d],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        SetFunction { inner, outer }
    }

    pub fn inner_tape(&self, t: &mut Tape<'_>, x: Var) -> Result<Var> {
        self.inner.forward(t, x)
    }

    pub fn outer_tape(&self, t: &mut Tape<'_>, pooled: Var) -> Result<Var> {
        self.outer.forward(t, pooled)
    }

    /// One output row per group: outer(Σ_{i ∈ group} inner(x_i)).
    pub fn forward(&self, t: &mut Tape<'_>, x: Var, groups: Arc<Groups>) -> Result<Var> {
        let inner = self.inner.forward(t, x)?;
        let pooled = t.segment_sum(inner, groups)?;
        self.outer.forward(t, pooled)
    }

    pub fn inner_infer(&self, store: &ParamStore, x: &Matrix) -> Result<Matrix> {
        self.inner.infer(store, x)
    }

    pub fn outer_infer(&self, store: &ParamStore, pooled: &Matrix) -> Result<Matrix> {
        self.outer.infer(store, pooled)
    }

    pub fn infer(&self, store: &ParamStore, x: &Matrix, groups: &Groups) -> Result<Matrix> {
        let inner = self.inner.infer(store, x)?;
        let pooled = crate::autodiff::matrix::segment_sum(&inner, groups)?;
        self.outer.infer(store, &pooled)
    }
}

#[derive(Clone, Debug)]
pub struct HyperConvLayer {
    w_e: Linear,
    w_v: Linear,
    f: SetFunction,
    g: SetFunction,
    p: SetFunction,
    q: SetFunction,
}

impl HyperConvLayer {
    fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        HyperConvLayer {
            w_e: Linear::new(store, &format!("{name}.w_e"), 2 * d, d, false, rng),
            w_v: Linear::new(store, &format!("{name}.w_v"), 2 * d, d, false, rng),
            f: SetFunction::new(store, &format!("{name}.f"), 2 * d, d, rng),
            g: SetFunction::new(store, &format!("{name}.g"), 2 * d, d, rng),
            p: SetFunction::new(store, &format!("{name}.p"), d, d, rng),
            q: SetFunction::new(store, &format!("{name}.q"), d, d, rng),
        }
    }

    fn forward(&self, t: &mut Tape<'_>, s: &Structure, hv: Var, he: Var) -> Result<(Var, Var)> {
        // hyperedges ← member vertices, each carrying p(its star)
        let star_summary = self.p.forward(t, he, s.stars.clone())?;
        let vertex_msg = t.concat_cols(hv, star_summary)?;
        let from_members = self.f.forward(t, vertex_msg, s.members.clone())?;
        let e_in = t.concat_cols(he, from_members)?;
        let e_lin = self.w_e.forward(t, e_in)?;
        let he_next = t.relu(e_lin);

        // vertices ← incident hyperedges, each carrying q(its members)
        let member_summary = self.q.forward(t, hv, s.members.clone())?;
        let edge_msg = t.concat_cols(he, member_summary)?;
        let from_star = self.g.forward(t, edge_msg, s.stars.clone())?;
        let v_in = t.concat_cols(hv, from_star)?;
        let v_lin = self.w_v.forward(t, v_in)?;
        let hv_next = t.relu(v_lin);
        Ok((hv_next, he_next))
    }

    fn infer(
        &self,
        store: &ParamStore,
        s: &Structure,
        hv: &Matrix,
        he: &Matrix,
    ) -> Result<(Matrix, Matrix)> {
        use crate::autodiff::matrix::concat_cols;
        let star_summary = self.p.infer(store, he, &s.stars)?;
        let from_members = self
            .f
            .infer(store, &concat_cols(hv, &star_summary)?, &s.members)?;
        let he_next = self
            .w_e
            .infer(store, &concat_cols(he, &from_members)?)?
            .map(crate::autodiff::matrix::relu);
        let member_summary = self.q.infer(store, hv, &s.members)?;
        let from_star = self
            .g
            .infer(store, &concat_cols(he, &member_summary)?, &s.stars)?;
        let hv_next = self
            .w_v
            .infer(store, &concat_cols(hv, &from_star)?)?
            .map(crate::autodiff::matrix::relu);
        Ok((hv_next, he_next))
    }
}

/// Incidence lists of a hypergraph in the grouped form the layers consume.
#[derive(Clone, Debug)]
pub struct Structure {
    pub n: usize,
    pub m: usize,
    pub stars: Arc<Groups>,
    pub members: Arc<Groups>,
    star_lists: Arc<Vec<Vec<usize>>>,
    vertex_features: Option<Matrix>,
    edge_features: Option<Matrix>,
}

impl Structure {
    pub fn new(h: &Hypergraph) -> Self {
        let inc = h.incidence();
        Structure {
            n: h.num_vertices(),
            m: h.num_edges(),
            stars: Arc::new(Groups::from_lists(&inc.stars)),
            members: Arc::new(Groups::from_lists(&inc.members)),
            star_lists: Arc::new(inc.stars.clone()),
            vertex_features: h.vertex_features().cloned(),
            edge_features: h.edge_features().cloned(),
        }
    }

    pub fn star(&self, v: VertexId) -> &[usize] {
        &self.star_lists[v]
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    config: EncoderConfig,
    vertex_proj: Option<Linear>,
    edge_proj: Option<Linear>,
    layers: Vec<HyperConvLayer>,
    phi: SetFunction,
    rho: SetFunction,
}

/// Final-layer state on a tape, with the per-element parts of φ and ρ
/// already applied so query representations only need sums and the outer
/// networks.
#[derive(Clone, Copy, Debug)]
pub struct TapedState {
    pub hv: Var,
    pub he: Var,
    phi_in: Var,
    rho_in: Var,
}

/// Frozen embeddings for every layer `0..=K` plus the per-element parts of φ
/// and ρ at layer `K`.
#[derive(Clone, Debug)]
pub struct EmbeddingState {
    pub vertex: Vec<Matrix>,
    pub edge: Vec<Matrix>,
    phi_in: Matrix,
    rho_in: Matrix,
    stars: Arc<Vec<Vec<usize>>>,
    rho_mode: RhoMode,
}

/// See [`Encoder::query_basis`].
#[derive(Clone, Debug)]
pub struct QueryBasis {
    phi: Matrix,
    rho: Matrix,
}

impl EmbeddingState {
    pub fn final_vertex(&self) -> &Matrix {
        self.vertex.last().expect("layer 0 always present")
    }

    pub fn final_edge(&self) -> &Matrix {
        self.edge.last().expect("layer 0 always present")
    }

    pub fn num_vertices(&self) -> usize {
        self.phi_in.rows()
    }
}

impl Encoder {
    pub fn new(config: EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        if config.layers == 0 || config.hidden == 0 {
            return Err(Error::Config(
                "encoder needs layers >= 1 and hidden >= 1".into(),
            ));
        }
        let d = config.hidden;
        let vertex_proj = config
            .vertex_feature_dim
            .map(|k| Linear::new(store, "enc.vertex_proj", k, d, true, rng));
        let edge_proj = config
            .edge_feature_dim
            .map(|k| Linear::new(store, "enc.edge_proj", k, d, true, rng));
        let layers = (0..config.layers)
            .map(|k| HyperConvLayer::new(store, &format!("enc.layer{k}"), d, rng))
            .collect();
        let phi = SetFunction::new(store, "enc.phi", d, d, rng);
        let rho = SetFunction::new(store, "enc.rho", d, d, rng);
        Ok(Encoder {
            config,
            vertex_proj,
            edge_proj,
            layers,
            phi,
            rho,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    /// Width of a query representation: φ and ρ each emit `hidden`.
    pub fn rep_dim(&self) -> usize {
        2 * self.config.hidden
    }

    fn check_features(&self, s: &Structure) -> Result<()> {
        let chk =
            |proj: &Option<Linear>, feats: &Option<Matrix>, what: &'static str| -> Result<()> {
                match (proj, feats) {
                    (Some(p), Some(x)) if p.fan_in != x.cols() => Err(Error::Shape {
                        op: what,
                        lhs: x.shape(),
                        rhs: (x.rows(), p.fan_in),
                    }),
                    (Some(_), None) => Err(Error::Config(format!("model expects {what}"))),
                    _ => Ok(()),
                }
            };
        chk(&self.vertex_proj, &s.vertex_features, "vertex features")?;
        chk(&self.edge_proj, &s.edge_features, "edge features")
    }

    /// Layer-0 states: projected features when the model has a projection,
    /// otherwise the all-ones vector for every vertex and edge.
    pub fn init_features(&self, store: &ParamStore, s: &Structure) -> Result<(Matrix, Matrix)> {
        self.check_features(s)?;
        let d = self.config.hidden;
        let hv = match (&self.vertex_proj, &s.vertex_features) {
            (Some(p), Some(x)) => p.infer(store, x)?,
            _ => Matrix::filled(s.n, d, 1.0),
        };
        let he = match (&self.edge_proj, &s.edge_features) {
            (Some(p), Some(x)) => p.infer(store, x)?,
            _ => Matrix::filled(s.m, d, 1.0),
        };
        Ok((hv, he))
    }

    fn init_tape(&self, t: &mut Tape<'_>, s: &Structure) -> Result<(Var, Var)> {
        self.check_features(s)?;
        let d = self.config.hidden;
        let hv = match (&self.vertex_proj, &s.vertex_features) {
            (Some(p), Some(x)) => {
                let x = t.constant(x.clone());
                p.forward(t, x)?
            }
            _ => t.constant(Matrix::filled(s.n, d, 1.0)),
        };
        let he = match (&self.edge_proj, &s.edge_features) {
            (Some(p), Some(x)) => {
                let x = t.constant(x.clone());
                p.forward(t, x)?
            }
            _ => t.constant(Matrix::filled(s.m, d, 1.0)),
        };
        Ok((hv, he))
    }

    pub fn encode_tape(&self, t: &mut Tape<'_>, s: &Structure) -> Result<TapedState> {
        let (mut hv, mut he) = self.init_tape(t, s)?;
        for layer in &self.layers {
            (hv, he) = layer.forward(t, s, hv, he)?;
        }
        let phi_in = self.phi.inner_tape(t, hv)?;
        let rho_in = self.rho.inner_tape(t, he)?;
        Ok(TapedState {
            hv,
            he,
            phi_in,
            rho_in,
        })
    }

    pub fn encode(&self, store: &ParamStore, s: &Structure) -> Result<EmbeddingState> {
        let (hv, he) = self.init_features(store, s)?;
        let mut vertex = vec![hv];
        let mut edge = vec![he];
        for layer in &self.layers {
            let (v, e) = layer.infer(store, s, vertex.last().unwrap(), edge.last().unwrap())?;
            vertex.push(v);
            edge.push(e);
        }
        let phi_in = self.phi.inner_infer(store, vertex.last().unwrap())?;
        let rho_in = self.rho.inner_infer(store, edge.last().unwrap())?;
        Ok(EmbeddingState {
            vertex,
            edge,
            phi_in,
            rho_in,
            stars: s.star_lists.clone(),
            rho_mode: self.config.rho_mode,
        })
    }

    /// Groups for the vertex and hyperedge sums of a batch of queries.
    pub fn query_groups(
        stars: &[Vec<usize>],
        mode: RhoMode,
        queries: &[Vec<VertexId>],
    ) -> Result<(Groups, Groups)> {
        let mut vg = Groups::new();
        let mut eg = Groups::new();
        let mut buf: Vec<usize> = Vec::new();
        for q in queries {
            if q.is_empty() {
                return Err(Error::EmptySet);
            }
            let mut vs = q.clone();
            vs.sort_unstable();
            if let Some(&v) = vs.iter().find(|&&v| v >= stars.len()) {
                return Err(Error::OutOfRange {
                    kind: "vertex",
                    id: v,
                    count: stars.len(),
                });
            }
            buf.clear();
            match mode {
                RhoMode::MultisetUnion => {
                    for &v in &vs {
                        buf.extend_from_slice(&stars[v]);
                    }
                    buf.sort_unstable();
                }
                RhoMode::Intersection => {
                    buf.extend_from_slice(&stars[vs[0]]);
                    for &v in &vs[1..] {
                        let s = &stars[v];
                        buf.retain(|e| s.binary_search(e).is_ok());
                    }
                }
            }
            vg.push(&vs);
            eg.push(&buf);
        }
        Ok((vg, eg))
    }

    /// Representations of a batch of queries on the tape, one row each.
    pub fn edge_reps_tape(
        &self,
        t: &mut Tape<'_>,
        s: &Structure,
        state: &TapedState,
        queries: &[Vec<VertexId>],
    ) -> Result<Var> {
        let (vg, eg) = Self::query_groups(&s.star_lists, self.config.rho_mode, queries)?;
        let a = t.segment_sum(state.phi_in, Arc::new(vg))?;
        let b = t.segment_sum(state.rho_in, Arc::new(eg))?;
        let pa = self.phi.outer_tape(t, a)?;
        let pb = self.rho.outer_tape(t, b)?;
        t.concat_cols(pa, pb)
    }

    /// Representations of a batch of queries against frozen embeddings.
    pub fn edge_reps(
        &self,
        store: &ParamStore,
        state: &EmbeddingState,
        queries: &[Vec<VertexId>],
    ) -> Result<Matrix> {
        use crate::autodiff::matrix::{concat_cols, segment_sum};
        let (vg, eg) = Self::query_groups(&state.stars, state.rho_mode, queries)?;
        let a = segment_sum(&state.phi_in, &vg)?;
        let b = segment_sum(&state.rho_in, &eg)?;
        concat_cols(
            &self.phi.outer_infer(store, &a)?,
            &self.rho.outer_infer(store, &b)?,
        )
    }

    pub fn edge_rep(
        &self,
        store: &ParamStore,
        state: &EmbeddingState,
        query: &[VertexId],
    ) -> Result<Vec<f64>> {
        Ok(self.edge_reps(store, state, &[query.to_vec()])?.into_vec())
    }

    /// Per-vertex terms for multiset-union pooling: the pre-outer inputs of
    /// a query are the sums of its vertices' rows. Only valid in
    /// [`RhoMode::MultisetUnion`].
    pub fn query_basis(&self, state: &EmbeddingState) -> Result<QueryBasis> {
        use crate::autodiff::matrix::segment_sum;
        if state.rho_mode != RhoMode::MultisetUnion {
            return Err(Error::Config(
                "query basis requires multiset-union pooling".into(),
            ));
        }
        let stars = Groups::from_lists(state.stars.iter());
        let rho = if state.rho_in.rows() == 0 {
            Matrix::zeros(state.phi_in.rows(), state.rho_in.cols())
        } else {
            segment_sum(&state.rho_in, &stars)?
        };
        Ok(QueryBasis {
            phi: state.phi_in.clone(),
            rho,
        })
    }

    /// Query representations from a [`QueryBasis`]; agrees with
    /// [`Encoder::edge_reps`] up to summation order.
    pub fn reps_from_basis(
        &self,
        store: &ParamStore,
        basis: &QueryBasis,
        queries: &[Vec<VertexId>],
    ) -> Result<Matrix> {
        use crate::autodiff::matrix::concat_cols;
        let d_phi = basis.phi.cols();
        let d_rho = basis.rho.cols();
        let mut a = Matrix::zeros(queries.len(), d_phi);
        let mut b = Matrix::zeros(queries.len(), d_rho);
        for (i, q) in queries.iter().enumerate() {
            if q.is_empty() {
                return Err(Error::EmptySet);
            }
            for &v in q {
                if v >= basis.phi.rows() {
                    return Err(Error::OutOfRange {
                        kind: "vertex",
                        id: v,
                        count: basis.phi.rows(),
                    });
                }
                a.row_mut(i)
                    .iter_mut()
                    .zip(basis.phi.row(v))
                    .for_each(|(o, x)| *o += x);
                b.row_mut(i)
                    .iter_mut()
                    .zip(basis.rho.row(v))
                    .for_each(|(o, x)| *o += x);
            }
        }
        concat_cols(
            &self.phi.outer_infer(store, &a)?,
            &self.rho.outer_infer(store, &b)?,
        )
    }

    /// Whole-hypergraph representation.
    pub fn hypergraph_rep(&self, store: &ParamStore, state: &EmbeddingState) -> Result<Vec<f64>> {
        use crate::autodiff::matrix::{concat_cols, segment_sum};
        let all_v = Groups::from_lists([(0..state.phi_in.rows()).collect::<Vec<_>>()]);
        let all_e = Groups::from_lists([(0..state.rho_in.rows()).collect::<Vec<_>>()]);
        let a = segment_sum(&state.phi_in, &all_v)?;
        let b = segment_sum(&state.rho_in, &all_e)?;
        Ok(concat_cols(
            &self.phi.outer_infer(store, &a)?,
            &self.rho.outer_infer(store, &b)?,
        )?
        .into_vec())
    }
}
