//! Hypergraphs, their incidence structure, and the proxy graphs built from
//! them (clique expansion, star expansion, line graph, dual).

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::autodiff::Matrix;
use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Two-sided incidence lists. `stars[v]` is the ascending list of edges
/// containing `v`; `members[e]` the ascending list of vertices of `e`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Incidence {
    pub stars: Vec<Vec<EdgeId>>,
    pub members: Vec<Vec<VertexId>>,
}

impl Incidence {
    fn build(n: usize, edges: &[Vec<VertexId>]) -> Self {
        let mut stars = vec![Vec::new(); n];
        for (e, members) in edges.iter().enumerate() {
            for &v in members {
                stars[v].push(e);
            }
        }
        Incidence {
            stars,
            members: edges.to_vec(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hypergraph {
    n: usize,
    edges: Vec<Vec<VertexId>>,
    incidence: Incidence,
    vertex_features: Option<Matrix>,
    edge_features: Option<Matrix>,
    original_ids: Option<Vec<u64>>,
}

impl PartialEq for Hypergraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.edges == other.edges
            && self.vertex_features == other.vertex_features
            && self.edge_features == other.edge_features
    }
}

impl Hypergraph {
    /// Build from an edge family without any dataset filtering. Each edge
    /// must be a nonempty set of ids below `n`; duplicate edges are allowed.
    pub fn new(n: usize, edges: Vec<Vec<VertexId>>) -> Result<Self> {
        let mut sorted = Vec::with_capacity(edges.len());
        for (i, mut e) in edges.into_iter().enumerate() {
            if e.is_empty() {
                return Err(Error::InvalidEdge {
                    index: i,
                    reason: "empty".into(),
                });
            }
            e.sort_unstable();
            if e.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidEdge {
                    index: i,
                    reason: "repeated vertex".into(),
                });
            }
            if let Some(&v) = e.last().filter(|&&v| v >= n) {
                return Err(Error::OutOfRange {
                    kind: "vertex",
                    id: v,
                    count: n,
                });
            }
            sorted.push(e);
        }
        let incidence = Incidence::build(n, &sorted);
        Ok(Hypergraph {
            n,
            edges: sorted,
            incidence,
            vertex_features: None,
            edge_features: None,
            original_ids: None,
        })
    }

    pub fn with_vertex_features(mut self, x: Matrix) -> Result<Self> {
        if x.rows() != self.n {
            return Err(Error::Shape {
                op: "vertex_features",
                lhs: x.shape(),
                rhs: (self.n, x.cols()),
            });
        }
        self.vertex_features = Some(x);
        Ok(self)
    }

    pub fn with_edge_features(mut self, x: Matrix) -> Result<Self> {
        if x.rows() != self.edges.len() {
            return Err(Error::Shape {
                op: "edge_features",
                lhs: x.shape(),
                rhs: (self.edges.len(), x.cols()),
            });
        }
        self.edge_features = Some(x);
        Ok(self)
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<VertexId>] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> &[VertexId] {
        &self.edges[e]
    }

    pub fn incidence(&self) -> &Incidence {
        &self.incidence
    }

    pub fn vertex_features(&self) -> Option<&Matrix> {
        self.vertex_features.as_ref()
    }

    pub fn edge_features(&self) -> Option<&Matrix> {
        self.edge_features.as_ref()
    }

    /// Dense id → id in the raw input, when built by [`ingest`].
    pub fn original_ids(&self) -> Option<&[u64]> {
        self.original_ids.as_deref()
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.incidence.stars[v].len()
    }

    /// Edges of size `s` counted for every size present, ascending.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for e in &self.edges {
            *counts.entry(e.len()).or_insert(0usize) += 1;
        }
        counts.into_iter().collect()
    }

    pub fn has_isolated_vertices(&self) -> bool {
        self.incidence.stars.iter().any(Vec::is_empty)
    }

    /// Membership lookup for edges as sorted vertex tuples.
    pub fn edge_set(&self) -> HashSet<Vec<VertexId>> {
        self.edges.iter().cloned().collect()
    }

    fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v >= self.n {
            return Err(Error::OutOfRange {
                kind: "vertex",
                id: v,
                count: self.n,
            });
        }
        Ok(())
    }

    /// E(v): the edges containing `v`.
    pub fn star(&self, v: VertexId) -> Result<&[EdgeId]> {
        self.check_vertex(v)?;
        Ok(&self.incidence.stars[v])
    }

    /// S_H = {(v, E(v))} for every vertex, in vertex order.
    pub fn family_of_stars(&self) -> Vec<(VertexId, Vec<EdgeId>)> {
        self.incidence
            .stars
            .iter()
            .enumerate()
            .map(|(v, s)| (v, s.clone()))
            .collect()
    }

    /// The 0/1 `n × m` incidence matrix.
    pub fn incidence_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.edges.len());
        for (e, members) in self.edges.iter().enumerate() {
            for &v in members {
                m.set(v, e, 1.0);
            }
        }
        m
    }

    pub fn clique_expansion(&self) -> SimpleGraph {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n];
        for e in &self.edges {
            for (i, &u) in e.iter().enumerate() {
                for &v in &e[i + 1..] {
                    adj[u].insert(v);
                    adj[v].insert(u);
                }
            }
        }
        SimpleGraph::from_sets(adj, vec![NodeRole::Plain; self.n])
    }

    /// Bipartite graph on V ⊎ E: nodes `0..n` are vertices, `n..n+m` edges.
    pub fn star_expansion(&self) -> SimpleGraph {
        let n = self.n;
        let m = self.edges.len();
        let mut adj = vec![Vec::new(); n + m];
        for (v, star) in self.incidence.stars.iter().enumerate() {
            adj[v] = star.iter().map(|&e| n + e).collect();
        }
        for (e, members) in self.edges.iter().enumerate() {
            adj[n + e] = members.clone();
        }
        let mut roles = vec![NodeRole::BipartiteVertex; n];
        roles.extend(std::iter::repeat_n(NodeRole::BipartiteEdge, m));
        SimpleGraph { adj, roles }
    }

    /// Graph on E joining distinct edges that share a vertex.
    pub fn line_graph(&self) -> SimpleGraph {
        let m = self.edges.len();
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
        for star in &self.incidence.stars {
            for (i, &a) in star.iter().enumerate() {
                for &b in &star[i + 1..] {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        SimpleGraph::from_sets(adj, vec![NodeRole::Plain; m])
    }

    /// H*: one dual vertex per edge and one dual edge E(v) per vertex, kept as
    /// a family (singletons and repeats retained). Fails if `h` has isolated
    /// vertices, whose dual edge would be empty.
    pub fn dual(&self) -> Result<Hypergraph> {
        let mut d = Hypergraph::new(self.edges.len(), self.incidence.stars.clone())?;
        d.vertex_features = self.edge_features.clone();
        d.edge_features = self.vertex_features.clone();
        Ok(d)
    }

    /// Vertices within distance two of `partial` in the clique expansion,
    /// excluding `partial` itself, ascending.
    pub fn two_hop_pool(&self, partial: &[VertexId]) -> Result<Vec<VertexId>> {
        if partial.is_empty() {
            return Err(Error::EmptySet);
        }
        for &v in partial {
            self.check_vertex(v)?;
        }
        let mut seen = vec![false; self.n];
        let mut frontier: Vec<VertexId> = partial.to_vec();
        for &v in partial {
            seen[v] = true;
        }
        let mut pool = Vec::new();
        for _ in 0..2 {
            let mut next = Vec::new();
            for &u in &frontier {
                for &e in &self.incidence.stars[u] {
                    for &w in &self.edges[e] {
                        if !seen[w] {
                            seen[w] = true;
                            next.push(w);
                        }
                    }
                }
            }
            pool.extend_from_slice(&next);
            frontier = next;
        }
        pool.sort_unstable();
        Ok(pool)
    }

    /// Relabel: vertex `v` becomes `vertex_perm[v]`, edge `e` becomes
    /// `edge_perm[e]`. Feature rows move with their ids.
    pub fn permute(&self, vertex_perm: &[usize], edge_perm: &[usize]) -> Result<Hypergraph> {
        check_bijection(vertex_perm, self.n)?;
        check_bijection(edge_perm, self.edges.len())?;
        let mut edges = vec![Vec::new(); self.edges.len()];
        for (e, members) in self.edges.iter().enumerate() {
            edges[edge_perm[e]] = members.iter().map(|&v| vertex_perm[v]).collect();
        }
        let mut out = Hypergraph::new(self.n, edges)?;
        out.vertex_features = self
            .vertex_features
            .as_ref()
            .map(|x| permute_rows(x, vertex_perm));
        out.edge_features = self
            .edge_features
            .as_ref()
            .map(|x| permute_rows(x, edge_perm));
        out.original_ids = self.original_ids.as_ref().map(|ids| {
            let mut o = vec![0; ids.len()];
            for (v, &id) in ids.iter().enumerate() {
                o[vertex_perm[v]] = id;
            }
            o
        });
        Ok(out)
    }

    /// Replace the member list of each edge in `replacements` (edge id, new
    /// vertex set). Used to truncate partially observed edges.
    pub fn with_replaced_edges(
        &self,
        replacements: &[(EdgeId, Vec<VertexId>)],
    ) -> Result<Hypergraph> {
        let mut edges = self.edges.clone();
        for (e, members) in replacements {
            if *e >= edges.len() {
                return Err(Error::OutOfRange {
                    kind: "edge",
                    id: *e,
                    count: edges.len(),
                });
            }
            edges[*e] = members.clone();
        }
        let mut out = Hypergraph::new(self.n, edges)?;
        out.vertex_features = self.vertex_features.clone();
        out.original_ids = self.original_ids.clone();
        Ok(out)
    }

    /// Keep only the listed edges (in the given order). Vertex ids are kept.
    pub fn edge_subgraph(&self, keep: &[EdgeId]) -> Result<Hypergraph> {
        let mut edges = Vec::with_capacity(keep.len());
        for &e in keep {
            if e >= self.edges.len() {
                return Err(Error::OutOfRange {
                    kind: "edge",
                    id: e,
                    count: self.edges.len(),
                });
            }
            edges.push(self.edges[e].clone());
        }
        let mut out = Hypergraph::new(self.n, edges)?;
        out.vertex_features = self.vertex_features.clone();
        out.edge_features = self.edge_features.as_ref().map(|x| {
            let rows: Vec<Vec<f64>> = keep.iter().map(|&e| x.row(e).to_vec()).collect();
            Matrix::from_rows(&rows).expect("consistent widths")
        });
        out.original_ids = self.original_ids.clone();
        Ok(out)
    }
}

fn permute_rows(x: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for (r, &to) in perm.iter().enumerate() {
        out.row_mut(to).copy_from_slice(x.row(r));
    }
    out
}

pub fn check_bijection(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::NotBijection(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::NotBijection(n));
        }
        seen[p] = true;
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Dataset cleaning: repeated ids inside an edge collapse, edges with fewer
/// than two distinct vertices are dropped, repeated edges (as sets) keep only
/// their first occurrence, and the surviving vertices are renumbered densely
/// in order of first appearance.
pub fn ingest(raw_edges: &[Vec<u64>], declared_n: Option<u64>) -> Result<Hypergraph> {
    if raw_edges.is_empty() {
        return Err(Error::DegenerateDataset("no hyperedges in input".into()));
    }
    let mut seen_edges: HashSet<Vec<u64>> = HashSet::new();
    let mut kept: Vec<Vec<u64>> = Vec::new();
    for (i, raw) in raw_edges.iter().enumerate() {
        if let Some(n) = declared_n {
            if let Some(&bad) = raw.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidEdge {
                    index: i,
                    reason: format!("vertex {bad} not below declared count {n}"),
                });
            }
        }
        let set: BTreeSet<u64> = raw.iter().copied().collect();
        if set.len() < 2 {
            continue;
        }
        let key: Vec<u64> = set.into_iter().collect();
        if seen_edges.insert(key.clone()) {
            // keep the raw order for first-appearance numbering
            let mut ordered = Vec::with_capacity(key.len());
            let mut dup = HashSet::new();
            for &v in raw {
                if dup.insert(v) {
                    ordered.push(v);
                }
            }
            kept.push(ordered);
        }
    }
    if kept.is_empty() {
        return Err(Error::DegenerateDataset(
            "no hyperedge with at least two distinct vertices".into(),
        ));
    }
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut original = Vec::new();
    let edges: Vec<Vec<usize>> = kept
        .iter()
        .map(|e| {
            e.iter()
                .map(|&v| {
                    *index.entry(v).or_insert_with(|| {
                        original.push(v);
                        original.len() - 1
                    })
                })
                .collect()
        })
        .collect();
    let mut h = Hypergraph::new(original.len(), edges)?;
    h.original_ids = Some(original);
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRole {
    Plain,
    BipartiteVertex,
    BipartiteEdge,
}

/// Undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
    roles: Vec<NodeRole>,
}

impl SimpleGraph {
    fn from_sets(adj: Vec<BTreeSet<usize>>, roles: Vec<NodeRole>) -> Self {
        SimpleGraph {
            adj: adj.into_iter().map(|s| s.into_iter().collect()).collect(),
            roles,
        }
    }

    /// From an undirected edge list; self-loops and repeats are discarded.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        Self::from_sets(adj, vec![NodeRole::Plain; n])
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    /// Sorted list of `(u, v)` with `u < v`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, ns) in self.adj.iter().enumerate() {
            for &v in ns {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Disjoint union; nodes of `other` are shifted by `self.num_nodes()`.
    pub fn disjoint_union(&self, other: &SimpleGraph) -> SimpleGraph {
        let shift = self.adj.len();
        let mut adj = self.adj.clone();
        adj.extend(
            other
                .adj
                .iter()
                .map(|ns| ns.iter().map(|&v| v + shift).collect()),
        );
        let mut roles = self.roles.clone();
        roles.extend_from_slice(&other.roles);
        SimpleGraph { adj, roles }
    }
}
