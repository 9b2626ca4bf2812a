//! 1-WL colour refinement, the two-channel hypergraph distinguishability test
//! (line graphs, then star expansions of the duals), and brute-force orbit
//! oracles for tiny hypergraphs.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, NodeRole, SimpleGraph};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub rounds: usize,
}

impl Coloring {
    pub fn uniform(n: usize) -> Self {
        Coloring {
            colors: vec![0; n],
            rounds: 0,
        }
    }

    /// Initial colours from node roles.
    pub fn by_role(g: &SimpleGraph) -> Self {
        let mut ids = BTreeMap::new();
        for r in g.roles() {
            let next = ids.len();
            ids.entry(*r).or_insert(next);
        }
        // dense ids in role order, independent of node order
        let ordered: BTreeMap<NodeRole, usize> =
            ids.keys().enumerate().map(|(i, r)| (*r, i)).collect();
        Coloring {
            colors: g.roles().iter().map(|r| ordered[r]).collect(),
            rounds: 0,
        }
    }

    pub fn num_classes(&self) -> usize {
        let mut c = self.colors.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// Colour classes as sorted node lists, ordered by their smallest node.
    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (v, &c) in self.colors.iter().enumerate() {
            by.entry(c).or_default().push(v);
        }
        let mut out: Vec<Vec<usize>> = by.into_values().collect();
        out.sort();
        out
    }

    /// (colour, count) pairs over the nodes in `range`.
    pub fn histogram(&self, range: std::ops::Range<usize>) -> Vec<(usize, usize)> {
        let mut h = BTreeMap::new();
        for &c in &self.colors[range] {
            *h.entry(c).or_insert(0) += 1;
        }
        h.into_iter().collect()
    }
}

/// Canonical dense renumbering: equal inputs get equal ids, and ids follow
/// the sorted order of the distinct inputs.
fn renumber<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut distinct: Vec<K> = keys.to_vec();
    distinct.sort();
    distinct.dedup();
    keys.iter()
        .map(|k| distinct.binary_search(k).expect("present"))
        .collect()
}

/// Refine `init` to the stable 1-WL colouring. Each round replaces a node's
/// colour by the id of (own colour, sorted neighbour colours); the loop stops
/// when a round does not increase the number of colour classes.
pub fn wl_refine(g: &SimpleGraph, init: &Coloring) -> Coloring {
    assert_eq!(init.colors.len(), g.num_nodes(), "colouring size");
    let mut colors = renumber(&init.colors);
    let mut classes = {
        let mut c = colors.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    };
    let mut rounds = init.rounds;
    loop {
        let sigs: Vec<(usize, Vec<usize>)> = (0..g.num_nodes())
            .map(|v| {
                let mut ns: Vec<usize> = g.neighbors(v).iter().map(|&u| colors[u]).collect();
                ns.sort_unstable();
                (colors[v], ns)
            })
            .collect();
        let next = renumber(&sigs);
        let next_classes = next.iter().max().map_or(0, |m| m + 1);
        rounds += 1;
        if next_classes == classes {
            return Coloring { colors, rounds };
        }
        colors = next;
        classes = next_classes;
    }
}

/// True when the stable colour histograms of the two graphs differ (refined
/// jointly on their disjoint union, starting from role colours).
pub fn wl_distinguish(g1: &SimpleGraph, g2: &SimpleGraph) -> bool {
    wl_histograms(g1, g2).is_none_or(|(a, b)| a != b)
}

type Histogram = Vec<(usize, usize)>;

/// Stable colour histograms of `g1` and `g2`, or `None` when node counts
/// already differ.
pub fn wl_histograms(g1: &SimpleGraph, g2: &SimpleGraph) -> Option<(Histogram, Histogram)> {
    if g1.num_nodes() != g2.num_nodes() {
        return None;
    }
    let u = g1.disjoint_union(g2);
    let c = wl_refine(&u, &Coloring::by_role(&u));
    let n1 = g1.num_nodes();
    Some((c.histogram(0..n1), c.histogram(n1..u.num_nodes())))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WlChannel {
    LineGraph,
    DualStarExpansion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WlVerdict {
    /// Certainly non-isomorphic; the channel that separated them.
    Distinguishable(WlChannel),
    /// No conclusion.
    Undecided,
}

impl WlVerdict {
    pub fn is_distinguishable(self) -> bool {
        matches!(self, WlVerdict::Distinguishable(_))
    }
}

impl fmt::Display for WlVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WlVerdict::Distinguishable(WlChannel::LineGraph) => {
                write!(f, "Distinguishable (line-graph)")
            }
            WlVerdict::Distinguishable(WlChannel::DualStarExpansion) => {
                write!(f, "Distinguishable (dual-star-expansion)")
            }
            WlVerdict::Undecided => write!(f, "Undecided"),
        }
    }
}

/// Run 1-WL on the line graphs, then on the star expansions of the duals.
pub fn hypergraph_wl_test(h1: &Hypergraph, h2: &Hypergraph) -> Result<WlVerdict> {
    for h in [h1, h2] {
        if h.has_isolated_vertices() {
            return Err(Error::DegenerateDataset(
                "WL test needs hypergraphs without isolated vertices".into(),
            ));
        }
    }
    if wl_distinguish(&h1.line_graph(), &h2.line_graph()) {
        return Ok(WlVerdict::Distinguishable(WlChannel::LineGraph));
    }
    let s1 = h1.dual()?.star_expansion();
    let s2 = h2.dual()?.star_expansion();
    if wl_distinguish(&s1, &s2) {
        return Ok(WlVerdict::Distinguishable(WlChannel::DualStarExpansion));
    }
    Ok(WlVerdict::Undecided)
}

pub const ORBIT_LIMIT: usize = 8;

/// Advance `p` to the next permutation in lexicographic order.
pub fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let n = self.0[c];
            self.0[c] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }

    fn partition(mut self) -> Vec<Vec<usize>> {
        let n = self.0.len();
        let mut by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..n {
            let r = self.find(x);
            by.entry(r).or_default().push(x);
        }
        by.into_values().collect()
    }
}

/// Every vertex permutation that maps the edge family onto itself (as a
/// multiset). Each such permutation extends to at least one edge
/// permutation, so these are the vertex parts of all automorphism pairs.
fn vertex_automorphisms(h: &Hypergraph) -> Result<Vec<Vec<usize>>> {
    if h.num_vertices() > ORBIT_LIMIT || h.num_edges() > ORBIT_LIMIT {
        return Err(Error::SizeLimit(format!(
            "orbit oracle needs n, m <= {ORBIT_LIMIT}, got n={}, m={}",
            h.num_vertices(),
            h.num_edges()
        )));
    }
    let mut family: Vec<Vec<usize>> = h.edges().to_vec();
    family.sort();
    let mut p: Vec<usize> = (0..h.num_vertices()).collect();
    let mut out = Vec::new();
    loop {
        let mut mapped: Vec<Vec<usize>> = h
            .edges()
            .iter()
            .map(|e| {
                let mut m: Vec<usize> = e.iter().map(|&v| p[v]).collect();
                m.sort_unstable();
                m
            })
            .collect();
        mapped.sort();
        if mapped == family {
            out.push(p.clone());
        }
        if !next_permutation(&mut p) {
            break;
        }
    }
    Ok(out)
}

/// Exact vertex orbits under the automorphism group of the incidence
/// structure (brute force, n, m ≤ 8).
pub fn vertex_orbits(h: &Hypergraph) -> Result<Vec<Vec<usize>>> {
    let autos = vertex_automorphisms(h)?;
    let mut uf = UnionFind::new(h.num_vertices());
    for p in &autos {
        for (v, &w) in p.iter().enumerate() {
            uf.union(v, w);
        }
    }
    Ok(uf.partition())
}

/// Exact hyperedge orbits (brute force, n, m ≤ 8). Under a vertex
/// automorphism, edge `e` may be sent to any edge equal to its image.
pub fn hyperedge_orbits(h: &Hypergraph) -> Result<Vec<Vec<usize>>> {
    let autos = vertex_automorphisms(h)?;
    let mut uf = UnionFind::new(h.num_edges());
    for p in &autos {
        for (e, members) in h.edges().iter().enumerate() {
            let mut img: Vec<usize> = members.iter().map(|&v| p[v]).collect();
            img.sort_unstable();
            for (f, other) in h.edges().iter().enumerate() {
                if *other == img {
                    uf.union(e, f);
                }
            }
        }
    }
    Ok(uf.partition())
}

/// True when some vertex permutation maps the edge family of `a` onto that
/// of `b` (brute force, n ≤ 8).
pub fn brute_force_isomorphic(a: &Hypergraph, b: &Hypergraph) -> Result<bool> {
    if a.num_vertices() != b.num_vertices() || a.num_edges() != b.num_edges() {
        return Ok(false);
    }
    if a.num_vertices() > ORBIT_LIMIT {
        return Err(Error::SizeLimit(format!("n = {}", a.num_vertices())));
    }
    let mut target: Vec<Vec<usize>> = b.edges().to_vec();
    target.sort();
    let mut p: Vec<usize> = (0..a.num_vertices()).collect();
    loop {
        let mut mapped: Vec<Vec<usize>> = a
            .edges()
            .iter()
            .map(|e| {
                let mut m: Vec<usize> = e.iter().map(|&v| p[v]).collect();
                m.sort_unstable();
                m
            })
            .collect();
        mapped.sort();
        if mapped == target {
            return Ok(true);
        }
        if !next_permutation(&mut p) {
            return Ok(false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::tests::figure1;

    fn cycle(n: usize) -> SimpleGraph {
        let e: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        SimpleGraph::from_edges(n, &e)
    }

    #[test]
    fn refine_examples() {
        let c6 = cycle(6);
        assert_eq!(wl_refine(&c6, &Coloring::uniform(6)).num_classes(), 1);
        let p3 = SimpleGraph::from_edges(3, &[(0, 1), (1, 2)]);
        let c = wl_refine(&p3, &Coloring::uniform(3));
        assert_eq!(c.classes(), vec![vec![0, 2], vec![1]]);
        let lg = figure1().line_graph();
        assert_eq!(
            wl_refine(&lg, &Coloring::uniform(3)).classes(),
            vec![vec![0, 2], vec![1]]
        );
    }

    #[test]
    fn refine_is_idempotent() {
        let g = SimpleGraph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (1, 5)]);
        let once = wl_refine(&g, &Coloring::uniform(6));
        let twice = wl_refine(&g, &once);
        assert_eq!(once.classes(), twice.classes());
    }

    #[test]
    fn distinguish_examples() {
        let p3 = SimpleGraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert!(!wl_distinguish(&p3, &p3));
        let two_triangles =
            SimpleGraph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        assert!(!wl_distinguish(&cycle(6), &two_triangles));
        assert!(wl_distinguish(&p3, &cycle(3)));
        assert!(wl_distinguish(&p3, &cycle(4)));
    }

    #[test]
    fn hypergraph_test_examples() {
        let h = figure1();
        let p = h.permute(&[2, 4, 0, 1, 3], &[1, 2, 0]).unwrap();
        assert_eq!(hypergraph_wl_test(&h, &p).unwrap(), WlVerdict::Undecided);

        let h1 = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let h2 = Hypergraph::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(
            hypergraph_wl_test(&h1, &h2).unwrap(),
            WlVerdict::Distinguishable(WlChannel::LineGraph)
        );

        let dropped = Hypergraph::new(5, vec![vec![0, 1, 2], vec![2, 3, 4]]).unwrap();
        assert!(hypergraph_wl_test(&h, &dropped)
            .unwrap()
            .is_distinguishable());

        let isolated = Hypergraph::new(3, vec![vec![0, 1]]).unwrap();
        assert!(hypergraph_wl_test(&isolated, &isolated).is_err());
    }

    #[test]
    fn dual_channel_separates_same_line_graph() {
        // Both line graphs are a single edge; the duals' star expansions differ.
        let a = Hypergraph::new(3, vec![vec![0, 1], vec![1, 2]]).unwrap();
        let b = Hypergraph::new(4, vec![vec![0, 1, 2], vec![2, 3]]).unwrap();
        assert!(!wl_distinguish(&a.line_graph(), &b.line_graph()));
        assert_eq!(
            hypergraph_wl_test(&a, &b).unwrap(),
            WlVerdict::Distinguishable(WlChannel::DualStarExpansion)
        );
    }

    /// Literal enumeration of all (π_V, π_E) pairs that fix the incidence matrix.
    fn orbits_by_pairs(h: &Hypergraph) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let n = h.num_vertices();
        let m = h.num_edges();
        let inc = h.incidence_matrix();
        let mut vu = UnionFind::new(n);
        let mut eu = UnionFind::new(m);
        let mut pv: Vec<usize> = (0..n).collect();
        loop {
            let mut pe: Vec<usize> = (0..m).collect();
            loop {
                let fixed = (0..n).all(|v| (0..m).all(|e| inc.get(v, e) == inc.get(pv[v], pe[e])));
                if fixed {
                    (0..n).for_each(|v| vu.union(v, pv[v]));
                    (0..m).for_each(|e| eu.union(e, pe[e]));
                }
                if !next_permutation(&mut pe) {
                    break;
                }
            }
            if !next_permutation(&mut pv) {
                break;
            }
        }
        (vu.partition(), eu.partition())
    }

    #[test]
    fn figure1_orbits() {
        let h = figure1();
        let v = vertex_orbits(&h).unwrap();
        let e = hyperedge_orbits(&h).unwrap();
        assert_eq!(v, vec![vec![0, 1], vec![2], vec![3, 4]]);
        assert_eq!(e, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(orbits_by_pairs(&h), (v, e));
    }

    #[test]
    fn complete_pairs_single_orbit() {
        let h = Hypergraph::new(3, vec![vec![0, 1], vec![0, 2], vec![1, 2]]).unwrap();
        assert_eq!(vertex_orbits(&h).unwrap(), vec![vec![0, 1, 2]]);
        assert_eq!(hyperedge_orbits(&h).unwrap(), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn orbit_oracle_matches_pair_enumeration() {
        let cases = [
            Hypergraph::new(4, vec![vec![0, 1], vec![0, 1], vec![2, 3]]).unwrap(),
            Hypergraph::new(4, vec![vec![0, 1, 2], vec![1, 2, 3], vec![0, 3]]).unwrap(),
            Hypergraph::new(5, vec![vec![0], vec![1, 2], vec![3, 4]]).unwrap(),
        ];
        for h in &cases {
            assert_eq!(
                orbits_by_pairs(h),
                (vertex_orbits(h).unwrap(), hyperedge_orbits(h).unwrap())
            );
        }
    }

    #[test]
    fn orbit_size_limit() {
        let big = Hypergraph::new(9, vec![vec![0, 8]]).unwrap();
        assert!(matches!(vertex_orbits(&big), Err(Error::SizeLimit(_))));
    }
}
