#![allow(dead_code)]

pub mod gradcheck;

use hyperset::hypergraph::Hypergraph;
use hyperset::rng::stream;
use rand::seq::index::sample;
use rand::Rng;

/// `groups` disjoint communities of `size` vertices; every edge is a random
/// subset of one community with size drawn from `sizes`.
pub fn planted(
    seed: u64,
    groups: usize,
    size: usize,
    per_group: usize,
    sizes: (usize, usize),
) -> Hypergraph {
    let mut rng = stream(seed, 77);
    let mut edges: Vec<Vec<usize>> = Vec::new();
    for g in 0..groups {
        let mut made = 0;
        let mut guard = 0;
        while made < per_group && guard < 100 * per_group {
            guard += 1;
            let k = rng.gen_range(sizes.0..=sizes.1);
            let mut e: Vec<usize> = sample(&mut rng, size, k)
                .into_iter()
                .map(|i| g * size + i)
                .collect();
            e.sort_unstable();
            if !edges.contains(&e) {
                edges.push(e);
                made += 1;
            }
        }
    }
    Hypergraph::new(groups * size, edges).unwrap()
}

/// `m` distinct edges over `n` vertices, each vertex drawn with weight
/// `1 / (v + 1)`, so low ids are hubs.
pub fn skewed(seed: u64, n: usize, m: usize, sizes: (usize, usize)) -> Hypergraph {
    let mut rng = stream(seed, 78);
    let weights: Vec<f64> = (0..n).map(|v| 1.0 / (v + 1) as f64).collect();
    let dist = rand::distributions::WeightedIndex::new(&weights).unwrap();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    while edges.len() < m {
        let k = rng.gen_range(sizes.0..=sizes.1);
        let mut e: Vec<usize> = Vec::new();
        while e.len() < k {
            let v = rng.sample(&dist);
            if !e.contains(&v) {
                e.push(v);
            }
        }
        e.sort_unstable();
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    Hypergraph::new(n, edges).unwrap()
}

/// Communities of `size` vertices whose full vertex set is repeated as an
/// edge `copies` times, plus pair edges inside each community and `bridges`
/// pair edges across communities.
pub fn templates(
    seed: u64,
    groups: usize,
    size: usize,
    copies: usize,
    bridges: usize,
) -> Hypergraph {
    templates_varied(seed, groups, size, &[copies], bridges)
}

/// As [`templates`], with community `g` repeated `copies[g % copies.len()]`
/// times so communities differ structurally.
pub fn templates_varied(
    seed: u64,
    groups: usize,
    size: usize,
    copies: &[usize],
    bridges: usize,
) -> Hypergraph {
    let mut rng = stream(seed, 78);
    let mut edges: Vec<Vec<usize>> = Vec::new();
    for g in 0..groups {
        let base: Vec<usize> = (g * size..(g + 1) * size).collect();
        for _ in 0..copies[g % copies.len()] {
            edges.push(base.clone());
        }
        for i in 0..size {
            edges.push(vec![base[i], base[(i + 1) % size]]);
        }
    }
    let n = groups * size;
    for _ in 0..bridges {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n);
        while b / size == a / size {
            b = rng.gen_range(0..n);
        }
        edges.push(vec![a.min(b), a.max(b)]);
    }
    Hypergraph::new(n, edges).unwrap()
}

/// A uniformly random relabeling of vertices and edges.
pub fn random_perms(seed: u64, n: usize, m: usize) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut rng = stream(seed, 79);
    let mut pv: Vec<usize> = (0..n).collect();
    let mut pe: Vec<usize> = (0..m).collect();
    pv.shuffle(&mut rng);
    pe.shuffle(&mut rng);
    (pv, pe)
}

/// Communities of `size` vertices, each repeated as an edge `copies` times.
/// Every community vertex also sits in `noise` triangles with two fresh
/// degree-one vertices.
pub fn cores_with_noise(groups: usize, size: usize, copies: usize, noise: usize) -> Hypergraph {
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let core = groups * size;
    let mut next = core;
    for g in 0..groups {
        let base: Vec<usize> = (g * size..(g + 1) * size).collect();
        for _ in 0..copies {
            edges.push(base.clone());
        }
    }
    for v in 0..core {
        for _ in 0..noise {
            edges.push(vec![v, next, next + 1]);
            next += 2;
        }
    }
    Hypergraph::new(next, edges).unwrap()
}

/// Random hypergraph with `n` vertices and `m` edges of size 1..=4.
pub fn random_hypergraph(seed: u64, n: usize, m: usize) -> Hypergraph {
    let mut rng = stream(seed, 80);
    let edges = (0..m)
        .map(|_| {
            let k = rng.gen_range(1..=n.min(4));
            let mut e: Vec<usize> = sample(&mut rng, n, k).into_vec();
            e.sort_unstable();
            e
        })
        .collect();
    Hypergraph::new(n, edges).unwrap()
}

fn hg(n: usize, edges: &[&[usize]]) -> Hypergraph {
    Hypergraph::new(n, edges.iter().map(|e| e.to_vec()).collect()).unwrap()
}

/// Pairs told apart by the WL test, with the same vertex count, edge count
/// and edge-size multiset on both sides.
pub fn wl_pairs() -> Vec<(Hypergraph, Hypergraph)> {
    use hyperset::iso::hypergraph_wl_test;
    use rand::seq::SliceRandom;
    let mut pairs = vec![
        (
            hg(5, &[&[0, 1], &[0, 1, 2], &[2, 3, 4]]),
            hg(5, &[&[0, 1], &[1, 2, 3], &[2, 3, 4]]),
        ),
        (
            hg(4, &[&[0, 1], &[1, 2], &[2, 3]]),
            hg(4, &[&[0, 1], &[0, 2], &[0, 3]]),
        ),
        (
            hg(6, &[&[0, 1, 2], &[3, 4, 5], &[0, 3]]),
            hg(6, &[&[0, 1, 2], &[3, 4, 5], &[0, 1]]),
        ),
        (
            hg(6, &[&[0, 1, 2, 3], &[3, 4], &[4, 5]]),
            hg(6, &[&[0, 1, 2, 3], &[3, 4], &[3, 5]]),
        ),
        (
            hg(5, &[&[0, 1, 2, 3], &[0, 4], &[1, 4]]),
            hg(5, &[&[0, 1, 2, 3], &[0, 4], &[0, 1]]),
        ),
        (
            hg(5, &[&[0, 1, 2], &[0, 1, 3], &[0, 1, 4]]),
            hg(5, &[&[0, 1, 2], &[1, 2, 3], &[2, 3, 4]]),
        ),
    ];
    // Seeded random pairs with a shared size sequence.
    let mut rng = stream(5, 0);
    let mut seed = 0u64;
    while pairs.len() < 14 {
        seed += 1;
        let a = random_hypergraph(seed, 9, 7);
        let mut edges: Vec<Vec<usize>> = Vec::new();
        for e in a.edges() {
            let mut vs: Vec<usize> = (0..9).collect();
            vs.shuffle(&mut rng);
            let mut f = vs[..e.len()].to_vec();
            f.sort_unstable();
            edges.push(f);
        }
        let b = Hypergraph::new(9, edges).unwrap();
        if matches!(hypergraph_wl_test(&a, &b), Ok(v) if v.is_distinguishable()) {
            pairs.push((a, b));
        }
    }
    pairs
}
