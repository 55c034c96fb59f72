#![allow(dead_code)]

use mag::Graph;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Random graph with one-hot node types (`d` classes) and one-hot edge channels (`f`).
pub fn random_typed_graph<R: Rng>(n: usize, d: usize, f: usize, p: f64, rng: &mut R) -> Graph {
    let mut nodes = vec![0.0; n * d];
    for i in 0..n {
        nodes[i * d + rng.gen_range(0..d)] = 1.0;
    }
    let mut edges = vec![0.0; n * n * f];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                let c = rng.gen_range(0..f);
                edges[(i * n + j) * f + c] = 1.0;
                edges[(j * n + i) * f + c] = 1.0;
            }
        }
    }
    Graph::new(n, d, f, nodes, edges, true, true).unwrap()
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// `max |a − b| / max |a|`, the tensor-wise relative error.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
    diff / scale
}

/// Connected graphlets on 2–4 nodes as `(n, edges, orbit per vertex)`.
const GRAPHLETS: [(usize, &[(usize, usize)], &[usize]); 9] = [
    (2, &[(0, 1)], &[0, 0]),
    (3, &[(0, 1), (1, 2)], &[1, 2, 1]),
    (3, &[(0, 1), (1, 2), (0, 2)], &[3, 3, 3]),
    (4, &[(0, 1), (1, 2), (2, 3)], &[4, 5, 5, 4]),
    (4, &[(0, 1), (0, 2), (0, 3)], &[7, 6, 6, 6]),
    (4, &[(0, 1), (1, 2), (2, 3), (3, 0)], &[8, 8, 8, 8]),
    (4, &[(0, 1), (1, 2), (2, 0), (2, 3)], &[10, 10, 11, 9]),
    (4, &[(0, 1), (1, 2), (2, 0), (1, 3), (2, 3)], &[12, 13, 13, 12]),
    (4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], &[14, 14, 14, 14]),
];

/// Orbit counts by counting induced embeddings of each template and
/// dividing by its automorphism count.
pub fn brute_force_orbits(g: &Graph) -> Vec<[u64; 15]> {
    let n = g.n();
    let mut counts = vec![[0u64; 15]; n];
    for &(t, edges, orbits) in &GRAPHLETS {
        let tadj = |a: usize, b: usize| edges.contains(&(a, b)) || edges.contains(&(b, a));
        let embeddings = |target_n: usize, has: &dyn Fn(usize, usize) -> bool| {
            let mut found = Vec::new();
            let mut map = vec![0usize; t];
            fn rec(
                pos: usize,
                t: usize,
                tn: usize,
                map: &mut Vec<usize>,
                tadj: &dyn Fn(usize, usize) -> bool,
                has: &dyn Fn(usize, usize) -> bool,
                found: &mut Vec<Vec<usize>>,
            ) {
                if pos == t {
                    found.push(map.clone());
                    return;
                }
                for v in 0..tn {
                    if map[..pos].contains(&v) {
                        continue;
                    }
                    if (0..pos).all(|q| tadj(q, pos) == has(map[q], v)) {
                        map[pos] = v;
                        rec(pos + 1, t, tn, map, tadj, has, found);
                    }
                }
            }
            rec(0, t, target_n, &mut map, &tadj, has, &mut found);
            found
        };
        let aut = embeddings(t, &tadj).len() as u64;
        for m in embeddings(n, &|a, b| g.has_edge(a, b)) {
            for (pos, &v) in m.iter().enumerate() {
                counts[v][orbits[pos]] += 1;
            }
        }
        for c in counts.iter_mut() {
            let mut seen = [false; 15];
            for &o in orbits {
                if !seen[o] {
                    seen[o] = true;
                    assert_eq!(c[o] % aut, 0);
                    c[o] /= aut;
                }
            }
        }
    }
    counts
}

/// Every simple graph on `n` labelled nodes.
pub fn all_graphs(n: usize) -> impl Iterator<Item = Graph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0u64..1 << pairs.len()).map(move |mask| {
        let edges: Vec<_> = pairs
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        Graph::from_edges(n, &edges).unwrap()
    })
}
