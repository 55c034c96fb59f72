use crate::error::{Error, Result};
use crate::graph::Graph;

/// Number of node orbits in connected graphlets on two to four nodes.
pub const ORBITS: usize = 15;
/// Default refusal threshold for the quartic orbit enumeration.
pub const ORBIT_MAX_NODES: usize = 200;

/// Normalised degree histogram, indices `0..=max degree`.
pub fn degree_stats(g: &Graph) -> Vec<f64> {
    let n = g.n();
    let degrees: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let max = degrees.iter().copied().max().unwrap_or(0);
    let mut h = vec![0.0; max + 1];
    for d in degrees {
        h[d] += 1.0;
    }
    if n > 0 {
        h.iter_mut().for_each(|v| *v /= n as f64);
    }
    h
}

/// Local clustering coefficient per node; 0 below degree 2.
pub fn clustering_stats(g: &Graph) -> Vec<f64> {
    let adj = g.adjacency();
    let n = g.n();
    (0..n)
        .map(|i| {
            let nb: Vec<usize> = (0..n).filter(|&j| adj[i * n + j]).collect();
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0;
            for a in 0..k {
                for b in a + 1..k {
                    if adj[nb[a] * n + nb[b]] {
                        links += 1;
                    }
                }
            }
            links as f64 / (k * (k - 1) / 2) as f64
        })
        .collect()
}

/// Clustering coefficients binned into `bins` equal bins over `[0, 1]`, normalised.
pub fn clustering_histogram(g: &Graph, bins: usize) -> Vec<f64> {
    let c = clustering_stats(g);
    let mut h = vec![0.0; bins];
    for v in &c {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        h[b] += 1.0;
    }
    if !c.is_empty() {
        h.iter_mut().for_each(|v| *v /= c.len() as f64);
    }
    h
}

/// Orbit of each member of an induced connected graphlet given its
/// within-graphlet degrees and edge count; `None` if disconnected.
fn classify(degrees: &[usize], edges: usize) -> Option<Vec<usize>> {
    match (degrees.len(), edges) {
        (2, 1) => Some(vec![0, 0]),
        (3, 2) => Some(degrees.iter().map(|&d| if d == 2 { 2 } else { 1 }).collect()),
        (3, 3) => Some(vec![3; 3]),
        (4, 3) => {
            if degrees.contains(&0) {
                None
            } else if degrees.contains(&3) {
                Some(degrees.iter().map(|&d| if d == 3 { 7 } else { 6 }).collect())
            } else {
                Some(degrees.iter().map(|&d| if d == 2 { 5 } else { 4 }).collect())
            }
        }
        (4, 4) => {
            if degrees.iter().all(|&d| d == 2) {
                Some(vec![8; 4])
            } else {
                Some(
                    degrees
                        .iter()
                        .map(|&d| match d {
                            1 => 9,
                            2 => 10,
                            _ => 11,
                        })
                        .collect(),
                )
            }
        }
        (4, 5) => Some(degrees.iter().map(|&d| if d == 2 { 12 } else { 13 }).collect()),
        (4, 6) => Some(vec![14; 4]),
        _ => None,
    }
}

/// Per-node counts of the 15 graphlet orbits (edge; path and triangle on
/// three nodes; path, star, cycle, paw, diamond and clique on four).
///
/// Orbit numbering: 0 edge; 1 path end, 2 path middle; 3 triangle;
/// 4 P4 end, 5 P4 inner; 6 star leaf, 7 star centre; 8 4-cycle;
/// 9 paw tail, 10 paw triangle degree-2, 11 paw degree-3; 12 diamond
/// degree-2, 13 diamond degree-3; 14 K4.
pub fn orbit_stats(g: &Graph, max_nodes: usize) -> Result<Vec<[u64; ORBITS]>> {
    let n = g.n();
    if n > max_nodes {
        return Err(Error::InvalidArgument(format!(
            "orbit counting refused for {n} nodes (limit {max_nodes})"
        )));
    }
    let adj = g.adjacency();
    let a = |i: usize, j: usize| adj[i * n + j];
    let mut counts = vec![[0u64; ORBITS]; n];
    let mut tally = |set: &[usize]| {
        let mut deg = vec![0; set.len()];
        let mut edges = 0;
        for x in 0..set.len() {
            for y in x + 1..set.len() {
                if a(set[x], set[y]) {
                    deg[x] += 1;
                    deg[y] += 1;
                    edges += 1;
                }
            }
        }
        if let Some(orbits) = classify(&deg, edges) {
            for (&v, o) in set.iter().zip(orbits) {
                counts[v][o] += 1;
            }
        }
    };
    for i in 0..n {
        for j in i + 1..n {
            tally(&[i, j]);
            for k in j + 1..n {
                tally(&[i, j, k]);
                for l in k + 1..n {
                    tally(&[i, j, k, l]);
                }
            }
        }
    }
    Ok(counts)
}

/// Orbit counts summed over nodes and normalised to a distribution.
pub fn orbit_profile(g: &Graph, max_nodes: usize) -> Result<Vec<f64>> {
    let counts = orbit_stats(g, max_nodes)?;
    let mut total = vec![0.0; ORBITS];
    for c in &counts {
        for (t, &v) in total.iter_mut().zip(c) {
            *t += v as f64;
        }
    }
    let s: f64 = total.iter().sum();
    if s > 0.0 {
        total.iter_mut().for_each(|v| *v /= s);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_and_path() {
        let k3 = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(degree_stats(&k3), vec![0.0, 0.0, 1.0]);
        assert_eq!(clustering_stats(&k3), vec![1.0; 3]);
        let p4 = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(clustering_stats(&p4), vec![0.0; 4]);
    }

    #[test]
    fn star_by_hand() {
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(clustering_stats(&star)[0], 0.0);
        let o = orbit_stats(&star, 200).unwrap();
        // centre: 3 edges, 3 path middles, 1 star centre
        let mut centre = [0u64; ORBITS];
        centre[0] = 3;
        centre[2] = 3;
        centre[7] = 1;
        assert_eq!(o[0], centre);
        // leaf: 1 edge, 2 path ends, 1 star leaf
        let mut leaf = [0u64; ORBITS];
        leaf[0] = 1;
        leaf[1] = 2;
        leaf[6] = 1;
        for v in 1..4 {
            assert_eq!(o[v], leaf);
        }
    }

    #[test]
    fn refuses_large_graphs() {
        let g = Graph::from_edges(5, &[]).unwrap();
        assert!(orbit_stats(&g, 4).is_err());
    }
}
