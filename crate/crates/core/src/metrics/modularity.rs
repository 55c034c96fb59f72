use crate::graph::Graph;

/// Newman modularity of a two-way partition.
pub fn modularity(g: &Graph, side: &[bool]) -> f64 {
    let n = g.n();
    let adj = g.adjacency();
    let k: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if side[i] == side[j] {
                let a = if adj[i * n + j] { 1.0 } else { 0.0 };
                q += a - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Split by the sign of the leading eigenvector of the modularity matrix
/// `B = A − k kᵀ / 2m`, found by power iteration on `B + ‖B‖₁ I`.
pub fn spectral_bisection(g: &Graph) -> Vec<bool> {
    let n = g.n();
    let adj = g.adjacency();
    let k: Vec<f64> = (0..n).map(|i| g.degree(i) as f64).collect();
    let two_m: f64 = k.iter().sum();
    if n == 0 || two_m == 0.0 {
        return vec![true; n];
    }
    let b = |i: usize, j: usize| (if adj[i * n + j] { 1.0 } else { 0.0 }) - k[i] * k[j] / two_m;
    let shift = (0..n)
        .map(|i| (0..n).map(|j| b(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    // Deterministic start with no symmetry to the all-ones vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7548776662).fract()).collect();
    for _ in 0..1000 {
        let mut next: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| b(i, j) * v[j]).sum::<f64>() + shift * v[i])
            .collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    v.into_iter().map(|x| x >= 0.0).collect()
}

/// Modularity of the spectral two-way split.
pub fn two_way_modularity(g: &Graph) -> f64 {
    modularity(g, &spectral_bisection(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_triangles_joined_by_a_bridge() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]).unwrap();
        let side = spectral_bisection(&g);
        assert!(side[..3].iter().all(|&s| s == side[0]));
        assert!(side[3..].iter().all(|&s| s != side[0]));
        // Two blocks of 3 internal edges each, m = 7, block degree sum 7.
        let expected = 2.0 * (3.0 / 7.0 - (7.0f64 / 14.0).powi(2));
        assert!((two_way_modularity(&g) - expected).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_has_no_split() {
        let edges: Vec<_> = (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j))).collect();
        let g = Graph::from_edges(5, &edges).unwrap();
        assert!(two_way_modularity(&g) <= 1e-9);
    }
}
