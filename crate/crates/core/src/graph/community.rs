use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Edge probabilities for the two-community generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommunityParams {
    pub p_intra: f64,
    pub p_inter: f64,
    /// Add one random cross-community edge when none was sampled.
    pub ensure_bridge: bool,
}

impl Default for CommunityParams {
    fn default() -> Self {
        Self {
            p_intra: 0.7,
            p_inter: 0.05,
            ensure_bridge: true,
        }
    }
}

impl CommunityParams {
    /// Expected undirected edge count for `n` nodes.
    pub fn expected_edges(&self, n: usize) -> f64 {
        let h = (n / 2) as f64;
        let intra = 2.0 * h * (h - 1.0) / 2.0 * self.p_intra;
        let cross = h * h;
        let bridge = if self.ensure_bridge {
            (1.0 - self.p_inter).powf(cross)
        } else {
            0.0
        };
        intra + cross * self.p_inter + bridge
    }
}

/// Two equal communities; nodes `0..n/2` form the first block.
pub fn generate_community_small<R: Rng + ?Sized>(
    n_nodes: usize,
    params: &CommunityParams,
    rng: &mut R,
) -> Result<Graph> {
    if !n_nodes.is_multiple_of(2) || n_nodes < 2 {
        return Err(Error::InvalidArgument(format!(
            "community graphs need an even node count, got {n_nodes}"
        )));
    }
    let half = n_nodes / 2;
    let mut edges = Vec::new();
    let mut bridged = false;
    for i in 0..n_nodes {
        for j in (i + 1)..n_nodes {
            let same = (i < half) == (j < half);
            let p = if same { params.p_intra } else { params.p_inter };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
                bridged |= !same;
            }
        }
    }
    if params.ensure_bridge && !bridged {
        let i = rng.gen_range(0..half);
        let j = rng.gen_range(half..n_nodes);
        edges.push((i, j));
    }
    Graph::from_edges(n_nodes, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_per_seed() {
        let p = CommunityParams::default();
        let a = generate_community_small(12, &p, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = generate_community_small(12, &p, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_and_invariants() {
        let p = CommunityParams::default();
        for seed in 0..20 {
            let g = generate_community_small(12, &p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(g.n(), 12);
            assert_eq!(g.edge_attrs().len(), 12 * 12);
            for i in 0..12 {
                assert!(!g.has_edge(i, i));
                for j in 0..12 {
                    assert_eq!(g.has_edge(i, j), g.has_edge(j, i));
                }
            }
            let cross = g.edge_list().iter().filter(|(i, j, _)| (*i < 6) != (*j < 6)).count();
            assert!(cross >= 1);
        }
    }

    #[test]
    fn odd_size_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_community_small(13, &CommunityParams::default(), &mut rng).is_err());
    }

    #[test]
    fn mean_edge_count_matches_expectation() {
        // closed form: 2*C(6,2)*0.7 + 36*0.05 + P(no cross edge)
        let p = CommunityParams::default();
        let mean = p.expected_edges(12);
        assert!((mean - (21.0 + 1.8 + 0.95f64.powi(36))).abs() < 1e-12);
        // variance: intra and cross binomials are independent; the bridge adds
        // a Bernoulli that only fires when the cross count is zero.
        let q = 0.95f64.powi(36);
        let cross_plus_bridge_var = {
            // X = C + 1[C=0]; E[X^2] = E[C^2] + q
            let ec = 1.8;
            let ec2 = 36.0 * 0.05 * 0.95 + ec * ec;
            let ex = ec + q;
            ec2 + q - ex * ex
        };
        let var = 30.0 * 0.7 * 0.3 + cross_plus_bridge_var;
        let draws = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let total: usize = (0..draws)
            .map(|_| generate_community_small(12, &p, &mut rng).unwrap().edge_count())
            .sum();
        let emp = total as f64 / draws as f64;
        let sigma = (var / draws as f64).sqrt();
        assert!((emp - mean).abs() < 3.0 * sigma, "{emp} vs {mean} ± {sigma}");
    }
}
