use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{generate_community_small, CommunityParams, Graph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub name: String,
    pub split_fraction: f64,
    pub rng_seed: u64,
    /// 1 for unconditional generation.
    pub class_count: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            name: "community_small".into(),
            split_fraction: 0.8,
            rng_seed: 0,
            class_count: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSpec {
    /// Seeded shuffle of `0..len`, first `split_fraction` for training.
    pub fn split(&self, len: usize) -> Split {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.rng_seed));
        let n_train = ((len as f64) * self.split_fraction).round() as usize;
        let test = idx.split_off(n_train.min(len));
        Split { train: idx, test }
    }
}

/// `count` community graphs with sizes drawn uniformly from the even values
/// in `[min_nodes, max_nodes]`.
pub fn build_community_dataset(
    count: usize,
    min_nodes: usize,
    max_nodes: usize,
    params: &CommunityParams,
    seed: u64,
) -> Result<Vec<Graph>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes: Vec<usize> = (min_nodes..=max_nodes).filter(|n| n % 2 == 0).collect();
    (0..count)
        .map(|_| {
            let n = sizes[rng.gen_range(0..sizes.len())];
            generate_community_small(n, params, &mut rng)
        })
        .collect()
}
