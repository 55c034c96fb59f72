//! Scale schedules: the token-map lengths `n_1 = 1 < n_2 < ... < n_K = N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base set used for small graphs.
pub const DEFAULT_BASE_SET: [usize; 5] = [1, 2, 4, 6, 9];
/// Growth ratio used to extend the base set for larger graphs.
pub const DEFAULT_GROWTH: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleSchedule {
    sizes: Vec<usize>,
}

impl ScaleSchedule {
    /// Wrap explicit sizes, checking the schedule invariants.
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.first() != Some(&1) {
            return Err(Error::InvalidArgument(format!("schedule must start at 1: {sizes:?}")));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("schedule must increase strictly: {sizes:?}")));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of scales `K`.
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    /// Final size `N`.
    pub fn n(&self) -> usize {
        *self.sizes.last().expect("non-empty schedule")
    }

    /// `Σ n_k`: the transformer sequence length.
    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Offset of scale `k` (0-based) in the concatenated sequence.
    pub fn offset(&self, k: usize) -> usize {
        self.sizes[..k].iter().sum()
    }

    /// Cumulative token counts `S_k` through each scale.
    pub fn cumulative(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    }

    /// Scale index of each sequence position.
    pub fn levels(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect()
    }
}

/// Base set and growth ratio from which per-graph schedules are built.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub base_set: Vec<usize>,
    pub growth: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_set: DEFAULT_BASE_SET.to_vec(),
            growth: DEFAULT_GROWTH,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self, n: usize) -> Result<ScaleSchedule> {
        build_scale_schedule(n, &self.base_set, self.growth)
    }
}

/// Keep base-set entries below `n`, extend geometrically by `growth` past
/// the largest one while still below `n`, then finish with `n`.
pub fn build_scale_schedule(n: usize, base_set: &[usize], growth: usize) -> Result<ScaleSchedule> {
    if n == 0 {
        return Err(Error::InvalidArgument("schedule for an empty graph".into()));
    }
    if base_set.is_empty() {
        return Err(Error::InvalidArgument("empty scale base set".into()));
    }
    if base_set.contains(&0) || base_set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "base set must be positive and strictly increasing: {base_set:?}"
        )));
    }
    if growth < 2 {
        return Err(Error::InvalidArgument(format!("growth ratio {growth} < 2")));
    }
    let mut sizes = vec![1];
    for &b in base_set {
        if b < n && b > *sizes.last().expect("non-empty") {
            sizes.push(b);
        }
    }
    let largest = *base_set.last().expect("non-empty");
    if largest < n {
        let mut next = largest * growth;
        while next < n {
            sizes.push(next);
            next *= growth;
        }
    }
    if *sizes.last().expect("non-empty") != n {
        sizes.push(n);
    }
    ScaleSchedule::from_sizes(sizes)
}
