use crate::schedule::ScaleSchedule;

/// Square boolean attention mask, row-major; `true` means "may attend".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMask {
    pub size: usize,
    pub allowed: Vec<bool>,
}

impl BlockMask {
    /// Full attention within each block and to every earlier block.
    pub fn from_blocks(blocks: &[usize]) -> Self {
        let block_of: Vec<usize> = blocks
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| std::iter::repeat_n(b, n))
            .collect();
        let size = block_of.len();
        let mut allowed = vec![false; size * size];
        for i in 0..size {
            for j in 0..size {
                allowed[i * size + j] = block_of[j] <= block_of[i];
            }
        }
        Self { size, allowed }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.size + j]
    }
}

/// Mask over the start token followed by every scale of `schedule`.
pub fn build_block_causal_mask(schedule: &ScaleSchedule) -> BlockMask {
    let mut blocks = vec![1];
    blocks.extend_from_slice(schedule.sizes());
    BlockMask::from_blocks(&blocks)
}
