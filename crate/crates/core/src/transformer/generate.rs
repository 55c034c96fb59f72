use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::schedule::ScheduleConfig;
use crate::tokenizer::Tokenizer;

use super::config::SamplingConfig;
use super::model::ScaleTransformer;
use super::sampling::{filter_top_k_top_p, sample_index};

/// Sampled token maps plus the logits each step produced.
#[derive(Clone, Debug)]
pub struct Generation<T> {
    pub tokens: Vec<Vec<usize>>,
    pub step_logits: Vec<crate::numerics::Tensor<T>>,
}

/// Softmax of one logit row in `f64`.
fn probabilities<T: Scalar>(row: &[T]) -> Vec<f64> {
    let max = row.iter().map(|v| v.f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = row.iter().map(|v| (v.f64() - max).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

impl<T: Scalar> ScaleTransformer<T> {
    /// Sample token maps for the given scale sizes, one transformer call per
    /// scale, all tokens of a scale in parallel.
    pub fn generate_tokens<R: Rng + ?Sized>(
        &self,
        codebook: &crate::numerics::Tensor<T>,
        sizes: &[usize],
        class: usize,
        sampling: &SamplingConfig,
        rng: &mut R,
    ) -> Result<Generation<T>> {
        if sizes.first() != Some(&1) {
            return Err(Error::InvalidArgument("schedules start with a single token".into()));
        }
        let mut cache = self.new_cache();
        let mut tokens: Vec<Vec<usize>> = Vec::with_capacity(sizes.len());
        let mut step_logits = Vec::with_capacity(sizes.len());
        for (k, &n_k) in sizes.iter().enumerate() {
            let prev = tokens.last().map(Vec::as_slice);
            let logits = self.step(codebook, &mut cache, class, k, prev, n_k)?;
            let mut r = Vec::with_capacity(n_k);
            for i in 0..n_k {
                let p = filter_top_k_top_p(&probabilities(logits.row(i)), sampling.top_k, sampling.top_p)?;
                r.push(sample_index(&p, rng)?);
            }
            tokens.push(r);
            step_logits.push(logits);
        }
        Ok(Generation { tokens, step_logits })
    }
}

/// Empirical distribution of graph sizes, sampled when no size is requested.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeHistogram {
    sizes: Vec<usize>,
}

impl SizeHistogram {
    pub fn from_graphs(graphs: &[Graph]) -> Result<Self> {
        Self::from_sizes(graphs.iter().map(Graph::n).collect())
    }

    pub fn from_sizes(mut sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidArgument("size histogram needs positive sizes".into()));
        }
        sizes.sort_unstable();
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sizes[rng.gen_range(0..self.sizes.len())]
    }
}

/// Generate one graph: sample a size if none is given, sample token maps,
/// then decode the accumulated latents.
#[allow(clippy::too_many_arguments)]
pub fn generate_graph<T: Scalar, R: Rng + ?Sized>(
    tokenizer: &Tokenizer<T>,
    transformer: &ScaleTransformer<T>,
    schedule: &ScheduleConfig,
    sizes: &SizeHistogram,
    n: Option<usize>,
    class: usize,
    sampling: &SamplingConfig,
    rng: &mut R,
) -> Result<Graph> {
    if tokenizer.codebook_size() != transformer.config().vocab || tokenizer.latent_dim() != transformer.latent_dim() {
        return Err(Error::Checkpoint(format!(
            "tokenizer codebook {}×{} does not match transformer vocabulary {}×{}",
            tokenizer.codebook_size(),
            tokenizer.latent_dim(),
            transformer.config().vocab,
            transformer.latent_dim()
        )));
    }
    let n = match n {
        Some(n) => n,
        None => sizes.sample(rng),
    };
    let s = schedule.build(n)?;
    let generation = transformer.generate_tokens(tokenizer.codebook(), s.sizes(), class, sampling, rng)?;
    tokenizer.detokenize(&generation.tokens)
}
