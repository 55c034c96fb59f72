use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{Adam, AdamConfig, Checkpoint, ParamId, Tape, Tensor};
use crate::scalar::Scalar;
use crate::schedule::ScheduleConfig;

use super::model::{GraphInputs, Tokenizer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    /// Replace codes unused over an epoch with random pre-quantization rows.
    pub reseed_dead_codes: bool,
    pub seed: u64,
}

impl Default for TokenizerTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 12,
            optimizer: AdamConfig::default(),
            reseed_dead_codes: true,
            seed: 0,
        }
    }
}

/// Metrics for one tokenizer epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizerEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub recon: f64,
    pub vq: f64,
    /// Training node and edge accuracy of the straight-through reconstruction.
    pub node_accuracy: f64,
    pub edge_accuracy: f64,
    pub codes_used: usize,
    pub codes_reseeded: usize,
    pub wall_seconds: f64,
}

/// Optimizer state carried across epochs.
#[derive(Clone, Debug)]
pub struct TokenizerTrainer<T> {
    pub config: TokenizerTrainConfig,
    pub schedule: ScheduleConfig,
    pub adam: Adam<T>,
    pub epoch: usize,
}

const RESERVOIR: usize = 4096;

impl<T: Scalar> TokenizerTrainer<T> {
    pub fn new(config: TokenizerTrainConfig, schedule: ScheduleConfig, tokenizer: &Tokenizer<T>) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let adam = Adam::new(config.optimizer, &tokenizer.params);
        Ok(Self {
            config,
            schedule,
            adam,
            epoch: 0,
        })
    }

    fn epoch_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.config.seed ^ (self.epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    /// One pass over `graphs` in shuffled batches.
    pub fn train_epoch(&mut self, tokenizer: &mut Tokenizer<T>, graphs: &[Graph]) -> Result<TokenizerEpoch> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("no training graphs".into()));
        }
        let start = Instant::now();
        let mut rng = self.epoch_rng();
        let mut order: Vec<usize> = (0..graphs.len()).collect();
        order.shuffle(&mut rng);
        tokenizer.usage.reset();
        let mut reservoir: Vec<Vec<T>> = Vec::new();
        let mut seen = 0usize;
        let (mut loss_sum, mut recon_sum, mut vq_sum) = (0.0, 0.0, 0.0);
        let (mut node_hits, mut node_total, mut edge_hits, mut edge_total) = (0usize, 0usize, 0usize, 0usize);
        let n_params = tokenizer.params.len();
        for batch in order.chunks(self.config.batch_size) {
            let mut acc: Vec<Option<Tensor<T>>> = vec![None; n_params];
            let scale = T::of(1.0 / batch.len() as f64);
            for &gi in batch {
                let g = &graphs[gi];
                let inputs = GraphInputs::new(g)?;
                let sizes = self.schedule.build(g.n())?;
                let mut tape = Tape::new();
                let out = tokenizer.forward(&mut tape, &tokenizer.params, &inputs, sizes.sizes(), None)?;
                let loss = tape.value(out.loss).data()[0];
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("tokenizer loss at epoch {}", self.epoch + 1)));
                }
                loss_sum += loss.f64();
                recon_sum += tape.value(out.recon).data()[0].f64();
                vq_sum += tape.value(out.vq).data()[0].f64();
                let (nh, eh) = accuracy_counts(tape.value(out.node_logits), tape.value(out.edge_logits), &inputs);
                node_hits += nh;
                edge_hits += eh;
                node_total += inputs.n;
                edge_total += inputs.edge_targets.len();
                for tok in &out.tokens {
                    tokenizer.usage.record(tok);
                }
                for lat in &out.latents {
                    for r in 0..lat.rows() {
                        seen += 1;
                        if reservoir.len() < RESERVOIR {
                            reservoir.push(lat.row(r).to_vec());
                        } else {
                            let j = rng.gen_range(0..seen);
                            if j < RESERVOIR {
                                reservoir[j] = lat.row(r).to_vec();
                            }
                        }
                    }
                }
                let grads = tape.backward(out.loss)?;
                for (id, g) in grads.into_params() {
                    let g = g.map(|v| v * scale);
                    match &mut acc[id.0] {
                        Some(a) => a.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                }
            }
            let grads: Vec<(ParamId, Tensor<T>)> = acc
                .into_iter()
                .enumerate()
                .filter_map(|(i, g)| g.map(|g| (ParamId(i), g)))
                .collect();
            self.adam.step(&mut tokenizer.params, &grads)?;
        }
        let codes_used = tokenizer.usage.used();
        let mut codes_reseeded = 0;
        if self.config.reseed_dead_codes && !reservoir.is_empty() {
            let dead = tokenizer.usage.dead();
            let vectors: Vec<Vec<T>> = dead
                .iter()
                .map(|_| reservoir[rng.gen_range(0..reservoir.len())].clone())
                .collect();
            tokenizer.reseed_codes(&dead, &vectors);
            codes_reseeded = dead.len();
        }
        self.epoch += 1;
        let m = graphs.len() as f64;
        Ok(TokenizerEpoch {
            epoch: self.epoch,
            loss: loss_sum / m,
            recon: recon_sum / m,
            vq: vq_sum / m,
            node_accuracy: ratio(node_hits, node_total),
            edge_accuracy: ratio(edge_hits, edge_total),
            codes_used,
            codes_reseeded,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Save optimizer state alongside the model parameters.
    pub fn to_checkpoint(&self, tokenizer: &Tokenizer<T>) -> Checkpoint<T> {
        let mut ck = tokenizer.to_checkpoint();
        ck.push_optimizer(&self.adam, &tokenizer.params);
        ck.set_meta("epoch", self.epoch);
        ck.set_meta(
            "train_config",
            serde_json::to_string(&self.config).expect("config serialises"),
        );
        ck.set_meta(
            "schedule",
            serde_json::to_string(&self.schedule).expect("config serialises"),
        );
        ck
    }

    /// Rebuild tokenizer and trainer from a checkpoint written by [`Self::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<(Tokenizer<T>, Self)> {
        let tokenizer = Tokenizer::from_checkpoint(ck)?;
        let config: TokenizerTrainConfig = serde_json::from_str(ck.meta("train_config")?)?;
        let schedule: ScheduleConfig = serde_json::from_str(ck.meta("schedule")?)?;
        let mut trainer = Self::new(config, schedule, &tokenizer)?;
        ck.load_optimizer(&mut trainer.adam, &tokenizer.params)?;
        trainer.epoch = ck.meta_parse("epoch")?;
        Ok((tokenizer, trainer))
    }
}

fn ratio(hits: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

fn argmax_row<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

/// Correct node and upper-triangle edge predictions.
fn accuracy_counts<T: Scalar>(nodes: &Tensor<T>, edges: &Tensor<T>, target: &GraphInputs<T>) -> (usize, usize) {
    let n = target.n;
    let node_hits = (0..n)
        .filter(|&i| argmax_row(nodes.row(i)) == target.node_targets[i])
        .count();
    let mut edge_hits = 0;
    let mut p = 0;
    for i in 0..n {
        for j in i + 1..n {
            if argmax_row(edges.row(i * n + j)) == target.edge_targets[p] {
                edge_hits += 1;
            }
            p += 1;
        }
    }
    (node_hits, edge_hits)
}

/// Node and edge accuracy of decoding each graph's own token maps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub node_accuracy: f64,
    pub edge_accuracy: f64,
    /// Fraction of graphs reconstructed without a single error.
    pub exact_graphs: f64,
}

pub fn evaluate_reconstruction<T: Scalar>(
    tokenizer: &Tokenizer<T>,
    graphs: &[Graph],
    schedule: &ScheduleConfig,
) -> Result<ReconstructionReport> {
    let (mut nh, mut nt, mut eh, mut et, mut exact) = (0, 0, 0, 0, 0);
    for g in graphs {
        let inputs = GraphInputs::<T>::new(g)?;
        let sizes = schedule.build(g.n())?;
        let tokens = tokenizer.tokenize(g, sizes.sizes())?;
        let latents = tokenizer.reconstruct_latents(&tokens.tokens)?;
        let rec = tokenizer.decode(&latents)?;
        let (a, b) = accuracy_counts(&rec.node_logits, &rec.edge_logits, &inputs);
        if a == inputs.n && b == inputs.edge_targets.len() {
            exact += 1;
        }
        nh += a;
        eh += b;
        nt += inputs.n;
        et += inputs.edge_targets.len();
    }
    Ok(ReconstructionReport {
        node_accuracy: ratio(nh, nt),
        edge_accuracy: ratio(eh, et),
        exact_graphs: ratio(exact, graphs.len()),
    })
}
