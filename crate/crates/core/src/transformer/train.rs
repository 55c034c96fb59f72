use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::{Adam, AdamConfig, Checkpoint, ParamId, Tape, Tensor};
use crate::scalar::Scalar;
use crate::schedule::ScheduleConfig;
use crate::tokenizer::Tokenizer;

use super::model::ScaleTransformer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for TransformerTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 12,
            optimizer: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Token maps of one training graph and its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedGraph {
    pub tokens: Vec<Vec<usize>>,
    pub class: usize,
}

/// Tokenize every graph with the frozen tokenizer. `classes` defaults to 0.
pub fn tokenize_dataset<T: Scalar>(
    tokenizer: &Tokenizer<T>,
    graphs: &[Graph],
    classes: Option<&[usize]>,
    schedule: &ScheduleConfig,
) -> Result<Vec<TokenizedGraph>> {
    if let Some(c) = classes {
        if c.len() != graphs.len() {
            return Err(Error::InvalidArgument("one class label per graph".into()));
        }
    }
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let s = schedule.build(g.n())?;
            Ok(TokenizedGraph {
                tokens: tokenizer.tokenize(g, s.sizes())?.tokens,
                class: classes.map_or(0, |c| c[i]),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerEpoch {
    pub epoch: usize,
    pub loss: f64,
    /// Teacher-forced argmax accuracy on the training tapes.
    pub accuracy: f64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TransformerTrainer<T> {
    pub config: TransformerTrainConfig,
    pub adam: Adam<T>,
    pub epoch: usize,
}

fn correct<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> usize {
    targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| {
            let row = logits.row(i);
            let mut best = 0;
            for (k, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = k;
                }
            }
            best == t
        })
        .count()
}

impl<T: Scalar> TransformerTrainer<T> {
    pub fn new(config: TransformerTrainConfig, model: &ScaleTransformer<T>) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(Self {
            adam: Adam::new(config.optimizer, &model.params),
            config,
            epoch: 0,
        })
    }

    fn seed(&self, salt: u64) -> u64 {
        self.config
            .seed
            .wrapping_add((self.epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
            .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9))
    }

    /// Shuffled batches, teacher forcing, one Adam step per batch.
    pub fn train_epoch(
        &mut self,
        model: &mut ScaleTransformer<T>,
        codebook: &Tensor<T>,
        data: &[TokenizedGraph],
    ) -> Result<TransformerEpoch> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("no training sequences".into()));
        }
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed(0));
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits, mut total) = (0.0, 0usize, 0usize);
        let n_params = model.params.len();
        for (bi, batch) in order.chunks(self.config.batch_size).enumerate() {
            let mut acc: Vec<Option<Tensor<T>>> = vec![None; n_params];
            let scale = T::of(1.0 / batch.len() as f64);
            for (j, &i) in batch.iter().enumerate() {
                let item = &data[i];
                let mut tape = Tape::training(self.seed(1 + (bi * self.config.batch_size + j) as u64));
                let (loss, logits) = model.loss(&mut tape, &model.params, codebook, &item.tokens, item.class)?;
                let lv = tape.value(loss).data()[0].f64();
                if !lv.is_finite() {
                    return Err(Error::NonFinite(format!("transformer loss at epoch {}", self.epoch + 1)));
                }
                loss_sum += lv;
                let targets = item.tokens.concat();
                hits += correct(tape.value(logits), &targets);
                total += targets.len();
                for (id, g) in tape.backward(loss)?.into_params() {
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
            self.adam.step(&mut model.params, &grads)?;
        }
        self.epoch += 1;
        Ok(TransformerEpoch {
            epoch: self.epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: hits as f64 / total as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn to_checkpoint(&self, model: &ScaleTransformer<T>) -> Checkpoint<T> {
        let mut ck = model.to_checkpoint();
        ck.push_optimizer(&self.adam, &model.params);
        ck.set_meta("epoch", self.epoch);
        ck.set_meta("train_config", serde_json::to_string(&self.config).expect("config serialises"));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<(ScaleTransformer<T>, Self)> {
        let model = ScaleTransformer::from_checkpoint(ck)?;
        let config: TransformerTrainConfig = serde_json::from_str(ck.meta("train_config")?)?;
        let mut trainer = Self::new(config, &model)?;
        ck.load_optimizer(&mut trainer.adam, &model.params)?;
        trainer.epoch = ck.meta_parse("epoch")?;
        Ok((model, trainer))
    }
}

/// Teacher-forced loss and token accuracy with dropout disabled.
pub fn evaluate_tokens<T: Scalar>(
    model: &ScaleTransformer<T>,
    codebook: &Tensor<T>,
    data: &[TokenizedGraph],
) -> Result<(f64, f64)> {
    let (mut loss, mut hits, mut total) = (0.0, 0, 0);
    for item in data {
        let mut tape = Tape::new();
        let (l, logits) = model.loss(&mut tape, &model.params, codebook, &item.tokens, item.class)?;
        loss += tape.value(l).data()[0].f64();
        let targets = item.tokens.concat();
        hits += correct(tape.value(logits), &targets);
        total += targets.len();
    }
    Ok((loss / data.len().max(1) as f64, hits as f64 / total.max(1) as f64))
}
