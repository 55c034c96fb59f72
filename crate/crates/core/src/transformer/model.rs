use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::numerics::{interp, Checkpoint, InterpMode, ParamId, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;

use super::config::TransformerConfig;
use super::mask::BlockMask;

#[derive(Clone, Debug)]
struct Block {
    ada: Linear,
    qkv: Linear,
    proj: Linear,
    temperature: ParamId,
    fc1: Linear,
    fc2: Linear,
}

/// Keys and values of every position fed so far, per block and head.
#[derive(Clone, Debug)]
pub struct KvCache<T> {
    keys: Vec<Vec<Tensor<T>>>,
    values: Vec<Vec<Tensor<T>>>,
    filled: usize,
}

impl<T: Scalar> KvCache<T> {
    pub fn new(blocks: usize, heads: usize) -> Self {
        let empty = vec![Tensor::zeros(&[0, 0]); heads];
        Self {
            keys: vec![empty.clone(); blocks],
            values: vec![empty; blocks],
            filled: 0,
        }
    }

    /// Number of positions cached.
    pub fn filled(&self) -> usize {
        self.filled
    }

    fn append(&mut self, block: usize, head: usize, k: &Tensor<T>, v: &Tensor<T>) {
        for (store, new) in [(&mut self.keys, k), (&mut self.values, v)] {
            let old = &store[block][head];
            let data: Vec<T> = old.data().iter().chain(new.data()).copied().collect();
            store[block][head] = Tensor::new(vec![old.rows() + new.rows(), new.cols()], data).expect("row append");
        }
    }
}

/// Decoder-only transformer over concatenated token maps with a
/// block-causal mask, level embeddings and AdaLN class conditioning.
#[derive(Clone, Debug)]
pub struct ScaleTransformer<T> {
    config: TransformerConfig,
    latent_dim: usize,
    pub params: ParamStore<T>,
    class_emb: ParamId,
    mask_token: ParamId,
    level_emb: ParamId,
    input: Linear,
    blocks: Vec<Block>,
    final_ada: Linear,
    head: Linear,
}

impl<T: Scalar> ScaleTransformer<T> {
    pub fn new(config: TransformerConfig, latent_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if latent_dim == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let h = config.hidden;
        let std = 0.02;
        // The extra row is the null class used by conditional dropout.
        let class_emb = params.add("class_emb", Tensor::randn(&[config.class_count + 1, h], std, &mut rng));
        let mask_token = params.add("mask_token", Tensor::randn(&[1, h], std, &mut rng));
        let level_emb = params.add("level_emb", Tensor::randn(&[config.max_levels, h], std, &mut rng));
        let input = Linear::new(&mut params, "input", latent_dim, h, &mut rng);
        let blocks = (0..config.blocks)
            .map(|b| {
                let name = format!("block{b}");
                Block {
                    ada: Linear::zeroed(&mut params, &format!("{name}/ada"), h, 4 * h),
                    qkv: Linear::new(&mut params, &format!("{name}/qkv"), h, 3 * h, &mut rng),
                    proj: Linear::new(&mut params, &format!("{name}/proj"), h, h, &mut rng),
                    temperature: params.add(
                        format!("{name}/temperature"),
                        Tensor::full(&[1, config.heads], T::of(config.temperature_init)),
                    ),
                    fc1: Linear::new(&mut params, &format!("{name}/fc1"), h, config.mlp_ratio * h, &mut rng),
                    fc2: Linear::new(&mut params, &format!("{name}/fc2"), config.mlp_ratio * h, h, &mut rng),
                }
            })
            .collect();
        let final_ada = Linear::zeroed(&mut params, "final/ada", h, 2 * h);
        let head = Linear::new(&mut params, "head", h, config.vocab, &mut rng);
        Ok(Self {
            config,
            latent_dim,
            params,
            class_emb,
            mask_token,
            level_emb,
            input,
            blocks,
            final_ada,
            head,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn new_cache(&self) -> KvCache<T> {
        KvCache::new(self.config.blocks, self.config.heads)
    }

    fn check_codebook(&self, codebook: &Tensor<T>) -> Result<()> {
        if codebook.rows() != self.config.vocab || codebook.cols() != self.latent_dim {
            return Err(Error::InvalidArgument(format!(
                "codebook is {:?}, transformer expects {} × {}",
                codebook.shape(),
                self.config.vocab,
                self.latent_dim
            )));
        }
        Ok(())
    }

    /// Conditioning row: the class embedding, or the null row when
    /// conditional dropout fires on a training tape.
    pub fn condition(&self, tape: &mut Tape<T>, params: &ParamStore<T>, class: usize) -> Result<Var> {
        if class >= self.config.class_count {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} classes",
                self.config.class_count
            )));
        }
        let row = if tape.is_training() && tape.uniform() < self.config.conditional_dropout {
            self.config.class_count
        } else {
            class
        };
        let table = tape.param(params, self.class_emb);
        tape.gather_rows(table, &[row])
    }

    /// Input rows for scale `level` (0-based). Level 0 is the start token
    /// `cond`; later levels embed the previous scale's code vectors linearly
    /// upsampled to `n_k` rows.
    #[allow(clippy::too_many_arguments)]
    pub fn embed_level(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        codebook: &Tensor<T>,
        cond: Var,
        level: usize,
        previous: Option<&[usize]>,
        n_k: usize,
    ) -> Result<Var> {
        if level >= self.config.max_levels {
            return Err(Error::InvalidArgument(format!(
                "scale {level} exceeds the {} level embeddings",
                self.config.max_levels
            )));
        }
        let levels = tape.param(params, self.level_emb);
        let lvl = tape.gather_rows(levels, &vec![level; n_k])?;
        let tokens = match (level, previous) {
            (0, _) => {
                if n_k != 1 {
                    return Err(Error::InvalidArgument("the first scale must have one token".into()));
                }
                cond
            }
            (_, Some(prev)) => {
                if prev.iter().any(|&t| t >= codebook.rows()) {
                    return Err(Error::InvalidArgument("token outside the codebook".into()));
                }
                let codes = Tensor::from_fn(prev.len(), codebook.cols(), |i, c| codebook.at(prev[i], c));
                let up = if prev.len() == n_k {
                    codes
                } else {
                    interp::interp_matrix::<T>(prev.len(), n_k, InterpMode::Linear)?.matmul(&codes)?
                };
                let up = tape.constant(up);
                let emb = self.input.forward(tape, params, up)?;
                if tape.is_training() && self.config.token_dropout > 0.0 {
                    let idx: Vec<usize> = (0..n_k)
                        .map(|i| if tape.uniform() < self.config.token_dropout { n_k } else { i })
                        .collect();
                    let m = tape.param(params, self.mask_token);
                    let both = tape.concat_rows(&[emb, m])?;
                    tape.gather_rows(both, &idx)?
                } else {
                    emb
                }
            }
            (_, None) => return Err(Error::InvalidArgument("missing previous token map".into())),
        };
        tape.add(tokens, lvl)
    }

    /// Teacher-forced inputs for all scales: `Σ n_k × hidden`.
    pub fn embed_sequence(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        codebook: &Tensor<T>,
        tokens: &[Vec<usize>],
        cond: Var,
    ) -> Result<Var> {
        self.check_codebook(codebook)?;
        let mut parts = Vec::with_capacity(tokens.len());
        for k in 0..tokens.len() {
            let prev = if k == 0 { None } else { Some(tokens[k - 1].as_slice()) };
            parts.push(self.embed_level(tape, params, codebook, cond, k, prev, tokens[k].len())?);
        }
        tape.concat_rows(&parts)
    }

    fn adaln(&self, tape: &mut Tape<T>, x: Var, shift: Var, scale: Var) -> Result<Var> {
        let n = tape.layer_norm_rows(x, self.config.layer_norm_eps);
        let ones = tape.constant(Tensor::full(&[1, self.config.hidden], T::one()));
        let s = tape.add(scale, ones)?;
        let y = tape.mul_row(n, s)?;
        tape.add_row(y, shift)
    }

    /// Run the blocks and classifier head over `x`. With a `mask` every row
    /// attends per the mask; with a `cache` the rows are appended to it and
    /// attend to every cached position.
    pub fn run(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        x: Var,
        cond: Var,
        mask: Option<&BlockMask>,
        mut cache: Option<&mut KvCache<T>>,
    ) -> Result<Var> {
        let h = self.config.hidden;
        let heads = self.config.heads;
        let dh = h / heads;
        let rows = tape.shape(x).0;
        if let Some(m) = mask {
            if m.size != rows {
                return Err(Error::shape("transformer", format!("mask {} for {rows} positions", m.size)));
            }
        }
        let mut x = x;
        for (b, block) in self.blocks.iter().enumerate() {
            let ada = block.ada.forward(tape, params, cond)?;
            let shift1 = tape.slice_cols(ada, 0, h)?;
            let scale1 = tape.slice_cols(ada, h, 2 * h)?;
            let shift2 = tape.slice_cols(ada, 2 * h, 3 * h)?;
            let scale2 = tape.slice_cols(ada, 3 * h, 4 * h)?;

            let xn = self.adaln(tape, x, shift1, scale1)?;
            let qkv = block.qkv.forward(tape, params, xn)?;
            let temp = tape.param(params, block.temperature);
            let mut outs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let q = tape.slice_cols(qkv, hd * dh, (hd + 1) * dh)?;
                let k = tape.slice_cols(qkv, h + hd * dh, h + (hd + 1) * dh)?;
                let v = tape.slice_cols(qkv, 2 * h + hd * dh, 2 * h + (hd + 1) * dh)?;
                let q = tape.l2_normalize_rows(q, 1e-12);
                let k = tape.l2_normalize_rows(k, 1e-12);
                let (k_all, v_all) = match cache.as_deref_mut() {
                    Some(c) => {
                        let (ck, cv) = (c.keys[b][hd].clone(), c.values[b][hd].clone());
                        c.append(b, hd, tape.value(k), tape.value(v));
                        if ck.rows() == 0 {
                            (k, v)
                        } else {
                            let ck = tape.constant(ck);
                            let cv = tape.constant(cv);
                            (tape.concat_rows(&[ck, k])?, tape.concat_rows(&[cv, v])?)
                        }
                    }
                    None => (k, v),
                };
                let kt = tape.transpose(k_all);
                let scores = tape.matmul(q, kt)?;
                let t = tape.slice_cols(temp, hd, hd + 1)?;
                let scores = tape.scale_by(scores, t)?;
                let attn = match mask {
                    Some(m) => tape.masked_softmax_rows(scores, &m.allowed)?,
                    None => tape.softmax_rows(scores),
                };
                outs.push(tape.matmul(attn, v_all)?);
            }
            let o = tape.concat_cols(&outs)?;
            let o = block.proj.forward(tape, params, o)?;
            let o = tape.dropout(o, self.config.layer_dropout);
            x = tape.add(x, o)?;

            let xn = self.adaln(tape, x, shift2, scale2)?;
            let m = block.fc1.forward(tape, params, xn)?;
            let m = tape.relu(m);
            let m = block.fc2.forward(tape, params, m)?;
            let m = tape.dropout(m, self.config.layer_dropout);
            x = tape.add(x, m)?;
            if !tape.value(x).all_finite() {
                return Err(Error::NonFinite(format!("activations after transformer block {b}")));
            }
        }
        if let Some(c) = cache {
            c.filled += rows;
        }
        let ada = self.final_ada.forward(tape, params, cond)?;
        let shift = tape.slice_cols(ada, 0, h)?;
        let scale = tape.slice_cols(ada, h, 2 * h)?;
        let xn = self.adaln(tape, x, shift, scale)?;
        self.head.forward(tape, params, xn)
    }

    /// Teacher-forced logits `Σ n_k × V` for token maps `r_1..r_K`.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        codebook: &Tensor<T>,
        tokens: &[Vec<usize>],
        class: usize,
    ) -> Result<Var> {
        let cond = self.condition(tape, params, class)?;
        let x = self.embed_sequence(tape, params, codebook, tokens, cond)?;
        let sizes: Vec<usize> = tokens.iter().map(Vec::len).collect();
        let mask = BlockMask::from_blocks(&sizes);
        self.run(tape, params, x, cond, Some(&mask), None)
    }

    /// Mean next-scale cross-entropy and the logits it was computed from.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        codebook: &Tensor<T>,
        tokens: &[Vec<usize>],
        class: usize,
    ) -> Result<(Var, Var)> {
        let logits = self.forward(tape, params, codebook, tokens, class)?;
        let loss = next_scale_loss(tape, logits, tokens)?;
        Ok((loss, logits))
    }

    /// Logits for scale `level` given the previous scale's tokens, reusing
    /// and extending `cache`.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        codebook: &Tensor<T>,
        cache: &mut KvCache<T>,
        class: usize,
        level: usize,
        previous: Option<&[usize]>,
        n_k: usize,
    ) -> Result<Tensor<T>> {
        self.check_codebook(codebook)?;
        let mut tape = Tape::new();
        let cond = self.condition(&mut tape, &self.params, class)?;
        let x = self.embed_level(&mut tape, &self.params, codebook, cond, level, previous, n_k)?;
        let logits = self.run(&mut tape, &self.params, x, cond, None, Some(cache))?;
        Ok(tape.value(logits).clone())
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "transformer");
        ck.set_meta("latent_dim", self.latent_dim);
        ck.set_meta("config", serde_json::to_string(&self.config).expect("config serialises"));
        ck.push_store("transformer", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        if ck.meta("kind")? != "transformer" {
            return Err(Error::Checkpoint("not a transformer checkpoint".into()));
        }
        let config: TransformerConfig = serde_json::from_str(ck.meta("config")?)?;
        let mut t = Self::new(config, ck.meta_parse("latent_dim")?, 0)?;
        ck.load_store("transformer", &mut t.params)?;
        Ok(t)
    }
}

/// Mean cross-entropy of `logits` against the concatenated token maps.
pub fn next_scale_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, tokens: &[Vec<usize>]) -> Result<Var> {
    let targets: Vec<usize> = tokens.concat();
    if tape.shape(logits).0 != targets.len() {
        return Err(Error::shape(
            "next_scale_loss",
            format!("{} logit rows for {} targets", tape.shape(logits).0, targets.len()),
        ));
    }
    let w = vec![T::of(1.0 / targets.len() as f64); targets.len()];
    tape.cross_entropy(logits, &targets, &w)
}
