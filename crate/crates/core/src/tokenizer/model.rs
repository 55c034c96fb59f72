use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::nn::{LayerNorm, Linear};
use crate::numerics::{Checkpoint, ParamId, ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;

use super::config::TokenizerConfig;
use super::quantize::{quantize, vq_loss, CodeUsage};

/// Dense per-graph tensors consumed by the tokenizer.
#[derive(Clone, Debug)]
pub struct GraphInputs<T> {
    pub n: usize,
    /// `N × D` node features.
    pub nodes: Tensor<T>,
    /// `N × N` 0/1 adjacency.
    pub adjacency: Tensor<T>,
    /// `N × F` row sums of the edge attributes.
    pub edge_sums: Tensor<T>,
    pub node_targets: Vec<usize>,
    /// Classes of the pairs `i < j`, row-major.
    pub edge_targets: Vec<usize>,
}

impl<T: Scalar> GraphInputs<T> {
    pub fn new(g: &Graph) -> Result<Self> {
        let n = g.n();
        if n == 0 {
            return Err(Error::InvalidGraph("cannot encode an empty graph".into()));
        }
        let (d, f) = (g.node_dim(), g.edge_dim());
        let nodes = Tensor::new(vec![n, d], g.node_features().iter().map(|&v| T::of(v)).collect())?;
        let adjacency = Tensor::from_fn(n, n, |i, j| if g.has_edge(i, j) { T::one() } else { T::zero() });
        let edge_sums = Tensor::from_fn(n, f, |i, c| T::of((0..n).map(|j| g.edge(i, j)[c]).sum()));
        let node_targets = (0..n).map(|i| g.node_class(i)).collect();
        let mut edge_targets = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                edge_targets.push(g.edge_class(i, j));
            }
        }
        Ok(Self {
            n,
            nodes,
            adjacency,
            edge_sums,
            node_targets,
            edge_targets,
        })
    }
}

/// One message-passing layer: `h ← LN(h + ReLU(A·h·W1 + B·W2 + b))`, where
/// row `i` of `B` is the sum of the attributes on the edges at `i`.
#[derive(Clone, Copy, Debug)]
pub struct MpnnLayer {
    pub w_node: Linear,
    pub w_edge: Linear,
    pub bias: ParamId,
    pub norm: LayerNorm,
}

impl MpnnLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        hidden: usize,
        edge_dim: usize,
        eps: f64,
        rng: &mut R,
    ) -> Self {
        let w_node = Linear::without_bias(store, &format!("{name}/node"), hidden, hidden, rng);
        let w_edge = Linear::without_bias(store, &format!("{name}/edge"), edge_dim, hidden, rng);
        let bias = store.add(format!("{name}/bias"), Tensor::zeros(&[1, hidden]));
        let norm = LayerNorm::new(store, &format!("{name}/norm"), hidden, eps);
        Self {
            w_node,
            w_edge,
            bias,
            norm,
        }
    }
}

/// Apply `layer` to node states `h` (`N × h`). Masked-out nodes neither send
/// nor keep state.
pub fn mpnn_layer<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ParamStore<T>,
    layer: &MpnnLayer,
    h: Var,
    adjacency: Var,
    edge_sums: Var,
    mask: Option<&[bool]>,
) -> Result<Var> {
    let (n, width) = tape.shape(h);
    if tape.shape(adjacency) != (n, n) || tape.shape(edge_sums).0 != n {
        return Err(Error::shape(
            "mpnn_layer",
            format!(
                "{n} nodes vs adjacency {:?} and edge sums {:?}",
                tape.shape(adjacency),
                tape.shape(edge_sums)
            ),
        ));
    }
    let mask = match mask {
        Some(m) if m.len() != n => {
            return Err(Error::shape("mpnn_layer", format!("mask of {} for {n} nodes", m.len())));
        }
        Some(m) => {
            let t = Tensor::from_fn(n, width, |i, _| if m[i] { T::one() } else { T::zero() });
            Some(tape.constant(t))
        }
        None => None,
    };
    let sender = match mask {
        Some(m) => tape.mul(h, m)?,
        None => h,
    };
    let proj = layer.w_node.forward(tape, params, sender)?;
    let agg = tape.matmul(adjacency, proj)?;
    let e = layer.w_edge.forward(tape, params, edge_sums)?;
    let msg = tape.add(agg, e)?;
    let b = tape.param(params, layer.bias);
    let msg = tape.add_row(msg, b)?;
    let msg = tape.relu(msg);
    let out = tape.add(h, msg)?;
    let out = layer.norm.forward(tape, params, out)?;
    match mask {
        Some(m) => tape.mul(out, m),
        None => Ok(out),
    }
}

/// Decoder layer over the complete graph: `h ← LN(h + ReLU(h·Ws + mean(h)·Wa + b))`.
#[derive(Clone, Copy, Debug)]
pub struct GcnLayer {
    pub w_self: Linear,
    pub w_agg: Linear,
    pub norm: LayerNorm,
}

impl GcnLayer {
    fn new<T: Scalar, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, hidden: usize, eps: f64, rng: &mut R) -> Self {
        Self {
            w_self: Linear::new(store, &format!("{name}/self"), hidden, hidden, rng),
            w_agg: Linear::without_bias(store, &format!("{name}/agg"), hidden, hidden, rng),
            norm: LayerNorm::new(store, &format!("{name}/norm"), hidden, eps),
        }
    }

    fn forward<T: Scalar>(&self, tape: &mut Tape<T>, params: &ParamStore<T>, h: Var) -> Result<Var> {
        let s = self.w_self.forward(tape, params, h)?;
        let mean = tape.mean_rows(h);
        let a = self.w_agg.forward(tape, params, mean)?;
        let msg = tape.add_row(s, a)?;
        let msg = tape.relu(msg);
        let out = tape.add(h, msg)?;
        self.norm.forward(tape, params, out)
    }
}

#[derive(Clone, Debug)]
struct Encoder {
    input: Linear,
    layers: Vec<MpnnLayer>,
    output: Linear,
}

#[derive(Clone, Debug)]
struct Decoder {
    input: Linear,
    layers: Vec<GcnLayer>,
    node_head: Linear,
    edge_mlp: Vec<Linear>,
}

/// Token maps `r_1..r_K` for one graph with their quantized vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiScaleTokens<T> {
    pub sizes: Vec<usize>,
    pub tokens: Vec<Vec<usize>>,
    /// Per scale, the `n_k × C` selected code vectors.
    pub quantized: Vec<Tensor<T>>,
}

impl<T: Scalar> MultiScaleTokens<T> {
    pub fn num_scales(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        *self.sizes.last().expect("at least one scale")
    }

    /// All tokens, coarse to fine.
    pub fn flat(&self) -> Vec<usize> {
        self.tokens.concat()
    }
}

/// Decoder outputs for one graph.
#[derive(Clone, Debug)]
pub struct Reconstruction<T> {
    /// `N × D`.
    pub node_logits: Tensor<T>,
    /// `N² × (F+1)`, pair `(i, j)` at row `i·N + j`.
    pub edge_logits: Tensor<T>,
}

/// Tape handles and statistics from one training forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput<T> {
    pub loss: Var,
    pub recon: Var,
    pub vq: Var,
    pub node_logits: Var,
    pub edge_logits: Var,
    pub tokens: Vec<Vec<usize>>,
    /// Pre-quantization rows `d_k` of every scale, used to reseed dead codes.
    pub latents: Vec<Tensor<T>>,
}

/// Multi-scale VQ graph autoencoder.
#[derive(Clone, Debug)]
pub struct Tokenizer<T> {
    config: TokenizerConfig,
    node_dim: usize,
    edge_dim: usize,
    pub params: ParamStore<T>,
    codebook: ParamId,
    encoder: Encoder,
    decoder: Decoder,
    pub usage: CodeUsage,
}

impl<T: Scalar> Tokenizer<T> {
    pub fn new(config: TokenizerConfig, node_dim: usize, edge_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if node_dim == 0 || edge_dim == 0 {
            return Err(Error::Config("node and edge widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let eps = config.layer_norm_eps;
        let e = &config.encoder;
        let encoder = Encoder {
            input: Linear::new(&mut params, "enc/in", node_dim, e.hidden_dim, &mut rng),
            layers: (0..e.mpnn_layers)
                .map(|l| MpnnLayer::new(&mut params, &format!("enc/mpnn{l}"), e.hidden_dim, edge_dim, eps, &mut rng))
                .collect(),
            output: Linear::new(&mut params, "enc/out", e.hidden_dim, e.latent_dim, &mut rng),
        };
        let codebook = params.add(
            "codebook",
            Tensor::randn(&[config.codebook_size, e.latent_dim], 1.0, &mut rng),
        );
        let d = &config.decoder;
        let mut edge_mlp = Vec::new();
        let mut width = 2 * d.hidden_dim;
        for (l, &h) in d.edge_mlp_hidden.iter().enumerate() {
            edge_mlp.push(Linear::new(&mut params, &format!("dec/edge{l}"), width, h, &mut rng));
            width = h;
        }
        edge_mlp.push(Linear::new(&mut params, "dec/edge_out", width, edge_dim + 1, &mut rng));
        let decoder = Decoder {
            input: Linear::new(&mut params, "dec/in", e.latent_dim, d.hidden_dim, &mut rng),
            layers: (0..d.gcn_layers)
                .map(|l| GcnLayer::new(&mut params, &format!("dec/gcn{l}"), d.hidden_dim, eps, &mut rng))
                .collect(),
            node_head: Linear::new(&mut params, "dec/node", d.hidden_dim, node_dim, &mut rng),
            edge_mlp,
        };
        let usage = CodeUsage::new(config.codebook_size);
        Ok(Self {
            config,
            node_dim,
            edge_dim,
            params,
            codebook,
            encoder,
            decoder,
            usage,
        })
    }

    pub fn config(&self) -> &TokenizerConfig {
        &self.config
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.config.encoder.latent_dim
    }

    pub fn codebook_size(&self) -> usize {
        self.config.codebook_size
    }

    pub fn codebook_id(&self) -> ParamId {
        self.codebook
    }

    /// The `V × C` code vectors.
    pub fn codebook(&self) -> &Tensor<T> {
        self.params.get(self.codebook)
    }

    fn check_graph(&self, g: &Graph) -> Result<()> {
        if g.node_dim() != self.node_dim || g.edge_dim() != self.edge_dim {
            return Err(Error::InvalidArgument(format!(
                "graph has D={}, F={} but the tokenizer expects D={}, F={}",
                g.node_dim(),
                g.edge_dim(),
                self.node_dim,
                self.edge_dim
            )));
        }
        Ok(())
    }

    /// Encoder on the tape: `N × C` latents.
    pub fn encode_on(&self, tape: &mut Tape<T>, params: &ParamStore<T>, inputs: &GraphInputs<T>) -> Result<Var> {
        let x = tape.constant(inputs.nodes.clone());
        let adj = tape.constant(inputs.adjacency.clone());
        let es = tape.constant(inputs.edge_sums.clone());
        let mut h = self.encoder.input.forward(tape, params, x)?;
        for layer in &self.encoder.layers {
            h = mpnn_layer(tape, params, layer, h, adj, es, None)?;
        }
        self.encoder.output.forward(tape, params, h)
    }

    /// Decoder on the tape: node logits `N × D` and symmetric edge logits `N² × (F+1)`.
    pub fn decode_on(&self, tape: &mut Tape<T>, params: &ParamStore<T>, q: Var) -> Result<(Var, Var)> {
        let n = tape.shape(q).0;
        let mut h = self.decoder.input.forward(tape, params, q)?;
        for layer in &self.decoder.layers {
            h = layer.forward(tape, params, h)?;
        }
        let nodes = self.decoder.node_head.forward(tape, params, h)?;
        let left: Vec<usize> = (0..n * n).map(|p| p / n).collect();
        let right: Vec<usize> = (0..n * n).map(|p| p % n).collect();
        let hi = tape.gather_rows(h, &left)?;
        let hj = tape.gather_rows(h, &right)?;
        let mut e = tape.concat_cols(&[hi, hj])?;
        let last = self.decoder.edge_mlp.len() - 1;
        for (l, lin) in self.decoder.edge_mlp.iter().enumerate() {
            e = lin.forward(tape, params, e)?;
            if l < last {
                e = tape.relu(e);
            }
        }
        let mirror: Vec<usize> = (0..n * n).map(|p| (p % n) * n + p / n).collect();
        let et = tape.gather_rows(e, &mirror)?;
        let sum = tape.add(e, et)?;
        Ok((nodes, tape.scale(sum, T::of(0.5))))
    }

    /// Residual (or independent) multi-scale quantization of latents `f` on
    /// the tape. Returns the decoder input with straight-through gradients,
    /// the mean VQ loss over scales, tokens, and the pre-quantization rows.
    #[allow(clippy::type_complexity)]
    fn quantize_on(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        f: Var,
        sizes: &[usize],
        frozen: Option<&[Vec<usize>]>,
    ) -> Result<(Var, Var, Vec<Vec<usize>>, Vec<Tensor<T>>)> {
        let n = tape.shape(f).0;
        check_sizes(sizes, n)?;
        if let Some(fr) = frozen {
            if fr.len() != sizes.len() || fr.iter().zip(sizes).any(|(t, &s)| t.len() != s) {
                return Err(Error::InvalidArgument("frozen tokens do not match the schedule".into()));
            }
        }
        let cb = tape.param(params, self.codebook);
        let mut residual = f;
        let mut acc: Option<Var> = None;
        let mut vq_total: Option<Var> = None;
        let mut tokens = Vec::with_capacity(sizes.len());
        let mut latents = Vec::with_capacity(sizes.len());
        for (k, &nk) in sizes.iter().enumerate() {
            let src = if self.config.independent_scales { f } else { residual };
            let d = if nk == n {
                src
            } else {
                tape.interpolate(src, nk, self.config.downsample, 0)?
            };
            let tok = match frozen {
                Some(fr) => fr[k].clone(),
                None => quantize(tape.value(d), tape.value(cb))?,
            };
            if tok.iter().any(|&t| t >= self.config.codebook_size) {
                return Err(Error::InvalidArgument("token outside the codebook".into()));
            }
            let q = tape.gather_rows(cb, &tok)?;
            let l = vq_loss(tape, d, q, self.config.commitment)?;
            vq_total = Some(match vq_total {
                Some(t) => tape.add(t, l)?,
                None => l,
            });
            let up = if nk == n {
                q
            } else {
                tape.interpolate(q, n, self.config.upsample, 0)?
            };
            if self.config.independent_scales {
                acc = Some(up);
            } else {
                let up_sg = tape.detach(up);
                residual = tape.sub(residual, up_sg)?;
                acc = Some(match acc {
                    Some(a) => tape.add(a, up)?,
                    None => up,
                });
            }
            latents.push(tape.value(d).clone());
            tokens.push(tok);
        }
        let fhat = acc.expect("at least one scale");
        let diff = tape.sub(fhat, f)?;
        let diff = tape.detach(diff);
        let st = tape.add(f, diff)?;
        let vq = tape.scale(vq_total.expect("at least one scale"), T::of(1.0 / sizes.len() as f64));
        Ok((st, vq, tokens, latents))
    }

    /// Full training objective for one graph: reconstruction + `gamma`·VQ.
    /// With `frozen`, code assignments are taken from it instead of argmin.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        params: &ParamStore<T>,
        inputs: &GraphInputs<T>,
        sizes: &[usize],
        frozen: Option<&[Vec<usize>]>,
    ) -> Result<ForwardOutput<T>> {
        let f = self.encode_on(tape, params, inputs)?;
        let (dec_in, vq, tokens, latents) = self.quantize_on(tape, params, f, sizes, frozen)?;
        let (node_logits, edge_logits) = self.decode_on(tape, params, dec_in)?;
        let recon = reconstruction_loss(
            tape,
            node_logits,
            edge_logits,
            inputs,
            self.config.node_weight,
            self.config.edge_weight,
        )?;
        let weighted = tape.scale(vq, T::of(self.config.gamma));
        let loss = tape.add(recon, weighted)?;
        Ok(ForwardOutput {
            loss,
            recon,
            vq,
            node_logits,
            edge_logits,
            tokens,
            latents,
        })
    }

    /// `N × C` encoder latents.
    pub fn encode(&self, g: &Graph) -> Result<Tensor<T>> {
        self.check_graph(g)?;
        let inputs = GraphInputs::new(g)?;
        let mut tape = Tape::new();
        let f = self.encode_on(&mut tape, &self.params, &inputs)?;
        Ok(tape.value(f).clone())
    }

    /// Decode `N × C` latents.
    pub fn decode(&self, q: &Tensor<T>) -> Result<Reconstruction<T>> {
        if q.cols() != self.latent_dim() || q.rows() == 0 {
            return Err(Error::shape(
                "decode",
                format!("latents {:?}, expected N × {}", q.shape(), self.latent_dim()),
            ));
        }
        let mut tape = Tape::new();
        let qv = tape.constant(q.clone());
        let (nodes, edges) = self.decode_on(&mut tape, &self.params, qv)?;
        Ok(Reconstruction {
            node_logits: tape.value(nodes).clone(),
            edge_logits: tape.value(edges).clone(),
        })
    }

    /// Multi-scale token maps of latents `f` for the given scale sizes.
    pub fn tokenize_latents(&self, f: &Tensor<T>, sizes: &[usize]) -> Result<MultiScaleTokens<T>> {
        let n = f.rows();
        check_sizes(sizes, n)?;
        let cb = self.codebook();
        let mut residual = f.clone();
        let mut tokens = Vec::with_capacity(sizes.len());
        let mut quantized = Vec::with_capacity(sizes.len());
        for &nk in sizes {
            let src = if self.config.independent_scales { f } else { &residual };
            let d = super::quantize::resample(src, nk, self.config.downsample, true)?;
            let tok = quantize(&d, cb)?;
            let q = gather(cb, &tok);
            if !self.config.independent_scales {
                let up = super::quantize::resample(&q, n, self.config.upsample, false)?;
                for (r, u) in residual.data_mut().iter_mut().zip(up.data()) {
                    *r -= *u;
                }
            }
            tokens.push(tok);
            quantized.push(q);
        }
        Ok(MultiScaleTokens {
            sizes: sizes.to_vec(),
            tokens,
            quantized,
        })
    }

    pub fn tokenize(&self, g: &Graph, sizes: &[usize]) -> Result<MultiScaleTokens<T>> {
        let f = self.encode(g)?;
        self.tokenize_latents(&f, sizes)
    }

    /// Latents the decoder sees for the given token maps: the sum of the
    /// upsampled code vectors (or the last scale alone for independent scales).
    pub fn reconstruct_latents(&self, tokens: &[Vec<usize>]) -> Result<Tensor<T>> {
        let n = tokens.last().map(Vec::len).ok_or_else(|| Error::InvalidArgument("no token maps".into()))?;
        let sizes: Vec<usize> = tokens.iter().map(Vec::len).collect();
        check_sizes(&sizes, n)?;
        if self.config.independent_scales {
            let cb = self.codebook();
            if tokens[tokens.len() - 1].iter().any(|&t| t >= cb.rows()) {
                return Err(Error::InvalidArgument("token outside the codebook".into()));
            }
            return Ok(gather(cb, &tokens[tokens.len() - 1]));
        }
        self.reconstruct_latents_prefix(tokens, n)
    }

    /// Sum of the code vectors of the given (leading) scales, each upsampled to `n` rows.
    pub fn reconstruct_latents_prefix(&self, tokens: &[Vec<usize>], n: usize) -> Result<Tensor<T>> {
        let cb = self.codebook();
        if tokens.iter().flatten().any(|&t| t >= cb.rows()) {
            return Err(Error::InvalidArgument("token outside the codebook".into()));
        }
        let mut acc = Tensor::zeros(&[n, cb.cols()]);
        for tok in tokens {
            let up = super::quantize::resample(&gather(cb, tok), n, self.config.upsample, false)?;
            acc.add_assign(&up);
        }
        Ok(acc)
    }

    /// Decode token maps into a graph by per-node and per-pair argmax.
    pub fn detokenize(&self, tokens: &[Vec<usize>]) -> Result<Graph> {
        let latents = self.reconstruct_latents(tokens)?;
        let rec = self.decode(&latents)?;
        self.graph_from_logits(&rec)
    }

    pub fn graph_from_logits(&self, rec: &Reconstruction<T>) -> Result<Graph> {
        let n = rec.node_logits.rows();
        let (d, f) = (self.node_dim, self.edge_dim);
        let mut nodes = vec![0.0; n * d];
        for i in 0..n {
            let row: Vec<f64> = rec.node_logits.row(i).iter().map(|v| v.f64()).collect();
            if d == 1 {
                nodes[i] = 1.0;
            } else {
                nodes[i * d + crate::graph::argmax(&row)] = 1.0;
            }
        }
        let mut edges = vec![0.0; n * n * f];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let row: Vec<f64> = rec.edge_logits.row(i * n + j).iter().map(|v| v.f64()).collect();
                let c = crate::graph::argmax(&row);
                if c > 0 {
                    edges[(i * n + j) * f + c - 1] = 1.0;
                }
            }
        }
        Graph::new(n, d, f, nodes, edges, true, true)
    }

    /// Overwrite the listed codes with the given vectors.
    pub fn reseed_codes(&mut self, codes: &[usize], vectors: &[Vec<T>]) {
        let cb = self.params.get_mut(self.codebook);
        for (&k, v) in codes.iter().zip(vectors) {
            cb.row_mut(k).copy_from_slice(v);
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new();
        ck.set_meta("kind", "tokenizer");
        ck.set_meta("node_dim", self.node_dim);
        ck.set_meta("edge_dim", self.edge_dim);
        ck.set_meta(
            "config",
            serde_json::to_string(&self.config).expect("config serialises"),
        );
        ck.push_store("tokenizer", &self.params);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        if ck.meta("kind")? != "tokenizer" {
            return Err(Error::Checkpoint("not a tokenizer checkpoint".into()));
        }
        let config: TokenizerConfig = serde_json::from_str(ck.meta("config")?)?;
        let mut tok = Self::new(config, ck.meta_parse("node_dim")?, ck.meta_parse("edge_dim")?, 0)?;
        ck.load_store("tokenizer", &mut tok.params)?;
        Ok(tok)
    }
}

fn gather<T: Scalar>(cb: &Tensor<T>, tokens: &[usize]) -> Tensor<T> {
    Tensor::from_fn(tokens.len(), cb.cols(), |i, c| cb.at(tokens[i], c))
}

fn check_sizes(sizes: &[usize], n: usize) -> Result<()> {
    if sizes.is_empty()
        || sizes[0] == 0
        || *sizes.last().expect("non-empty") != n
        || sizes.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::InvalidArgument(format!(
            "scale sizes {sizes:?} are not strictly increasing up to N={n}"
        )));
    }
    Ok(())
}

/// Node cross-entropy averaged over nodes plus edge cross-entropy averaged
/// over the pairs `i < j`, weighted.
pub fn reconstruction_loss<T: Scalar>(
    tape: &mut Tape<T>,
    node_logits: Var,
    edge_logits: Var,
    target: &GraphInputs<T>,
    node_weight: f64,
    edge_weight: f64,
) -> Result<Var> {
    let n = target.n;
    if tape.shape(node_logits).0 != n || tape.shape(edge_logits).0 != n * n {
        return Err(Error::shape(
            "reconstruction_loss",
            format!(
                "logits {:?} / {:?} for {n} nodes",
                tape.shape(node_logits),
                tape.shape(edge_logits)
            ),
        ));
    }
    let w = vec![T::of(node_weight / n as f64); n];
    let node = tape.cross_entropy(node_logits, &target.node_targets, &w)?;
    let pairs: Vec<usize> = (0..n).flat_map(|i| (i + 1..n).map(move |j| i * n + j)).collect();
    if pairs.is_empty() {
        return Ok(node);
    }
    let upper = tape.gather_rows(edge_logits, &pairs)?;
    let w = vec![T::of(edge_weight / pairs.len() as f64); pairs.len()];
    let edge = tape.cross_entropy(upper, &target.edge_targets, &w)?;
    tape.add(node, edge)
}
