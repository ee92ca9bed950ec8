//! Dual-branch decoder-only transformer predicting the next level of channel 1.
//!
//! The self branch embeds channel-1 tokens; the context branch sums eight
//! channel-specific token embeddings with one shared positional embedding.
//! Each branch runs its own stack of causal blocks and a final layer norm;
//! the two outputs are concatenated per position and mapped to vocabulary
//! logits by a small fully connected head.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::nn::{self, Block, BlockCache, Init, KvCache, LayerNorm, Layout, Linear, Slot};
use crate::scalar::Scalar;
use crate::signal::{Intent, TokenMatrix, CHANNELS, MAX_LEVEL};

pub const INIT_STD: f64 = 0.02;
pub const CHECKPOINT_KIND: &str = "chatemg-model";

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub n_embed: usize,
    pub n_blocks_per_branch: usize,
    pub n_heads: usize,
    pub context_len: usize,
    pub fc_layers: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: usize::from(MAX_LEVEL) + 1,
            n_embed: 256,
            n_blocks_per_branch: 12,
            n_heads: 8,
            context_len: 256,
            fc_layers: 3,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// Desk-scale configuration used by tests and the CPU acceptance runs.
    pub fn tiny() -> Self {
        ModelConfig {
            n_embed: 16,
            n_blocks_per_branch: 1,
            n_heads: 2,
            dropout: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must be at least 2"));
        }
        if self.vocab_size > usize::from(u16::MAX) + 1 {
            return Err(Error::invalid("vocab_size must fit 16-bit tokens"));
        }
        if self.n_embed == 0 || self.n_heads == 0 || self.n_embed % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "n_embed ({}) must be a positive multiple of n_heads ({})",
                self.n_embed, self.n_heads
            )));
        }
        if self.context_len < 2 {
            return Err(Error::invalid("context_len must be at least 2"));
        }
        if self.fc_layers == 0 {
            return Err(Error::invalid("fc_layers must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("vocab_size", self.vocab_size.to_string()),
            ("n_embed", self.n_embed.to_string()),
            ("n_blocks_per_branch", self.n_blocks_per_branch.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("context_len", self.context_len.to_string()),
            ("fc_layers", self.fc_layers.to_string()),
            ("dropout", self.dropout.to_string()),
        ]
    }
}

#[derive(Clone, Debug)]
struct Arch {
    layout: Layout,
    self_tok: Slot,
    self_pos: Slot,
    ctx_tok: [Slot; CHANNELS],
    ctx_pos: Slot,
    self_blocks: Vec<Block>,
    ctx_blocks: Vec<Block>,
    self_ln: LayerNorm,
    ctx_ln: LayerNorm,
    head: Vec<Linear>,
}

impl Arch {
    fn new(c: &ModelConfig) -> Self {
        let d = c.n_embed;
        let mut l = Layout::default();
        let self_tok = l.add("self.tok_embed", &[c.vocab_size, d], Init::Normal);
        let self_pos = l.add("self.pos_embed", &[c.context_len, d], Init::Normal);
        let ctx_tok = std::array::from_fn(|ch| l.add(format!("context.tok_embed.{ch}"), &[c.vocab_size, d], Init::Normal));
        let ctx_pos = l.add("context.pos_embed", &[c.context_len, d], Init::Normal);
        let self_blocks = (0..c.n_blocks_per_branch)
            .map(|i| Block::new(&mut l, &format!("self.block.{i}"), d, c.n_heads, true))
            .collect();
        let ctx_blocks = (0..c.n_blocks_per_branch)
            .map(|i| Block::new(&mut l, &format!("context.block.{i}"), d, c.n_heads, true))
            .collect();
        let self_ln = LayerNorm::new(&mut l, "self.ln_f", d);
        let ctx_ln = LayerNorm::new(&mut l, "context.ln_f", d);
        let head = (0..c.fc_layers)
            .map(|i| {
                let out = if i + 1 == c.fc_layers { c.vocab_size } else { 2 * d };
                Linear::new(&mut l, &format!("head.fc{i}"), 2 * d, out)
            })
            .collect();
        Arch {
            layout: l,
            self_tok,
            self_pos,
            ctx_tok,
            ctx_pos,
            self_blocks,
            ctx_blocks,
            self_ln,
            ctx_ln,
            head,
        }
    }
}

/// Which branches feed the head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    /// When false the context branch contributes zeros (ablation).
    pub context: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions { context: true }
    }
}

/// Activations kept for [`ChatEmg::backward`].
pub struct ForwardCache<S> {
    n: usize,
    tokens: Vec<[u16; CHANNELS]>,
    opts: ForwardOptions,
    self_mask: Option<Vec<S>>,
    ctx_mask: Option<Vec<S>>,
    self_blocks: Vec<BlockCache<S>>,
    ctx_blocks: Vec<BlockCache<S>>,
    self_xhat: Vec<S>,
    self_rstd: Vec<S>,
    ctx_xhat: Vec<S>,
    ctx_rstd: Vec<S>,
    head_in: Vec<Vec<S>>,
    head_pre: Vec<Vec<S>>,
}

/// Per-sequence incremental decoding state (keys/values of every block).
#[derive(Clone, Debug)]
pub struct DecodeState<S> {
    self_kv: Vec<KvCache<S>>,
    ctx_kv: Vec<KvCache<S>>,
    pos: usize,
    last: Vec<S>,
}

impl<S> DecodeState<S> {
    pub fn len(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos == 0
    }
}

/// Model parameters together with the configuration that shapes them.
#[derive(Clone, Debug)]
pub struct ChatEmg<S> {
    config: ModelConfig,
    arch: Arch,
    params: Vec<S>,
}

impl<S: Scalar> ChatEmg<S> {
    /// Weights ~ N(0, 0.02²), biases zero; deterministic in `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let arch = Arch::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch.layout.initialize(INIT_STD, &mut rng);
        Ok(ChatEmg { config, arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.arch.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Same architecture, parameters converted to another scalar type.
    pub fn cast<T: Scalar>(&self) -> ChatEmg<T> {
        ChatEmg {
            config: self.config.clone(),
            arch: self.arch.clone(),
            params: self.params.iter().map(|&v| T::of(v.as_f64())).collect(),
        }
    }

    fn check_input(&self, input: &TokenMatrix) -> Result<Vec<[u16; CHANNELS]>> {
        let n = input.rows();
        if n == 0 {
            return Err(Error::invalid("forward needs at least one row"));
        }
        if n > self.config.context_len {
            return Err(Error::ContextOverflow {
                len: n,
                max: self.config.context_len,
            });
        }
        if let Some(&t) = input.as_flat().iter().find(|&&t| usize::from(t) >= self.config.vocab_size) {
            return Err(Error::invalid(format!(
                "token {t} outside vocabulary of size {}",
                self.config.vocab_size
            )));
        }
        Ok((0..n).map(|r| *input.row(r)).collect())
    }

    fn embed_self(&self, tokens: &[[u16; CHANNELS]], pos0: usize) -> Vec<S> {
        let d = self.config.n_embed;
        let tok = self.arch.self_tok.of(&self.params);
        let pos = self.arch.self_pos.of(&self.params);
        let mut h = vec![S::zero(); tokens.len() * d];
        for (i, row) in tokens.iter().enumerate() {
            let t = usize::from(row[0]);
            let p = pos0 + i;
            for j in 0..d {
                h[i * d + j] = tok[t * d + j] + pos[p * d + j];
            }
        }
        h
    }

    fn embed_ctx(&self, tokens: &[[u16; CHANNELS]], pos0: usize) -> Vec<S> {
        let d = self.config.n_embed;
        let pos = self.arch.ctx_pos.of(&self.params);
        let mut h = vec![S::zero(); tokens.len() * d];
        for (i, row) in tokens.iter().enumerate() {
            let p = pos0 + i;
            let dst = &mut h[i * d..(i + 1) * d];
            dst.copy_from_slice(&pos[p * d..(p + 1) * d]);
            for (ch, &t) in row.iter().enumerate() {
                let tab = self.arch.ctx_tok[ch].of(&self.params);
                let t = usize::from(t);
                for j in 0..d {
                    dst[j] += tab[t * d + j];
                }
            }
        }
        h
    }

    /// Logits (`rows × vocab_size`, row-major) without dropout.
    pub fn forward(&self, input: &TokenMatrix) -> Result<Vec<S>> {
        self.forward_with(input, ForwardOptions::default())
    }

    pub fn forward_with(&self, input: &TokenMatrix, opts: ForwardOptions) -> Result<Vec<S>> {
        Ok(self.forward_train::<ChaCha8Rng>(input, opts, None)?.0)
    }

    /// Forward pass keeping activations; `dropout_rng` enables dropout at `config.dropout`.
    pub fn forward_train<R: Rng>(
        &self,
        input: &TokenMatrix,
        opts: ForwardOptions,
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(Vec<S>, ForwardCache<S>)> {
        let tokens = self.check_input(input)?;
        let n = tokens.len();
        let d = self.config.n_embed;
        let rate = self.config.dropout;
        let use_dropout = dropout_rng.is_some() && rate > 0.0;

        let mut run_branch = |mut h: Vec<S>, blocks: &[Block], ln: &LayerNorm| {
            let mask = if use_dropout {
                let m = nn::dropout_mask(n * d, rate, dropout_rng.as_deref_mut().expect("rng"));
                h.iter_mut().zip(&m).for_each(|(v, &k)| *v *= k);
                Some(m)
            } else {
                None
            };
            let mut caches = Vec::with_capacity(blocks.len());
            for b in blocks {
                let dr = if use_dropout {
                    dropout_rng.as_deref_mut().map(|r| (rate, r))
                } else {
                    None
                };
                let (y, c) = b.forward(&self.params, &h, n, dr);
                caches.push(c);
                h = y;
            }
            let mut out = vec![S::zero(); n * d];
            let mut xhat = vec![S::zero(); n * d];
            let mut rstd = vec![S::zero(); n];
            ln.forward(&self.params, &h, n, &mut out, &mut xhat, &mut rstd);
            (out, mask, caches, xhat, rstd)
        };

        let (self_out, self_mask, self_blocks, self_xhat, self_rstd) =
            run_branch(self.embed_self(&tokens, 0), &self.arch.self_blocks, &self.arch.self_ln);
        let (ctx_out, ctx_mask, ctx_blocks, ctx_xhat, ctx_rstd) = if opts.context {
            run_branch(self.embed_ctx(&tokens, 0), &self.arch.ctx_blocks, &self.arch.ctx_ln)
        } else {
            (vec![S::zero(); n * d], None, Vec::new(), Vec::new(), Vec::new())
        };

        let mut fused = vec![S::zero(); n * 2 * d];
        for i in 0..n {
            fused[i * 2 * d..i * 2 * d + d].copy_from_slice(&self_out[i * d..(i + 1) * d]);
            fused[i * 2 * d + d..(i + 1) * 2 * d].copy_from_slice(&ctx_out[i * d..(i + 1) * d]);
        }
        let (logits, head_in, head_pre) = self.run_head(fused, n);
        let cache = ForwardCache {
            n,
            tokens,
            opts,
            self_mask,
            ctx_mask,
            self_blocks,
            ctx_blocks,
            self_xhat,
            self_rstd,
            ctx_xhat,
            ctx_rstd,
            head_in,
            head_pre,
        };
        Ok((logits, cache))
    }

    fn run_head(&self, fused: Vec<S>, n: usize) -> (Vec<S>, Vec<Vec<S>>, Vec<Vec<S>>) {
        let mut head_in = Vec::with_capacity(self.arch.head.len());
        let mut head_pre = Vec::with_capacity(self.arch.head.len());
        let mut z = fused;
        for (i, layer) in self.arch.head.iter().enumerate() {
            let mut u = vec![S::zero(); n * layer.out];
            layer.forward(&self.params, &z, n, &mut u);
            head_in.push(std::mem::take(&mut z));
            if i + 1 < self.arch.head.len() {
                z = u.iter().map(|&v| nn::gelu(v)).collect();
                head_pre.push(u);
            } else {
                z = u;
            }
        }
        (z, head_in, head_pre)
    }

    /// Accumulates `∂loss/∂params` into `grads` given `∂loss/∂logits`.
    pub fn backward(&self, cache: &ForwardCache<S>, dlogits: &[S], grads: &mut [S]) {
        assert_eq!(grads.len(), self.params.len());
        let n = cache.n;
        let d = self.config.n_embed;
        let p = &self.params;
        let layers = &self.arch.head;
        let mut dz = dlogits.to_vec();
        for i in (0..layers.len()).rev() {
            let layer = &layers[i];
            if i + 1 < layers.len() {
                for (v, &pre) in dz.iter_mut().zip(&cache.head_pre[i]) {
                    *v *= nn::gelu_grad(pre);
                }
            }
            let mut dx = vec![S::zero(); n * layer.inp];
            layer.backward(p, grads, &cache.head_in[i], n, &dz, Some(&mut dx));
            dz = dx;
        }
        let mut dself = vec![S::zero(); n * d];
        let mut dctx = vec![S::zero(); n * d];
        for i in 0..n {
            dself[i * d..(i + 1) * d].copy_from_slice(&dz[i * 2 * d..i * 2 * d + d]);
            dctx[i * d..(i + 1) * d].copy_from_slice(&dz[i * 2 * d + d..(i + 1) * 2 * d]);
        }

        let branch_back = |grads: &mut [S],
                           dout: &[S],
                           ln: &LayerNorm,
                           xhat: &[S],
                           rstd: &[S],
                           blocks: &[Block],
                           caches: &[BlockCache<S>],
                           mask: &Option<Vec<S>>| {
            let mut dh = vec![S::zero(); n * d];
            ln.backward(p, grads, n, xhat, rstd, dout, &mut dh);
            for (b, c) in blocks.iter().zip(caches).rev() {
                dh = b.backward(p, grads, c, n, &dh);
            }
            if let Some(m) = mask {
                dh.iter_mut().zip(m).for_each(|(v, &k)| *v *= k);
            }
            dh
        };

        let demb = branch_back(
            grads,
            &dself,
            &self.arch.self_ln,
            &cache.self_xhat,
            &cache.self_rstd,
            &self.arch.self_blocks,
            &cache.self_blocks,
            &cache.self_mask,
        );
        for (i, row) in cache.tokens.iter().enumerate() {
            let t = usize::from(row[0]);
            let g = self.arch.self_tok.of_mut(grads);
            for j in 0..d {
                g[t * d + j] += demb[i * d + j];
            }
            let g = self.arch.self_pos.of_mut(grads);
            for j in 0..d {
                g[i * d + j] += demb[i * d + j];
            }
        }

        if cache.opts.context {
            let demb = branch_back(
                grads,
                &dctx,
                &self.arch.ctx_ln,
                &cache.ctx_xhat,
                &cache.ctx_rstd,
                &self.arch.ctx_blocks,
                &cache.ctx_blocks,
                &cache.ctx_mask,
            );
            for (i, row) in cache.tokens.iter().enumerate() {
                for (ch, &t) in row.iter().enumerate() {
                    let t = usize::from(t);
                    let g = self.arch.ctx_tok[ch].of_mut(grads);
                    for j in 0..d {
                        g[t * d + j] += demb[i * d + j];
                    }
                }
                let g = self.arch.ctx_pos.of_mut(grads);
                for j in 0..d {
                    g[i * d + j] += demb[i * d + j];
                }
            }
        }
    }

    /// Mean next-value cross-entropy of one example; gradients are added into `grads`.
    pub fn loss_and_grad<R: Rng>(
        &self,
        input: &TokenMatrix,
        targets: &[u16],
        grads: &mut [S],
        dropout_rng: Option<&mut R>,
    ) -> Result<S> {
        let (logits, cache) = self.forward_train(input, ForwardOptions::default(), dropout_rng)?;
        let t = self.check_targets(targets, cache.n)?;
        let (loss, dlogits) = nn::cross_entropy(&logits, self.config.vocab_size, &t);
        self.backward(&cache, &dlogits, grads);
        Ok(loss)
    }

    /// Loss without gradients or dropout.
    pub fn eval_loss(&self, input: &TokenMatrix, targets: &[u16]) -> Result<S> {
        let logits = self.forward(input)?;
        loss(&logits, self.config.vocab_size, targets)
    }

    fn check_targets(&self, targets: &[u16], n: usize) -> Result<Vec<usize>> {
        if targets.len() != n {
            return Err(Error::invalid(format!("{} targets for {n} rows", targets.len())));
        }
        targets
            .iter()
            .map(|&t| {
                let t = usize::from(t);
                if t < self.config.vocab_size {
                    Ok(t)
                } else {
                    Err(Error::invalid(format!("target {t} outside vocabulary")))
                }
            })
            .collect()
    }

    pub fn begin_decode(&self) -> DecodeState<S> {
        DecodeState {
            self_kv: vec![KvCache::default(); self.arch.self_blocks.len()],
            ctx_kv: vec![KvCache::default(); self.arch.ctx_blocks.len()],
            pos: 0,
            last: Vec::new(),
        }
    }

    /// Appends rows to a decoding state.
    pub fn decode_push(&self, state: &mut DecodeState<S>, rows: &[[u16; CHANNELS]]) -> Result<()> {
        let n = rows.len();
        if n == 0 {
            return Ok(());
        }
        if state.pos + n > self.config.context_len {
            return Err(Error::ContextOverflow {
                len: state.pos + n,
                max: self.config.context_len,
            });
        }
        if rows.iter().flatten().any(|&t| usize::from(t) >= self.config.vocab_size) {
            return Err(Error::invalid("token outside vocabulary"));
        }
        let d = self.config.n_embed;
        let p = &self.params;
        let mut hs = self.embed_self(rows, state.pos);
        for (b, kv) in self.arch.self_blocks.iter().zip(state.self_kv.iter_mut()) {
            hs = b.forward_cached(p, &hs, n, kv);
        }
        let mut hc = self.embed_ctx(rows, state.pos);
        for (b, kv) in self.arch.ctx_blocks.iter().zip(state.ctx_kv.iter_mut()) {
            hc = b.forward_cached(p, &hc, n, kv);
        }
        let mut last = vec![S::zero(); 2 * d];
        self.arch.self_ln.forward_infer(p, &hs[(n - 1) * d..], 1, &mut last[..d]);
        self.arch.ctx_ln.forward_infer(p, &hc[(n - 1) * d..], 1, &mut last[d..]);
        state.last = last;
        state.pos += n;
        Ok(())
    }

    /// Logits for the value following the last pushed row.
    pub fn decode_logits(&self, state: &DecodeState<S>) -> Result<Vec<S>> {
        if state.pos == 0 {
            return Err(Error::invalid("decode state is empty"));
        }
        Ok(self.run_head(state.last.clone(), 1).0)
    }

    pub fn to_container(&self, intent: Intent) -> Container {
        let mut c = Container::new(CHECKPOINT_KIND);
        for (k, v) in self.config.to_pairs() {
            c.set(k, v);
        }
        c.set("intent", intent);
        for t in self.arch.layout.tensors() {
            c.push(
                t.name.clone(),
                &t.shape,
                t.slot.of(&self.params).iter().map(|v| v.as_f64() as f32).collect(),
            );
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<(Self, Intent)> {
        c.expect_kind(CHECKPOINT_KIND)?;
        let config = ModelConfig {
            vocab_size: c.get_parsed("vocab_size")?,
            n_embed: c.get_parsed("n_embed")?,
            n_blocks_per_branch: c.get_parsed("n_blocks_per_branch")?,
            n_heads: c.get_parsed("n_heads")?,
            context_len: c.get_parsed("context_len")?,
            fc_layers: c.get_parsed("fc_layers")?,
            dropout: c.get_parsed("dropout")?,
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let intent: Intent = c.get("intent")?.parse()?;
        let arch = Arch::new(&config);
        let mut params = vec![S::zero(); arch.layout.len()];
        for t in arch.layout.tensors() {
            let stored = c.tensor(&t.name)?;
            if stored.shape != t.shape {
                return Err(Error::Format(format!(
                    "tensor {} has shape {:?}, config implies {:?}",
                    t.name, stored.shape, t.shape
                )));
            }
            for (dst, &v) in t.slot.of_mut(&mut params).iter_mut().zip(&stored.data) {
                *dst = S::of(f64::from(v));
            }
        }
        Ok((ChatEmg { config, arch, params }, intent))
    }

    pub fn save(&self, path: &Path, intent: Intent) -> Result<()> {
        self.to_container(intent).save(path)
    }

    pub fn load(path: &Path) -> Result<(Self, Intent)> {
        Self::from_container(&Container::load(path)?)
    }

    /// Parameter values grouped by tensor name.
    pub fn named_params(&self) -> BTreeMap<String, &[S]> {
        self.arch
            .layout
            .tensors()
            .iter()
            .map(|t| (t.name.clone(), t.slot.of(&self.params)))
            .collect()
    }
}

/// Mean over positions of `−log softmax(logits)[target]`.
pub fn loss<S: Scalar>(logits: &[S], vocab: usize, targets: &[u16]) -> Result<S> {
    if vocab == 0 || logits.len() % vocab != 0 {
        return Err(Error::invalid("logits length is not a multiple of the vocabulary"));
    }
    let n = logits.len() / vocab;
    if targets.len() != n || n == 0 {
        return Err(Error::invalid(format!("{} targets for {n} logit rows", targets.len())));
    }
    let t: Vec<usize> = targets.iter().map(|&t| usize::from(t)).collect();
    if t.iter().any(|&x| x >= vocab) {
        return Err(Error::invalid("target outside vocabulary"));
    }
    Ok(nn::cross_entropy(logits, vocab, &t).0)
}

/// The three per-intent generative models. All share one configuration.
#[derive(Clone, Debug)]
pub struct IntentModelSet<S> {
    models: BTreeMap<Intent, ChatEmg<S>>,
}

impl<S: Scalar> IntentModelSet<S> {
    pub fn new(models: BTreeMap<Intent, ChatEmg<S>>) -> Result<Self> {
        for i in Intent::ALL {
            if !models.contains_key(&i) {
                return Err(Error::invalid(format!("model set lacks the {i} model")));
            }
        }
        let first = models[&Intent::Open].config();
        if models.values().any(|m| m.config() != first) {
            return Err(Error::invalid("intent models must share one configuration"));
        }
        Ok(IntentModelSet { models })
    }

    pub fn get(&self, intent: Intent) -> &ChatEmg<S> {
        &self.models[&intent]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Intent, &ChatEmg<S>)> {
        self.models.iter().map(|(&i, m)| (i, m))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Writes `<dir>/<intent>.ckpt` for each intent.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        for (i, m) in self.iter() {
            m.save(&dir.join(format!("{i}.ckpt")), i)?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut models = BTreeMap::new();
        for i in Intent::ALL {
            let path = dir.join(format!("{i}.ckpt"));
            if !path.exists() {
                return Err(Error::invalid(format!("missing checkpoint {}", path.display())));
            }
            let (m, stored) = ChatEmg::load(&path)?;
            if stored != i {
                return Err(Error::Format(format!("{} holds a {stored} model", path.display())));
            }
            models.insert(i, m);
        }
        IntentModelSet::new(models)
    }
}
