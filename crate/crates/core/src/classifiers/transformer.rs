//! Attention classifier: per-frame linear embedding plus learned positions,
//! one bidirectional multi-head block, mean pooling over time and an MLP.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::nn::{self, Block, BlockCache, LayerNorm, Layout, Linear};
use crate::optim::{clip_global_norm, Adam};
use crate::scalar::Scalar;
use crate::signal::{Intent, CHANNELS};

use super::{argmax, N_CLASSES};

const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerClfConfig {
    pub n_embed: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    /// Dense layers after pooling, the last one producing the class logits.
    pub mlp_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub fine_tune_epochs: usize,
    pub fine_tune_lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TransformerClfConfig {
    fn default() -> Self {
        TransformerClfConfig {
            n_embed: 64,
            n_heads: 4,
            n_blocks: 1,
            mlp_layers: 3,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            fine_tune_epochs: 10,
            fine_tune_lr: 5e-4,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl TransformerClfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_embed == 0 || self.n_heads == 0 || self.n_embed % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "classifier n_embed {} must be a positive multiple of n_heads {}",
                self.n_embed, self.n_heads
            )));
        }
        if self.n_blocks == 0 || self.mlp_layers == 0 || self.batch_size == 0 {
            return Err(Error::invalid("classifier blocks, mlp layers and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.fine_tune_lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::invalid("classifier learning rates and clip norm must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Arch {
    layout: Layout,
    embed: Linear,
    pos: nn::Slot,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
    mlp: Vec<Linear>,
}

impl Arch {
    fn new(cfg: &TransformerClfConfig, seq_len: usize) -> Self {
        let d = cfg.n_embed;
        let mut layout = Layout::default();
        let embed = Linear::new(&mut layout, "embed", CHANNELS, d);
        let pos = layout.add("pos_embed", &[seq_len, d], nn::Init::Normal);
        let blocks = (0..cfg.n_blocks)
            .map(|i| Block::new(&mut layout, &format!("block.{i}"), d, cfg.n_heads, false))
            .collect();
        let ln_f = LayerNorm::new(&mut layout, "ln_f", d);
        let mlp = (0..cfg.mlp_layers)
            .map(|i| {
                let out = if i + 1 == cfg.mlp_layers { N_CLASSES } else { d };
                Linear::new(&mut layout, &format!("mlp.fc{i}"), d, out)
            })
            .collect();
        Arch {
            layout,
            embed,
            pos,
            blocks,
            ln_f,
            mlp,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerClassifier<S> {
    config: TransformerClfConfig,
    seq_len: usize,
    arch: Arch,
    params: Vec<S>,
}

struct Cache<S> {
    blocks: Vec<BlockCache<S>>,
    xhat: Vec<S>,
    rstd: Vec<S>,
    mlp_in: Vec<Vec<S>>,
    mlp_pre: Vec<Vec<S>>,
}

impl<S: Scalar> TransformerClassifier<S> {
    /// Fresh weights for windows of `seq_len` frames.
    pub fn init(config: &TransformerClfConfig, seq_len: usize) -> Result<Self> {
        config.validate()?;
        if seq_len == 0 {
            return Err(Error::invalid("sequence length must be positive"));
        }
        let arch = Arch::new(config, seq_len);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = arch.layout.initialize(INIT_STD, &mut rng);
        Ok(TransformerClassifier {
            config: config.clone(),
            seq_len,
            arch,
            params,
        })
    }

    pub fn fit(config: &TransformerClfConfig, x: &[Vec<S>], y: &[Intent], weights: &[f64]) -> Result<Self> {
        let p = super::check_xy(x, y)?;
        if p % CHANNELS != 0 {
            return Err(Error::invalid(format!("{p} features do not form T×{CHANNELS} windows")));
        }
        let mut m = Self::init(config, p / CHANNELS)?;
        m.train(x, y, weights, config.epochs, config.learning_rate, 0)?;
        Ok(m)
    }

    pub fn config(&self) -> &TransformerClfConfig {
        &self.config
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Tensor names in parameter order.
    pub fn tensor_names(&self) -> Vec<(String, nn::Slot)> {
        self.arch.layout.tensors().iter().map(|t| (t.name.clone(), t.slot)).collect()
    }

    fn check(&self, x: &[S]) -> Result<()> {
        if x.len() != self.seq_len * CHANNELS {
            return Err(Error::invalid(format!(
                "classifier expects {}×{CHANNELS} windows, got {} values",
                self.seq_len,
                x.len()
            )));
        }
        Ok(())
    }

    fn forward(&self, x: &[S]) -> (Vec<S>, Cache<S>) {
        let n = self.seq_len;
        let d = self.config.n_embed;
        let p = &self.params;
        let mut h = vec![S::zero(); n * d];
        self.arch.embed.forward(p, x, n, &mut h);
        for (v, &e) in h.iter_mut().zip(self.arch.pos.of(p)) {
            *v += e;
        }
        let mut blocks = Vec::with_capacity(self.arch.blocks.len());
        for b in &self.arch.blocks {
            let (y, c) = b.forward::<S, ChaCha8Rng>(p, &h, n, None);
            blocks.push(c);
            h = y;
        }
        let mut z = vec![S::zero(); n * d];
        let mut xhat = vec![S::zero(); n * d];
        let mut rstd = vec![S::zero(); n];
        self.arch.ln_f.forward(p, &h, n, &mut z, &mut xhat, &mut rstd);
        let inv_n = S::one() / S::of(n as f64);
        let mut u: Vec<S> = (0..d).map(|j| (0..n).map(|i| z[i * d + j]).sum::<S>() * inv_n).collect();
        let mut mlp_in = Vec::new();
        let mut mlp_pre = Vec::new();
        for (i, layer) in self.arch.mlp.iter().enumerate() {
            let mut out = vec![S::zero(); layer.out];
            layer.forward(p, &u, 1, &mut out);
            mlp_in.push(std::mem::take(&mut u));
            if i + 1 < self.arch.mlp.len() {
                u = out.iter().map(|&v| nn::gelu(v)).collect();
                mlp_pre.push(out);
            } else {
                u = out;
            }
        }
        (
            u,
            Cache {
                blocks,
                xhat,
                rstd,
                mlp_in,
                mlp_pre,
            },
        )
    }

    fn backward(&self, x: &[S], cache: &Cache<S>, dlogits: &[S], grads: &mut [S]) {
        let n = self.seq_len;
        let d = self.config.n_embed;
        let p = &self.params;
        let mut du = dlogits.to_vec();
        for i in (0..self.arch.mlp.len()).rev() {
            let layer = &self.arch.mlp[i];
            if i + 1 < self.arch.mlp.len() {
                for (v, &pre) in du.iter_mut().zip(&cache.mlp_pre[i]) {
                    *v *= nn::gelu_grad(pre);
                }
            }
            let mut dx = vec![S::zero(); layer.inp];
            layer.backward(p, grads, &cache.mlp_in[i], 1, &du, Some(&mut dx));
            du = dx;
        }
        let inv_n = S::one() / S::of(n as f64);
        let mut dz = vec![S::zero(); n * d];
        for i in 0..n {
            for j in 0..d {
                dz[i * d + j] = du[j] * inv_n;
            }
        }
        let mut dh = vec![S::zero(); n * d];
        self.arch.ln_f.backward(p, grads, n, &cache.xhat, &cache.rstd, &dz, &mut dh);
        for (b, c) in self.arch.blocks.iter().zip(&cache.blocks).rev() {
            dh = b.backward(p, grads, c, n, &dh);
        }
        for (g, &v) in self.arch.pos.of_mut(grads).iter_mut().zip(&dh) {
            *g += v;
        }
        self.arch.embed.backward(p, grads, x, n, &dh, None);
    }

    /// Weighted cross-entropy of one example; accumulates `weight · ∂loss/∂params`.
    pub fn loss_and_grad(&self, x: &[S], label: Intent, weight: f64, grads: &mut [S]) -> Result<f64> {
        self.check(x)?;
        let (logits, cache) = self.forward(x);
        let (loss, mut dl) = nn::cross_entropy(&logits, N_CLASSES, &[label.index()]);
        let w = S::of(weight);
        dl.iter_mut().for_each(|v| *v *= w);
        self.backward(x, &cache, &dl, grads);
        Ok(loss.as_f64() * weight)
    }

    /// Mini-batch Adam over `epochs` passes. `stream` separates the shuffling
    /// sequence of pretraining (0) from fine-tuning (1).
    pub fn train(&mut self, x: &[Vec<S>], y: &[Intent], weights: &[f64], epochs: usize, lr: f64, stream: u64) -> Result<()> {
        if epochs == 0 {
            return Ok(());
        }
        for row in x {
            self.check(row)?;
        }
        let mut opt = Adam::new(self.params.len(), lr);
        let mut grads = vec![S::zero(); self.params.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0xc1f0);
        rng.set_stream(stream);
        let mut order: Vec<usize> = (0..x.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(self.config.batch_size) {
                grads.iter_mut().for_each(|g| *g = S::zero());
                let mut loss = 0.0;
                for &i in batch {
                    loss += self.loss_and_grad(&x[i], y[i], weights[i], &mut grads)?;
                }
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged { step: opt.steps() as usize });
                }
                let inv = S::of(1.0 / batch.len() as f64);
                grads.iter_mut().for_each(|g| *g *= inv);
                clip_global_norm(&mut grads, self.config.clip_norm);
                opt.step(&mut self.params, &grads);
            }
        }
        Ok(())
    }

    pub fn logits(&self, x: &[S]) -> Result<Vec<S>> {
        self.check(x)?;
        Ok(self.forward(x).0)
    }

    pub fn predict(&self, x: &[Vec<S>]) -> Result<Vec<Intent>> {
        x.par_iter()
            .map(|row| {
                let l: Vec<f64> = self.logits(row)?.into_iter().map(Scalar::as_f64).collect();
                Ok(Intent::ALL[argmax(&l)])
            })
            .collect()
    }

    pub(crate) fn write(&self, c: &mut Container) {
        c.set("tf.seq_len", self.seq_len);
        for t in self.arch.layout.tensors() {
            c.push(
                t.name.clone(),
                &t.shape,
                t.slot.of(&self.params).iter().map(|v| v.as_f64() as f32).collect(),
            );
        }
    }

    pub(crate) fn read(c: &Container, config: &TransformerClfConfig) -> Result<Self> {
        let config = config.clone();
        let seq_len: usize = c.get_parsed("tf.seq_len")?;
        let arch = Arch::new(&config, seq_len);
        let mut params = vec![S::zero(); arch.layout.len()];
        for t in arch.layout.tensors() {
            let stored = c.tensor(&t.name)?;
            if stored.shape != t.shape {
                return Err(Error::Format(format!("tensor {} has an unexpected shape", t.name)));
            }
            for (dst, &v) in t.slot.of_mut(&mut params).iter_mut().zip(&stored.data) {
                *dst = S::of(f64::from(v));
            }
        }
        Ok(TransformerClassifier {
            config,
            seq_len,
            arch,
            params,
        })
    }
}
