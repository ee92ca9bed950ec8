//! Prompt-conditioned autoregressive completion.
//!
//! The model only predicts channel 0 of the next frame. Channel `k` is
//! obtained by feeding the history rotated by `k`, so a frame costs eight
//! next-token predictions, all conditioned on the same past.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::sample_prompts;
use crate::datasim::derive_seed;
use crate::error::{Error, Result};
use crate::model::{ChatEmg, DecodeState, IntentModelSet};
use crate::scalar::Scalar;
use crate::signal::{
    rotate_row, EmgFrame, EmgWindow, Intent, Prompt, Recording, TokenMatrix, WindowSource, CHANNELS,
    DEFAULT_PROMPT_LEN, DEFAULT_WINDOW_LEN,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    /// Softmax temperature; `0` selects greedy (argmax) decoding.
    pub temperature: f64,
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            temperature: 1.0,
            top_k: None,
            seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid(format!("temperature {} must be finite and >= 0", self.temperature)));
        }
        if let Some(k) = self.top_k {
            if k == 0 || k > vocab_size {
                return Err(Error::invalid(format!("top_k {k} outside [1, {vocab_size}]")));
            }
        }
        Ok(())
    }
}

/// Draws one token from next-token logits.
pub fn sample_token<R: Rng>(logits: &[f64], cfg: &SamplingConfig, rng: &mut R) -> Result<u16> {
    if logits.is_empty() || logits.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("logits must be non-empty and free of NaN"));
    }
    let argmax = |xs: &[f64]| {
        xs.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    };
    if cfg.temperature == 0.0 || cfg.top_k == Some(1) {
        return Ok(argmax(logits) as u16);
    }
    let scaled: Vec<f64> = logits.iter().map(|&v| v / cfg.temperature).collect();
    let mut keep = vec![true; scaled.len()];
    if let Some(k) = cfg.top_k.filter(|&k| k < scaled.len()) {
        let mut order: Vec<usize> = (0..scaled.len()).collect();
        order.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]).then(a.cmp(&b)));
        keep.iter_mut().for_each(|x| *x = false);
        order[..k].iter().for_each(|&i| keep[i] = true);
    }
    let max = scaled
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled
        .iter()
        .zip(&keep)
        .map(|(&v, &k)| if k { (v - max).exp() } else { 0.0 })
        .collect();
    match WeightedIndex::new(&weights) {
        Ok(dist) => Ok(dist.sample(rng) as u16),
        // all mass underflowed: fall back to the mode
        Err(_) => Ok(argmax(&scaled) as u16),
    }
}

/// Incremental next-channel-0 predictor. Implemented by [`ChatEmg`]; tests plug in stubs.
pub trait FrameModel: Sync {
    type State: Clone + Send;

    fn vocab_size(&self) -> usize;
    fn context_len(&self) -> usize;
    fn start(&self) -> Self::State;
    fn push(&self, state: &mut Self::State, rows: &[[u16; CHANNELS]]) -> Result<()>;
    /// Logits for channel 0 of the row after everything pushed so far.
    fn logits(&self, state: &Self::State) -> Result<Vec<f64>>;
}

impl<S: Scalar> FrameModel for ChatEmg<S> {
    type State = DecodeState<S>;

    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn context_len(&self) -> usize {
        self.config().context_len
    }

    fn start(&self) -> Self::State {
        self.begin_decode()
    }

    fn push(&self, state: &mut Self::State, rows: &[[u16; CHANNELS]]) -> Result<()> {
        self.decode_push(state, rows)
    }

    fn logits(&self, state: &Self::State) -> Result<Vec<f64>> {
        Ok(self.decode_logits(state)?.into_iter().map(Scalar::as_f64).collect())
    }
}

/// Eight decoding states, one per channel rotation, advanced in lockstep.
struct Rotations<M: FrameModel> {
    states: Vec<M::State>,
    len: usize,
}

impl<M: FrameModel> Rotations<M> {
    fn new(model: &M, history: &[[u16; CHANNELS]]) -> Result<Self> {
        let mut r = Rotations {
            states: (0..CHANNELS).map(|_| model.start()).collect(),
            len: 0,
        };
        r.push(model, history)?;
        Ok(r)
    }

    fn push(&mut self, model: &M, rows: &[[u16; CHANNELS]]) -> Result<()> {
        for (k, st) in self.states.iter_mut().enumerate() {
            let rotated: Vec<[u16; CHANNELS]> = rows.iter().map(|r| rotate_row(r, k)).collect();
            model.push(st, &rotated)?;
        }
        self.len += rows.len();
        Ok(())
    }

    fn next<R: Rng>(&self, model: &M, cfg: &SamplingConfig, rng: &mut R) -> Result<[u16; CHANNELS]> {
        let mut frame = [0u16; CHANNELS];
        for (k, st) in self.states.iter().enumerate() {
            let t = sample_token(&model.logits(st)?, cfg, rng)?;
            if usize::from(t) >= model.vocab_size() {
                return Err(Error::invalid(format!("model produced token {t} outside its vocabulary")));
            }
            frame[k] = t;
        }
        Ok(frame)
    }
}

fn check_history_len<M: FrameModel>(model: &M, len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::invalid("history must contain at least one frame"));
    }
    if len >= model.context_len() {
        return Err(Error::ContextOverflow {
            len: len + 1,
            max: model.context_len(),
        });
    }
    Ok(())
}

/// Samples the frame following `history` (`L` rows, `1 <= L < context_len`).
pub fn next_frame<M: FrameModel, R: Rng>(
    model: &M,
    history: &TokenMatrix,
    sampling: &SamplingConfig,
    rng: &mut R,
) -> Result<EmgFrame> {
    sampling.validate(model.vocab_size())?;
    check_history_len(model, history.rows())?;
    let rows: Vec<[u16; CHANNELS]> = (0..history.rows()).map(|r| *history.row(r)).collect();
    let rot = Rotations::new(model, &rows)?;
    EmgFrame::new(rot.next(model, sampling, rng)?)
}

/// Extends `prompt` to `target_len` rows, one sampled frame at a time.
pub fn complete_with<M: FrameModel, R: Rng>(
    model: &M,
    prompt: &TokenMatrix,
    target_len: usize,
    sampling: &SamplingConfig,
    rng: &mut R,
) -> Result<TokenMatrix> {
    sampling.validate(model.vocab_size())?;
    let p = prompt.rows();
    if p == 0 || p >= target_len {
        return Err(Error::invalid(format!(
            "prompt of {p} rows cannot be completed to {target_len} rows"
        )));
    }
    if target_len > model.context_len() {
        return Err(Error::ContextOverflow {
            len: target_len,
            max: model.context_len(),
        });
    }
    let rows: Vec<[u16; CHANNELS]> = (0..p).map(|r| *prompt.row(r)).collect();
    let mut rot = Rotations::new(model, &rows)?;
    let mut out = prompt.clone();
    while out.rows() < target_len {
        let frame = rot.next(model, sampling, rng)?;
        out.push_row(frame);
        if out.rows() < target_len {
            rot.push(model, &[frame])?;
        }
    }
    Ok(out)
}

/// [`complete_with`] using a generator seeded from `sampling.seed`.
pub fn complete<M: FrameModel>(model: &M, prompt: &Prompt, target_len: usize, sampling: &SamplingConfig) -> Result<TokenMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    complete_with(model, &prompt.data, target_len, sampling, &mut rng)
}

/// Where one synthetic window came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub index: usize,
    pub source: WindowSource,
    /// Seed and stream of the window's private generator.
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticBatch {
    pub intent: Intent,
    pub windows: Vec<EmgWindow>,
    pub provenance: Vec<Provenance>,
    pub prompt_len: usize,
    pub sampling: SamplingConfig,
}

/// Per-window generator: one ChaCha stream per window index, so the result
/// does not depend on scheduling.
pub fn window_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Completes every prompt in parallel.
pub fn generate_from_prompts<M: FrameModel>(
    model: &M,
    prompts: &[Prompt],
    intent: Intent,
    target_len: usize,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<SyntheticBatch> {
    sampling.validate(model.vocab_size())?;
    let prompt_len = prompts.first().map_or(0, |p| p.data.rows());
    if prompts.iter().any(|p| p.data.rows() != prompt_len || p.intent != intent) {
        return Err(Error::invalid("prompts must share one length and the batch intent"));
    }
    let windows = prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = window_rng(seed, i as u64);
            let data = complete_with(model, &p.data, target_len, sampling, &mut rng)?;
            Ok(EmgWindow {
                data,
                intent,
                source: p.source.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance = prompts
        .iter()
        .enumerate()
        .map(|(i, p)| Provenance {
            index: i,
            source: p.source.clone(),
            seed,
            stream: i as u64,
        })
        .collect();
    Ok(SyntheticBatch {
        intent,
        windows,
        provenance,
        prompt_len,
        sampling: sampling.clone(),
    })
}

/// `n_per_intent` windows per intent, each completed from a prompt drawn out of `support`.
pub fn batch_generate<S: Scalar>(
    models: &IntentModelSet<S>,
    support: &Recording,
    n_per_intent: usize,
    prompt_len: usize,
    target_len: usize,
    sampling: &SamplingConfig,
) -> Result<BTreeMap<Intent, SyntheticBatch>> {
    let mut out = BTreeMap::new();
    for intent in Intent::ALL {
        let prompts = sample_prompts(
            support,
            intent,
            n_per_intent,
            prompt_len,
            derive_seed(sampling.seed, &[0x9e0, intent.index() as u64]),
        )?;
        let seed = derive_seed(sampling.seed, &[0x9e1, intent.index() as u64]);
        out.insert(
            intent,
            generate_from_prompts(models.get(intent), &prompts, intent, target_len, sampling, seed)?,
        );
    }
    Ok(out)
}

/// [`batch_generate`] with the default 150-row prompts completed to 256 rows.
pub fn batch_generate_default<S: Scalar>(
    models: &IntentModelSet<S>,
    support: &Recording,
    n_per_intent: usize,
    sampling: &SamplingConfig,
) -> Result<BTreeMap<Intent, SyntheticBatch>> {
    batch_generate(models, support, n_per_intent, DEFAULT_PROMPT_LEN, DEFAULT_WINDOW_LEN, sampling)
}
