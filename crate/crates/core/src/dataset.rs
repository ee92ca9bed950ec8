//! Generative training examples, prompt sampling and classifier datasets.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Scalar;
use crate::signal::{
    normalize_for_classifier, rotate_row, single_intent_starts, EmgWindow, Intent, Prompt, Recording,
    TokenMatrix, WindowSource, CHANNELS,
};

pub const DEFAULT_GEN_STRIDE: usize = 10;

/// One next-value prediction example: `target[i]` is channel 1 at step `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenExample {
    pub input: TokenMatrix,
    pub target: Vec<u16>,
}

/// Source windows of `T + 1` frames, expanded lazily into rotated examples.
#[derive(Clone, Debug, Default)]
pub struct GenSet {
    windows: Vec<TokenMatrix>,
    rotations: usize,
    /// Set when no window qualified.
    pub warning: Option<String>,
}

impl GenSet {
    pub fn len(&self) -> usize {
        self.windows.len() * self.rotations
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn window_count(&self) -> usize {
        self.windows.len()
    }

    /// Example `i`: window `i / rotations` rotated by `i % rotations`.
    pub fn example(&self, i: usize) -> GenExample {
        let w = &self.windows[i / self.rotations];
        let k = i % self.rotations;
        let t = w.rows() - 1;
        let mut input = Vec::with_capacity(t * CHANNELS);
        let mut target = Vec::with_capacity(t);
        for r in 0..t {
            input.extend_from_slice(&rotate_row(w.row(r), k));
            target.push(w.get(r + 1, k % CHANNELS));
        }
        GenExample {
            input: TokenMatrix::from_flat_unchecked(input),
            target,
        }
    }

    pub fn examples(&self) -> impl Iterator<Item = GenExample> + '_ {
        (0..self.len()).map(|i| self.example(i))
    }

    /// Concatenation in argument order.
    pub fn concat(sets: Vec<GenSet>) -> GenSet {
        let rotations = sets.first().map_or(1, |s| s.rotations);
        let mut windows = Vec::new();
        for s in sets {
            debug_assert_eq!(s.rotations, rotations);
            windows.extend(s.windows);
        }
        let warning = windows.is_empty().then(|| "no qualifying windows".to_string());
        GenSet {
            windows,
            rotations,
            warning,
        }
    }
}

/// Windows of `context_len + 1` frames of `intent`, each expanded to 8 rotations when `augment`.
pub fn build_generative_set(
    recordings: &[Recording],
    intent: Intent,
    context_len: usize,
    stride: usize,
    augment: bool,
) -> Result<GenSet> {
    if context_len == 0 || stride == 0 {
        return Err(Error::invalid("context length and stride must be positive"));
    }
    let mut windows = Vec::new();
    for rec in recordings {
        for s in single_intent_starts(rec.labels(), context_len + 1, stride) {
            if rec.labels()[s] == intent {
                windows.push(rec.tokens(s, s + context_len + 1));
            }
        }
    }
    let warning = windows
        .is_empty()
        .then(|| format!("no single-intent {intent} windows of {} frames", context_len + 1));
    Ok(GenSet {
        windows,
        rotations: if augment { CHANNELS } else { 1 },
        warning,
    })
}

/// Recording-level train/validation partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_recordings: Vec<String>,
    pub val_recordings: Vec<String>,
}

impl SplitSpec {
    pub fn new(train: Vec<String>, val: Vec<String>) -> Result<Self> {
        let t: HashSet<&String> = train.iter().collect();
        if let Some(dup) = val.iter().find(|v| t.contains(v)) {
            return Err(Error::invalid(format!("recording {dup} is in both train and validation splits")));
        }
        Ok(SplitSpec {
            train_recordings: train,
            val_recordings: val,
        })
    }

    /// Shuffles ids with `seed` and assigns the trailing `val_fraction` to validation
    /// (at least one recording in each side when there are two or more).
    pub fn by_recording(mut ids: Vec<String>, val_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::invalid(format!("validation fraction {val_fraction} outside [0, 1)")));
        }
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let mut n_val = (n as f64 * val_fraction).round() as usize;
        if n >= 2 && val_fraction > 0.0 {
            n_val = n_val.clamp(1, n - 1);
        }
        let val = ids.split_off(n - n_val);
        SplitSpec::new(ids, val)
    }

    pub fn select<'a>(&self, recordings: &'a [Recording]) -> (Vec<&'a Recording>, Vec<&'a Recording>) {
        let train: HashSet<&str> = self.train_recordings.iter().map(String::as_str).collect();
        let val: HashSet<&str> = self.val_recordings.iter().map(String::as_str).collect();
        let pick = |set: &HashSet<&str>| recordings.iter().filter(|r| set.contains(r.id().as_str())).collect();
        (pick(&train), pick(&val))
    }

    /// Writes `train.txt` and `val.txt` in `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_id_list(&dir.join("train.txt"), "train recordings", &self.train_recordings)?;
        io::write_id_list(&dir.join("val.txt"), "validation recordings", &self.val_recordings)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        SplitSpec::new(io::read_id_list(&dir.join("train.txt"))?, io::read_id_list(&dir.join("val.txt"))?)
    }
}

/// `n` prompts of `prompt_len` frames lying wholly inside `intent` cue segments of `support`.
///
/// Starts are drawn uniformly, with replacement, over every valid position.
pub fn sample_prompts(support: &Recording, intent: Intent, n: usize, prompt_len: usize, seed: u64) -> Result<Vec<Prompt>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_prompts_with(support, intent, n, prompt_len, &mut rng)
}

pub fn sample_prompts_with<R: Rng>(
    support: &Recording,
    intent: Intent,
    n: usize,
    prompt_len: usize,
    rng: &mut R,
) -> Result<Vec<Prompt>> {
    if prompt_len == 0 {
        return Err(Error::invalid("prompt length must be positive"));
    }
    let starts: Vec<usize> = support
        .segments()
        .into_iter()
        .filter(|s| s.intent == intent && s.len() >= prompt_len)
        .flat_map(|s| s.start..=s.end - prompt_len)
        .collect();
    if starts.is_empty() {
        return Err(Error::InsufficientSupport {
            intent,
            needed: prompt_len,
        });
    }
    let id = support.id();
    Ok((0..n)
        .map(|_| {
            let s = starts[rng.gen_range(0..starts.len())];
            Prompt {
                data: support.tokens(s, s + prompt_len),
                intent,
                source: WindowSource {
                    recording_id: id.clone(),
                    start: support.offset() + s,
                },
            }
        })
        .collect())
}

/// Normalized `T×8` matrices paired with labels, in input order.
pub fn build_classifier_set<S: Scalar>(windows: &[EmgWindow]) -> (Vec<Vec<S>>, Vec<Intent>) {
    windows
        .iter()
        .map(|w| (normalize_for_classifier(w), w.intent))
        .unzip()
}
