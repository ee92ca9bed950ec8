//! Per-intent generative training with recording-level validation and early stopping.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{build_generative_set, GenSet, SplitSpec, DEFAULT_GEN_STRIDE};
use crate::error::{Error, Result};
use crate::model::{ChatEmg, IntentModelSet, ModelConfig};
use crate::optim::{clip_global_norm, Adam};
use crate::scalar::Scalar;
use crate::signal::{Intent, Recording};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Optional hard cap on optimizer steps.
    pub max_steps: Option<usize>,
    /// Consecutive non-improving validation checks before stopping.
    pub patience: usize,
    /// Optimizer steps between validation passes.
    pub val_interval: usize,
    /// Evaluate on at most this many evenly spaced validation examples.
    pub val_examples: Option<usize>,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            batch_size: 64,
            max_epochs: 10,
            max_steps: None,
            patience: 3,
            val_interval: 200,
            val_examples: None,
            clip_norm: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::invalid("learning rate and clip norm must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.val_interval == 0 || self.patience == 0 {
            return Err(Error::invalid("batch_size, max_epochs, val_interval and patience must be positive"));
        }
        if self.max_steps == Some(0) || self.val_examples == Some(0) {
            return Err(Error::invalid("max_steps and val_examples must be positive when set"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationCheck {
    pub step: usize,
    pub epoch: usize,
    /// Mean training loss over the steps since the previous check.
    pub train_loss: f64,
    pub val_loss: f64,
}

impl ValidationCheck {
    /// One progress-log line.
    pub fn log_line(&self) -> String {
        format!(
            "step={} epoch={} train_loss={:.6} val_loss={:.6}",
            self.step, self.epoch, self.train_loss, self.val_loss
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub intent: Intent,
    pub checks: Vec<ValidationCheck>,
    pub stopped_epoch: usize,
    pub steps: usize,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub early_stopped: bool,
    pub train_examples: usize,
    pub val_examples: usize,
    pub checkpoint: Option<PathBuf>,
}

/// Evenly spaced validation examples, at most `cap` of them.
pub fn val_indices(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < len => (0..c).map(|i| i * len / c).collect(),
        _ => (0..len).collect(),
    }
}

/// Mean loss over the chosen validation examples.
pub fn evaluate<S: Scalar>(model: &ChatEmg<S>, set: &GenSet, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        let ex = set.example(i);
        total += model.eval_loss(&ex.input, &ex.target)?.as_f64();
    }
    Ok(total / indices.len() as f64)
}

/// Optimizes a fresh model; returns the parameters of the best validation check.
///
/// `checkpoint` (if given) is rewritten every time validation improves, so a
/// diverged run leaves the last good state on disk. `on_check` receives each
/// validation record as it happens.
pub fn train_intent_model<S: Scalar>(
    model_config: &ModelConfig,
    config: &TrainConfig,
    train_set: &GenSet,
    val_set: &GenSet,
    intent: Intent,
    checkpoint: Option<PathBuf>,
    on_check: &mut dyn FnMut(&ValidationCheck),
) -> Result<(ChatEmg<S>, TrainReport)> {
    let model = ChatEmg::init(model_config.clone(), config.seed)?;
    train_from(model, config, train_set, val_set, intent, checkpoint, on_check)
}

/// Continues optimization from `model`.
pub fn train_from<S: Scalar>(
    mut model: ChatEmg<S>,
    config: &TrainConfig,
    train_set: &GenSet,
    val_set: &GenSet,
    intent: Intent,
    checkpoint: Option<PathBuf>,
    on_check: &mut dyn FnMut(&ValidationCheck),
) -> Result<(ChatEmg<S>, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid(format!(
            "{intent}: training needs non-empty train and validation sets (got {} and {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let vidx = val_indices(val_set.len(), config.val_examples);
    let mut opt = Adam::new(model.num_params(), config.learning_rate);
    let mut grads = vec![S::zero(); model.num_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut best_step = 0;
    let mut checks = Vec::new();
    let mut bad = 0;
    let mut step = 0;
    let mut since = (0.0f64, 0usize);
    let mut stopped_epoch = 0;
    let mut early_stopped = false;
    let inv_batch = S::of(1.0 / config.batch_size as f64);
    let dropout = model.config().dropout > 0.0;

    'epochs: for epoch in 1..=config.max_epochs {
        stopped_epoch = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = S::zero());
            let mut batch_loss = 0.0;
            for &i in batch {
                let ex = train_set.example(i);
                let l = model.loss_and_grad(&ex.input, &ex.target, &mut grads, dropout.then_some(&mut rng))?;
                batch_loss += l.as_f64();
            }
            step += 1;
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::TrainingDiverged { step });
            }
            let scale = if batch.len() == config.batch_size {
                inv_batch
            } else {
                S::of(1.0 / batch.len() as f64)
            };
            grads.iter_mut().for_each(|g| *g *= scale);
            clip_global_norm(&mut grads, config.clip_norm);
            opt.step(model.params_mut(), &grads);
            since.0 += batch_loss;
            since.1 += 1;

            let last_step = config.max_steps == Some(step);
            if step % config.val_interval == 0 || last_step {
                let val = evaluate(&model, val_set, &vidx)?;
                if !val.is_finite() {
                    return Err(Error::TrainingDiverged { step });
                }
                let check = ValidationCheck {
                    step,
                    epoch,
                    train_loss: since.0 / since.1 as f64,
                    val_loss: val,
                };
                since = (0.0, 0);
                on_check(&check);
                checks.push(check);
                if val < best_val {
                    best_val = val;
                    best_step = step;
                    best = model.clone();
                    bad = 0;
                    if let Some(path) = &checkpoint {
                        best.save(path, intent)?;
                    }
                } else {
                    bad += 1;
                    if bad >= config.patience {
                        early_stopped = true;
                        break 'epochs;
                    }
                }
            }
            if last_step {
                break 'epochs;
            }
        }
    }
    if checks.is_empty() || since.1 > 0 {
        let val = evaluate(&model, val_set, &vidx)?;
        let check = ValidationCheck {
            step,
            epoch: stopped_epoch,
            train_loss: if since.1 > 0 { since.0 / since.1 as f64 } else { f64::NAN },
            val_loss: val,
        };
        on_check(&check);
        checks.push(check);
        if val < best_val {
            best_val = val;
            best_step = step;
            best = model;
            if let Some(path) = &checkpoint {
                best.save(path, intent)?;
            }
        }
    }
    let report = TrainReport {
        intent,
        checks,
        stopped_epoch,
        steps: step,
        best_step,
        best_val_loss: best_val,
        early_stopped,
        train_examples: train_set.len(),
        val_examples: val_set.len(),
        checkpoint,
    };
    Ok((best, report))
}

/// Everything needed to train the three intent models from a corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct GenTrainSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stride: usize,
    pub augment: bool,
    /// Fraction of recordings held out for validation.
    pub val_fraction: f64,
}

impl Default for GenTrainSpec {
    fn default() -> Self {
        GenTrainSpec {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            stride: DEFAULT_GEN_STRIDE,
            augment: true,
            val_fraction: 0.4,
        }
    }
}

/// Train and validation sets for one intent under a recording-level split.
pub fn intent_sets(spec: &GenTrainSpec, corpus: &[Recording], split: &SplitSpec, intent: Intent) -> Result<(GenSet, GenSet)> {
    let (train, val) = split.select(corpus);
    let own = |v: Vec<&Recording>| v.into_iter().cloned().collect::<Vec<_>>();
    let t = build_generative_set(&own(train), intent, spec.model.context_len, spec.stride, spec.augment)?;
    let v = build_generative_set(&own(val), intent, spec.model.context_len, spec.stride, spec.augment)?;
    Ok((t, v))
}

fn available_intents(corpus: &[Recording], spec: &GenTrainSpec) -> Vec<Intent> {
    Intent::ALL
        .into_iter()
        .filter(|&i| {
            build_generative_set(corpus, i, spec.model.context_len, spec.stride, false)
                .map(|s| !s.is_empty())
                .unwrap_or(false)
        })
        .collect()
}

/// Fails with `InvalidCorpus` naming the first intent that has no windows.
pub fn check_corpus_intents(corpus: &[Recording], spec: &GenTrainSpec, needed: &[Intent]) -> Result<()> {
    let avail = available_intents(corpus, spec);
    for &i in needed {
        if !avail.contains(&i) {
            let list: Vec<&str> = avail.iter().map(|i| i.as_str()).collect();
            return Err(Error::InvalidCorpus {
                intent: i,
                available: if list.is_empty() { "none".into() } else { list.join(",") },
            });
        }
    }
    Ok(())
}

fn train_split<S: Scalar>(
    spec: &GenTrainSpec,
    corpus: &[Recording],
    split: &SplitSpec,
    intent: Intent,
    checkpoint: Option<PathBuf>,
    on_check: &mut dyn FnMut(&ValidationCheck),
) -> Result<(ChatEmg<S>, TrainReport)> {
    let (train, val) = intent_sets(spec, corpus, split, intent)?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidCorpus {
            intent,
            available: format!("{} train / {} validation windows after the recording split", train.window_count(), val.window_count()),
        });
    }
    let cfg = TrainConfig {
        seed: spec.train.seed.wrapping_add(intent.index() as u64),
        ..spec.train.clone()
    };
    train_intent_model(&spec.model, &cfg, &train, &val, intent, checkpoint, on_check)
}

/// The model of a single intent, trained exactly as [`train_all_intents`] would.
pub fn train_one_intent<S: Scalar>(
    spec: &GenTrainSpec,
    corpus: &[Recording],
    intent: Intent,
    checkpoint: Option<PathBuf>,
    on_check: &mut dyn FnMut(&ValidationCheck),
) -> Result<(ChatEmg<S>, TrainReport)> {
    check_corpus_intents(corpus, spec, &[intent])?;
    let split = SplitSpec::by_recording(corpus.iter().map(Recording::id).collect(), spec.val_fraction, spec.train.seed)?;
    train_split(spec, corpus, &split, intent, checkpoint, on_check)
}

/// One model per intent, each trained only on windows of that intent.
pub fn train_all_intents<S: Scalar>(
    spec: &GenTrainSpec,
    corpus: &[Recording],
    on_check: &mut dyn FnMut(Intent, &ValidationCheck),
) -> Result<(IntentModelSet<S>, BTreeMap<Intent, TrainReport>)> {
    check_corpus_intents(corpus, spec, &Intent::ALL)?;
    let split = SplitSpec::by_recording(corpus.iter().map(Recording::id).collect(), spec.val_fraction, spec.train.seed)?;
    let mut models = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for intent in Intent::ALL {
        let (m, r) = train_split(spec, corpus, &split, intent, None, &mut |c| on_check(intent, c))?;
        models.insert(intent, m);
        reports.insert(intent, r);
    }
    Ok((IntentModelSet::new(models)?, reports))
}
