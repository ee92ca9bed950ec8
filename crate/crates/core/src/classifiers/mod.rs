//! Intent classifiers over normalized `T×8` windows.
//!
//! LDA and the random forest see each window as one flat vector of `T·8`
//! features; the transformer consumes it as a sequence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::Intent;

pub mod forest;
pub mod lda;
pub mod transformer;

pub use forest::{Forest, RfConfig};
pub use lda::{Lda, LdaConfig};
pub use transformer::{TransformerClassifier, TransformerClfConfig};

pub const CLASSIFIER_KIND: &str = "chatemg-classifier";
pub const N_CLASSES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassifierKind {
    Lda,
    Rf,
    Transformer,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Lda, ClassifierKind::Rf, ClassifierKind::Transformer];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Lda => "lda",
            ClassifierKind::Rf => "rf",
            ClassifierKind::Transformer => "transformer",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown classifier {s:?} (expected lda, rf or transformer)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClfConfig {
    pub kind: ClassifierKind,
    pub lda: LdaConfig,
    pub rf: RfConfig,
    pub transformer: TransformerClfConfig,
    /// Weight classes inversely to their frequency. Off by default.
    pub balance_classes: bool,
}

impl ClfConfig {
    pub fn new(kind: ClassifierKind) -> Self {
        ClfConfig {
            kind,
            lda: LdaConfig::default(),
            rf: RfConfig::default(),
            transformer: TransformerClfConfig::default(),
            balance_classes: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lda.validate()?;
        self.rf.validate()?;
        self.transformer.validate()
    }

    /// Same hyperparameters with every seed offset by `delta`.
    pub fn reseeded(&self, delta: u64) -> Self {
        let mut c = self.clone();
        c.rf.seed = c.rf.seed.wrapping_add(delta);
        c.transformer.seed = c.transformer.seed.wrapping_add(delta);
        c
    }
}

/// Per-example weights: all ones, or `n / (K·n_c)` when balancing.
pub(crate) fn example_weights(y: &[Intent], balance: bool) -> Vec<f64> {
    if !balance {
        return vec![1.0; y.len()];
    }
    let mut counts = [0usize; N_CLASSES];
    y.iter().for_each(|i| counts[i.index()] += 1);
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    y.iter()
        .map(|i| y.len() as f64 / (present * counts[i.index()] as f64))
        .collect()
}

pub(crate) fn check_xy<S: Scalar>(x: &[Vec<S>], y: &[Intent]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} windows but {} labels", x.len(), y.len())));
    }
    if x.is_empty() {
        return Err(Error::DegenerateTrainingSet("no training windows".into()));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("windows must all have the same shape"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Fitted<S> {
    Lda(Lda<S>),
    Rf(Forest<S>),
    Transformer(TransformerClassifier<S>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedClassifier<S> {
    pub config: ClfConfig,
    pub model: Fitted<S>,
}

/// Trains a classifier of `config.kind` on `(x, y)`.
pub fn fit<S: Scalar>(config: &ClfConfig, x: &[Vec<S>], y: &[Intent]) -> Result<FittedClassifier<S>> {
    config.validate()?;
    check_xy(x, y)?;
    let w = example_weights(y, config.balance_classes);
    let model = match config.kind {
        ClassifierKind::Lda => Fitted::Lda(Lda::fit(&config.lda, x, y, config.balance_classes)?),
        ClassifierKind::Rf => Fitted::Rf(Forest::fit(&config.rf, x, y, &w)?),
        ClassifierKind::Transformer => Fitted::Transformer(TransformerClassifier::fit(&config.transformer, x, y, &w)?),
    };
    Ok(FittedClassifier {
        config: config.clone(),
        model,
    })
}

/// Starting point for [`fine_tune`].
pub enum FineTuneFrom<'a, S> {
    Pretrained(&'a FittedClassifier<S>),
    Config(&'a ClfConfig),
}

/// Adapts a classifier to a support set.
///
/// The transformer continues gradient training from the pretrained weights
/// (pretraining on `offline` first if only a config is given). LDA and the
/// forest have no incremental update and are refit on `offline ∪ support`.
pub fn fine_tune<S: Scalar>(
    from: FineTuneFrom<'_, S>,
    offline: (&[Vec<S>], &[Intent]),
    support: (&[Vec<S>], &[Intent]),
) -> Result<FittedClassifier<S>> {
    check_xy(offline.0, offline.1)?;
    if support.0.len() != support.1.len() {
        return Err(Error::invalid("support windows and labels differ in length"));
    }
    let config = match &from {
        FineTuneFrom::Pretrained(p) => p.config.clone(),
        FineTuneFrom::Config(c) => (*c).clone(),
    };
    match config.kind {
        ClassifierKind::Transformer => {
            let pre = match from {
                FineTuneFrom::Pretrained(p) => p.clone(),
                FineTuneFrom::Config(c) => fit(c, offline.0, offline.1)?,
            };
            let Fitted::Transformer(mut t) = pre.model else {
                return Err(Error::invalid("pretrained classifier kind does not match its config"));
            };
            if !support.0.is_empty() {
                check_xy(support.0, support.1)?;
                let w = example_weights(support.1, config.balance_classes);
                t.train(support.0, support.1, &w, config.transformer.fine_tune_epochs, config.transformer.fine_tune_lr, 1)?;
            }
            Ok(FittedClassifier {
                config,
                model: Fitted::Transformer(t),
            })
        }
        _ => {
            let x: Vec<Vec<S>> = offline.0.iter().chain(support.0).cloned().collect();
            let y: Vec<Intent> = offline.1.iter().chain(support.1).copied().collect();
            fit(&config, &x, &y)
        }
    }
}

impl<S: Scalar> FittedClassifier<S> {
    pub fn kind(&self) -> ClassifierKind {
        self.config.kind
    }

    /// One label per window, in input order.
    pub fn predict(&self, x: &[Vec<S>]) -> Result<Vec<Intent>> {
        match &self.model {
            Fitted::Lda(m) => m.predict(x),
            Fitted::Rf(m) => m.predict(x),
            Fitted::Transformer(m) => m.predict(x),
        }
    }

    pub fn accuracy(&self, x: &[Vec<S>], y: &[Intent]) -> Result<f64> {
        accuracy(&self.predict(x)?, y)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new(CLASSIFIER_KIND);
        write_config(&self.config, &mut c);
        match &self.model {
            Fitted::Lda(m) => m.write(&mut c),
            Fitted::Rf(m) => m.write(&mut c),
            Fitted::Transformer(m) => m.write(&mut c),
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind(CLASSIFIER_KIND)?;
        let config = read_config(c)?;
        let model = match config.kind {
            ClassifierKind::Lda => Fitted::Lda(Lda::read(c)?),
            ClassifierKind::Rf => Fitted::Rf(Forest::read(c)?),
            ClassifierKind::Transformer => Fitted::Transformer(TransformerClassifier::read(c, &config.transformer)?),
        };
        Ok(FittedClassifier { config, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn write_config(cfg: &ClfConfig, c: &mut Container) {
    let opt = |v: Option<usize>| v.map_or("none".to_string(), |d| d.to_string());
    c.set("kind", cfg.kind);
    c.set("balance_classes", cfg.balance_classes);
    c.set("lda.shrinkage", cfg.lda.shrinkage);
    c.set("rf.n_trees", cfg.rf.n_trees);
    c.set("rf.max_depth", opt(cfg.rf.max_depth));
    c.set("rf.min_samples_split", cfg.rf.min_samples_split);
    c.set("rf.max_features", opt(cfg.rf.max_features));
    c.set("rf.seed", cfg.rf.seed);
    let t = &cfg.transformer;
    c.set("tf.n_embed", t.n_embed);
    c.set("tf.n_heads", t.n_heads);
    c.set("tf.n_blocks", t.n_blocks);
    c.set("tf.mlp_layers", t.mlp_layers);
    c.set("tf.epochs", t.epochs);
    c.set("tf.batch_size", t.batch_size);
    c.set("tf.learning_rate", t.learning_rate);
    c.set("tf.fine_tune_epochs", t.fine_tune_epochs);
    c.set("tf.fine_tune_lr", t.fine_tune_lr);
    c.set("tf.clip_norm", t.clip_norm);
    c.set("tf.seed", t.seed);
}

fn read_config(c: &Container) -> Result<ClfConfig> {
    let opt = |key: &str| -> Result<Option<usize>> {
        match c.get(key)? {
            "none" => Ok(None),
            v => v.parse().map(Some).map_err(|_| Error::Format(format!("{key}: bad value {v:?}"))),
        }
    };
    let cfg = ClfConfig {
        kind: c.get("kind")?.parse()?,
        balance_classes: c.get_parsed("balance_classes")?,
        lda: LdaConfig {
            shrinkage: c.get_parsed("lda.shrinkage")?,
        },
        rf: RfConfig {
            n_trees: c.get_parsed("rf.n_trees")?,
            max_depth: opt("rf.max_depth")?,
            min_samples_split: c.get_parsed("rf.min_samples_split")?,
            max_features: opt("rf.max_features")?,
            seed: c.get_parsed("rf.seed")?,
        },
        transformer: TransformerClfConfig {
            n_embed: c.get_parsed("tf.n_embed")?,
            n_heads: c.get_parsed("tf.n_heads")?,
            n_blocks: c.get_parsed("tf.n_blocks")?,
            mlp_layers: c.get_parsed("tf.mlp_layers")?,
            epochs: c.get_parsed("tf.epochs")?,
            batch_size: c.get_parsed("tf.batch_size")?,
            learning_rate: c.get_parsed("tf.learning_rate")?,
            fine_tune_epochs: c.get_parsed("tf.fine_tune_epochs")?,
            fine_tune_lr: c.get_parsed("tf.fine_tune_lr")?,
            clip_norm: c.get_parsed("tf.clip_norm")?,
            seed: c.get_parsed("tf.seed")?,
        },
    };
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    Ok(cfg)
}

/// Fraction of exact matches.
pub fn accuracy(predicted: &[Intent], truth: &[Intent]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "accuracy needs equal, non-zero lengths (got {} and {})",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub(crate) fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests;
