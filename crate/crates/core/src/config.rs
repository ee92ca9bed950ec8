//! Run configuration: every module's settings under one namespaced
//! `key=value` file (`model.*`, `train.*`, `sample.*`, `clf.*`, `eval.*`,
//! `sim.*`). Unknown keys are errors.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::classifiers::{ClfConfig, ClassifierKind, LdaConfig, RfConfig, TransformerClfConfig};
use crate::datasim::CorpusSpec;
use crate::error::{Error, Result};
use crate::eval::tsne::TsneConfig;
use crate::eval::EvalConfig;
use crate::generator::SamplingConfig;
use crate::io;
use crate::model::ModelConfig;
use crate::trainer::{GenTrainSpec, TrainConfig};

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn opt_str<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".into(), T::to_string)
}

/// Flat view of one configuration struct.
trait Section {
    fn pairs(&self) -> Vec<(&'static str, String)>;
    /// Returns false when `key` does not belong to the section.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;
}

macro_rules! section {
    ($ty:ty { $($f:ident),* } $(opt { $($o:ident),* })?) => {
        impl Section for $ty {
            fn pairs(&self) -> Vec<(&'static str, String)> {
                vec![
                    $( (stringify!($f), self.$f.to_string()), )*
                    $( $( (stringify!($o), opt_str(&self.$o)), )* )?
                ]
            }

            fn set(&mut self, key: &str, value: &str) -> Result<bool> {
                match key {
                    $( stringify!($f) => self.$f = parse(key, value)?, )*
                    $( $( stringify!($o) => self.$o = parse_opt(key, value)?, )* )?
                    _ => return Ok(false),
                }
                Ok(true)
            }
        }
    };
}

section!(ModelConfig { vocab_size, n_embed, n_blocks_per_branch, n_heads, context_len, fc_layers, dropout });
section!(TrainConfig { learning_rate, batch_size, max_epochs, patience, val_interval, clip_norm, seed } opt { max_steps, val_examples });
section!(SamplingConfig { temperature, seed } opt { top_k });
section!(LdaConfig { shrinkage });
section!(RfConfig { n_trees, min_samples_split, seed } opt { max_depth, max_features });
section!(TransformerClfConfig {
    n_embed, n_heads, n_blocks, mlp_layers, epochs, batch_size, learning_rate, fine_tune_epochs, fine_tune_lr, clip_norm, seed
});
section!(TsneConfig {
    perplexity, iterations, exaggeration, exaggeration_iters, learning_rate, initial_momentum, final_momentum, kl_interval, seed
});

/// The sampling settings live under `sample.*`, not here.
struct EvalKeys<'a>(&'a mut EvalConfig);

impl EvalKeys<'_> {
    fn pairs(c: &EvalConfig) -> Vec<(&'static str, String)> {
        vec![
            ("window_len", c.window_len.to_string()),
            ("window_stride", c.window_stride.to_string()),
            ("offline_stride", c.offline_stride.to_string()),
            ("n_synthetic", c.n_synthetic.to_string()),
            ("prompt_len", c.prompt_len.to_string()),
            ("inferral_per_subject", c.inferral_per_subject.to_string()),
            ("alpha", c.alpha.to_string()),
            ("seed", c.seed.to_string()),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let c = &mut *self.0;
        match key {
            "window_len" => c.window_len = parse(key, value)?,
            "window_stride" => c.window_stride = parse(key, value)?,
            "offline_stride" => c.offline_stride = parse(key, value)?,
            "n_synthetic" => c.n_synthetic = parse(key, value)?,
            "prompt_len" => c.prompt_len = parse(key, value)?,
            "inferral_per_subject" => c.inferral_per_subject = parse(key, value)?,
            "alpha" => c.alpha = parse(key, value)?,
            "seed" => c.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub gen: GenTrainSpec,
    /// Classifier hyperparameters; the kind is chosen per command.
    pub clf: ClfConfig,
    /// `eval.sampling` is the `sample.*` section.
    pub eval: EvalConfig,
    pub tsne: TsneConfig,
    pub sim: CorpusSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gen: GenTrainSpec::default(),
            clf: ClfConfig::new(ClassifierKind::Lda),
            eval: EvalConfig::default(),
            tsne: TsneConfig::default(),
            sim: CorpusSpec::default(),
        }
    }
}

fn split_key(key: &str) -> Option<(&str, &str)> {
    key.split_once('.')
}

impl RunConfig {
    /// Defaults overridden by the settings in `path`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_file(path)?;
        Ok(c)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        self.apply_kv(path, &std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Applies `key=value` lines; `path` is only used in diagnostics.
    pub fn apply_kv(&mut self, path: &Path, text: &str) -> Result<()> {
        for (k, v, line) in io::parse_kv(path, text)? {
            self.set(&k, &v).map_err(|e| Error::parse(path, line, e.to_string()))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, setting: &str) -> Result<()> {
        let (k, v) = setting
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("override {setting:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let known = match split_key(key) {
            Some(("model", k)) => self.gen.model.set(k, value)?,
            Some(("train", k)) => match k {
                "stride" => {
                    self.gen.stride = parse(key, value)?;
                    true
                }
                "augment" => {
                    self.gen.augment = parse(key, value)?;
                    true
                }
                "val_fraction" => {
                    self.gen.val_fraction = parse(key, value)?;
                    true
                }
                _ => self.gen.train.set(k, value)?,
            },
            Some(("sample", k)) => self.eval.sampling.set(k, value)?,
            Some(("clf", k)) => match split_key(k) {
                Some(("lda", f)) => self.clf.lda.set(f, value)?,
                Some(("rf", f)) => self.clf.rf.set(f, value)?,
                Some(("tf", f)) => self.clf.transformer.set(f, value)?,
                None if k == "balance_classes" => {
                    self.clf.balance_classes = parse(key, value)?;
                    true
                }
                _ => false,
            },
            Some(("eval", k)) => match k.strip_prefix("tsne.") {
                Some(f) => self.tsne.set(f, value)?,
                None => EvalKeys(&mut self.eval).set(k, value)?,
            },
            Some(("sim", k)) => match k {
                "n_subjects" => {
                    self.sim.n_subjects = parse(key, value)?;
                    true
                }
                "n_sessions" => {
                    self.sim.n_sessions = parse(key, value)?;
                    true
                }
                "recordings_per_condition" => {
                    self.sim.recordings_per_condition = parse(key, value)?;
                    true
                }
                "master_seed" => {
                    self.sim.master_seed = parse(key, value)?;
                    true
                }
                _ => self.sim.params.set(k, value)?,
            },
            _ => false,
        };
        if known {
            Ok(())
        } else {
            Err(Error::invalid(format!("unknown config key {key:?}")))
        }
    }

    /// Every setting, fully resolved, grouped by namespace.
    pub fn pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut put = |ns: &str, pairs: Vec<(&'static str, String)>| {
            out.extend(pairs.into_iter().map(|(k, v)| (format!("{ns}.{k}"), v)));
        };
        put("model", self.gen.model.pairs());
        put("train", self.gen.train.pairs());
        put(
            "train",
            vec![
                ("stride", self.gen.stride.to_string()),
                ("augment", self.gen.augment.to_string()),
                ("val_fraction", self.gen.val_fraction.to_string()),
            ],
        );
        put("sample", self.eval.sampling.pairs());
        put("clf", vec![("balance_classes", self.clf.balance_classes.to_string())]);
        put("clf.lda", self.clf.lda.pairs());
        put("clf.rf", self.clf.rf.pairs());
        put("clf.tf", self.clf.transformer.pairs());
        put("eval", EvalKeys::pairs(&self.eval));
        put("eval.tsne", self.tsne.pairs());
        put(
            "sim",
            vec![
                ("n_subjects", self.sim.n_subjects.to_string()),
                ("n_sessions", self.sim.n_sessions.to_string()),
                ("recordings_per_condition", self.sim.recordings_per_condition.to_string()),
                ("master_seed", self.sim.master_seed.to_string()),
            ],
        );
        let sim: Vec<(String, String)> = io::parse_kv(Path::new("sim"), &self.sim.params.to_kv())
            .expect("simulator parameters render as key=value")
            .into_iter()
            .map(|(k, v, _)| (format!("sim.{k}"), v))
            .collect();
        out.extend(sim);
        out
    }

    pub fn to_kv(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.gen.model.validate()?;
        self.gen.train.validate()?;
        self.eval.sampling.validate(self.gen.model.vocab_size)?;
        self.clf.validate()?;
        self.eval.validate()?;
        self.tsne.validate()?;
        if !(self.gen.val_fraction > 0.0 && self.gen.val_fraction < 1.0) {
            return Err(Error::invalid(format!("train.val_fraction {} outside (0, 1)", self.gen.val_fraction)));
        }
        if self.gen.stride == 0 {
            return Err(Error::invalid("train.stride must be positive"));
        }
        Ok(())
    }

    /// Settings for the given classifier kind.
    pub fn classifier(&self, kind: ClassifierKind) -> ClfConfig {
        ClfConfig { kind, ..self.clf.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::default();
        c.apply_override("model.n_embed=16").unwrap();
        c.apply_override("train.max_steps=40").unwrap();
        c.apply_override("sample.top_k=5").unwrap();
        c.apply_override("clf.rf.max_depth=7").unwrap();
        c.apply_override("clf.tf.epochs=3").unwrap();
        c.apply_override("eval.tsne.perplexity=12.5").unwrap();
        c.apply_override("sim.noise=2.5").unwrap();
        c.apply_override("sim.n_subjects=3").unwrap();
        let text = c.to_kv();
        let mut back = RunConfig::default();
        back.apply_kv(Path::new("x"), &text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_kv(), text);
        assert_eq!(c.gen.model.n_embed, 16);
        assert_eq!(c.eval.sampling.top_k, Some(5));
        assert_eq!(c.clf.rf.max_depth, Some(7));
    }

    #[test]
    fn keys_are_unique() {
        let keys: Vec<String> = RunConfig::default().pairs().into_iter().map(|(k, _)| k).collect();
        let set: std::collections::BTreeSet<&String> = keys.iter().collect();
        assert_eq!(set.len(), keys.len());
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let mut c = RunConfig::default();
        assert!(c.apply_override("model.n_layers=3").is_err());
        assert!(c.apply_override("nonsense=3").is_err());
        assert!(c.apply_override("clf.kind=rf").is_err());
        match c.apply_kv(Path::new("run.conf"), "model.n_embed=8\n\nmodel.bogus=1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(c.apply_override("train.batch_size=many").is_err());
    }

    #[test]
    fn later_settings_win() {
        let mut c = RunConfig::default();
        c.apply_kv(Path::new("f"), "train.learning_rate=0.01\n").unwrap();
        c.apply_override("train.learning_rate=0.02").unwrap();
        assert_eq!(c.gen.train.learning_rate, 0.02);
    }
}
