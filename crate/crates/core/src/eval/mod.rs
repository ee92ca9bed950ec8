//! Adaptation scenarios, baselines and the statistics reported on them.

pub mod stats;
pub mod tsne;

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::classifiers::{fine_tune, fit, ClassifierKind, ClfConfig, FineTuneFrom, FittedClassifier};
use crate::dataset::build_classifier_set;
use crate::datasim::derive_seed;
use crate::error::{Error, Result};
use crate::generator::{batch_generate, SamplingConfig};
use crate::io;
use crate::model::IntentModelSet;
use crate::scalar::Scalar;
use crate::trainer::{train_all_intents, GenTrainSpec, ValidationCheck};
use crate::signal::{
    segment_windows, split_support_query, Condition, EmgWindow, Intent, Recording, DEFAULT_PROMPT_LEN, DEFAULT_WINDOW_LEN,
};

pub use stats::{nrmse, wilcoxon_exact, wilcoxon_normal, wilcoxon_rank_sum_one_sided};
pub use tsne::{tsne_channels, tsne_embed, ChannelEmbedding, TsneConfig, TsneResult};

pub const CSV_HEADER: &str = "scenario,classifier,method,subject,recording,accuracy";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    Condition,
    Session,
    Subject,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::Condition, ScenarioKind::Session, ScenarioKind::Subject];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Condition => "condition",
            ScenarioKind::Session => "session",
            ScenarioKind::Subject => "subject",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {s:?} (expected condition, session or subject)")))
    }
}

/// How the classifier's training set is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Support set only.
    SelfOnly,
    /// Pretrained on the offline recordings, then adapted to the support set.
    FineTune,
    /// Support set plus synthetic windows prompted from it.
    ChatEmg,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SelfOnly, Method::FineTune, Method::ChatEmg];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::SelfOnly => "self",
            Method::FineTune => "fine_tune",
            Method::ChatEmg => "chatemg",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?} (expected self, fine_tune or chatemg)")))
    }
}

/// One generative training run and the recordings it is evaluated on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Experiment {
    /// What is held out: a condition pair, a session or a subject.
    pub holdout: String,
    pub train_recordings: Vec<String>,
    pub inferral_recordings: Vec<String>,
}

impl Experiment {
    /// Fails with `Leakage` if any inferral recording is in `trained_on`.
    pub fn check_leakage(&self, trained_on: &[String]) -> Result<()> {
        let train: HashSet<&String> = trained_on.iter().collect();
        match self.inferral_recordings.iter().find(|r| train.contains(r)) {
            Some(r) => Err(Error::Leakage(r.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub experiments: Vec<Experiment>,
}

const TRAIN_CONDITION: Condition = Condition::ALL[0];
const INFER_CONDITION: Condition = Condition::ALL[2];

/// Up to `k` recordings per subject, preferring variety: first recordings
/// before second ones, then by condition, then by session.
fn pick_per_subject(recs: &[&Recording], k: usize) -> Result<Vec<String>> {
    let mut by_subject: BTreeMap<&str, Vec<&Recording>> = BTreeMap::new();
    for r in recs {
        by_subject.entry(r.meta().subject_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (subject, mut list) in by_subject {
        if list.len() < k {
            return Err(Error::invalid(format!(
                "subject {subject} has {} eligible inferral recordings, need {k}",
                list.len()
            )));
        }
        list.sort_by_key(|r| {
            let m = r.meta();
            let ci = Condition::ALL.iter().position(|&c| c == m.condition).unwrap_or(usize::MAX);
            (m.recording_index, ci, m.session_index)
        });
        out.extend(list.into_iter().take(k).map(Recording::id));
    }
    Ok(out)
}

fn ids<'a>(it: impl Iterator<Item = &'a Recording>) -> Vec<String> {
    let mut v: Vec<String> = it.map(Recording::id).collect();
    v.sort();
    v
}

impl Scenario {
    /// Derives training and inferral recordings from a corpus.
    ///
    /// - condition: train on every on-table/motor-off recording, infer on off-table/motor-off;
    /// - session: train on session 1, infer on session 2;
    /// - subject: one experiment per subject, training on all other subjects.
    pub fn build(kind: ScenarioKind, corpus: &[Recording], inferral_per_subject: usize) -> Result<Scenario> {
        if corpus.is_empty() {
            return Err(Error::invalid("empty corpus"));
        }
        if inferral_per_subject == 0 {
            return Err(Error::invalid("inferral_per_subject must be positive"));
        }
        let experiments = match kind {
            ScenarioKind::Condition => {
                let infer: Vec<&Recording> = corpus.iter().filter(|r| r.meta().condition == INFER_CONDITION).collect();
                vec![Experiment {
                    holdout: format!("{TRAIN_CONDITION}->{INFER_CONDITION}"),
                    train_recordings: ids(corpus.iter().filter(|r| r.meta().condition == TRAIN_CONDITION)),
                    inferral_recordings: pick_per_subject(&infer, inferral_per_subject)?,
                }]
            }
            ScenarioKind::Session => {
                let infer: Vec<&Recording> = corpus.iter().filter(|r| r.meta().session_index == 2).collect();
                vec![Experiment {
                    holdout: "session2".into(),
                    train_recordings: ids(corpus.iter().filter(|r| r.meta().session_index == 1)),
                    inferral_recordings: pick_per_subject(&infer, inferral_per_subject)?,
                }]
            }
            ScenarioKind::Subject => {
                let subjects: std::collections::BTreeSet<&str> =
                    corpus.iter().map(|r| r.meta().subject_id.as_str()).collect();
                if subjects.len() < 2 {
                    return Err(Error::invalid("subject scenario needs at least two subjects"));
                }
                subjects
                    .into_iter()
                    .map(|s| {
                        let own: Vec<&Recording> = corpus.iter().filter(|r| r.meta().subject_id == s).collect();
                        Ok(Experiment {
                            holdout: s.to_string(),
                            train_recordings: ids(corpus.iter().filter(|r| r.meta().subject_id != s)),
                            inferral_recordings: pick_per_subject(&own, inferral_per_subject)?,
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        for e in &experiments {
            if e.train_recordings.is_empty() {
                return Err(Error::invalid(format!("{kind} scenario ({}) has no training recordings", e.holdout)));
            }
            e.check_leakage(&e.train_recordings)?;
        }
        Ok(Scenario { kind, experiments })
    }
}

/// Generative models together with the recordings they were trained on.
#[derive(Clone, Debug)]
pub struct GenModels<S> {
    pub trained_on: Vec<String>,
    pub models: IntentModelSet<S>,
}

/// Trains the three intent models of one experiment on its training recordings only.
pub fn train_experiment_models<S: Scalar>(
    experiment: &Experiment,
    corpus: &[Recording],
    spec: &GenTrainSpec,
    on_check: &mut dyn FnMut(Intent, &ValidationCheck),
) -> Result<GenModels<S>> {
    let keep: HashSet<&String> = experiment.train_recordings.iter().collect();
    let train: Vec<Recording> = corpus.iter().filter(|r| keep.contains(&r.id())).cloned().collect();
    if train.len() != keep.len() {
        return Err(Error::invalid(format!(
            "experiment {}: {} of {} training recordings found in the corpus",
            experiment.holdout,
            train.len(),
            keep.len()
        )));
    }
    let trained_on: Vec<String> = train.iter().map(Recording::id).collect();
    experiment.check_leakage(&trained_on)?;
    let (models, _) = train_all_intents(spec, &train, on_check)?;
    Ok(GenModels { trained_on, models })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub window_len: usize,
    /// Stride of support and query windows.
    pub window_stride: usize,
    /// Stride of offline windows used to pretrain fine-tune baselines.
    pub offline_stride: usize,
    /// Synthetic windows per intent for the chatemg method.
    pub n_synthetic: usize,
    pub prompt_len: usize,
    pub sampling: SamplingConfig,
    pub inferral_per_subject: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            window_len: DEFAULT_WINDOW_LEN,
            window_stride: 10,
            offline_stride: 50,
            n_synthetic: 1000,
            prompt_len: DEFAULT_PROMPT_LEN,
            sampling: SamplingConfig::default(),
            inferral_per_subject: 3,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_stride == 0 || self.offline_stride == 0 {
            return Err(Error::invalid("window length and strides must be positive"));
        }
        if self.prompt_len == 0 || self.prompt_len >= self.window_len {
            return Err(Error::invalid(format!(
                "prompt length {} must be in [1, window length {})",
                self.prompt_len, self.window_len
            )));
        }
        if self.inferral_per_subject == 0 {
            return Err(Error::invalid("inferral_per_subject must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("window_len", self.window_len.to_string()),
            ("window_stride", self.window_stride.to_string()),
            ("offline_stride", self.offline_stride.to_string()),
            ("n_synthetic", self.n_synthetic.to_string()),
            ("prompt_len", self.prompt_len.to_string()),
            ("temperature", self.sampling.temperature.to_string()),
            ("top_k", self.sampling.top_k.map_or("none".into(), |k| k.to_string())),
            ("sampling_seed", self.sampling.seed.to_string()),
            ("inferral_per_subject", self.inferral_per_subject.to_string()),
            ("alpha", self.alpha.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AccuracyRow {
    pub scenario: ScenarioKind,
    pub classifier: ClassifierKind,
    pub method: Method,
    pub subject: String,
    pub recording: String,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectSummary {
    pub classifier: ClassifierKind,
    pub method: Method,
    pub subject: String,
    pub mean: f64,
    /// Population standard deviation over the subject's recordings.
    pub std: f64,
    pub n: usize,
}

/// One-sided test that chatemg beats `baseline` for one classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub classifier: ClassifierKind,
    pub baseline: Method,
    pub chatemg_mean: f64,
    pub baseline_mean: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    pub rows: Vec<AccuracyRow>,
    pub subjects: Vec<SubjectSummary>,
    pub comparisons: Vec<Comparison>,
    pub alpha: f64,
    /// Resolved settings, in output order.
    pub config: Vec<(String, String)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ScenarioReport {
    /// Aggregates rows into per-subject summaries and chatemg-vs-baseline tests.
    pub fn from_rows(scenario: ScenarioKind, rows: Vec<AccuracyRow>, alpha: f64, config: Vec<(String, String)>) -> Result<Self> {
        let mut groups: BTreeMap<(ClassifierKind, Method, String), Vec<f64>> = BTreeMap::new();
        let mut by_method: BTreeMap<(ClassifierKind, Method), Vec<f64>> = BTreeMap::new();
        for r in &rows {
            groups.entry((r.classifier, r.method, r.subject.clone())).or_default().push(r.accuracy);
            by_method.entry((r.classifier, r.method)).or_default().push(r.accuracy);
        }
        let subjects = groups
            .into_iter()
            .map(|((classifier, method, subject), v)| {
                let (mean, std) = mean_std(&v);
                SubjectSummary {
                    classifier,
                    method,
                    subject,
                    mean,
                    std,
                    n: v.len(),
                }
            })
            .collect();
        let mut comparisons = Vec::new();
        for (&(classifier, method), chat) in by_method.iter().filter(|((_, m), _)| *m == Method::ChatEmg) {
            debug_assert_eq!(method, Method::ChatEmg);
            for (&(c, baseline), base) in &by_method {
                if c != classifier || baseline == Method::ChatEmg {
                    continue;
                }
                let p = wilcoxon_rank_sum_one_sided(chat, base)?;
                comparisons.push(Comparison {
                    classifier,
                    baseline,
                    chatemg_mean: mean_std(chat).0,
                    baseline_mean: mean_std(base).0,
                    p_value: p,
                    significant: p < alpha,
                });
            }
        }
        Ok(ScenarioReport {
            scenario,
            rows,
            subjects,
            comparisons,
            alpha,
            config,
        })
    }

    /// Mean accuracy over every row of one classifier and method.
    pub fn mean(&self, classifier: ClassifierKind, method: Method) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.classifier == classifier && r.method == method)
            .map(|r| r.accuracy)
            .collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.scenario, r.classifier, r.method, r.subject, r.recording, r.accuracy
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("scenario={}\nalpha={}\n", self.scenario, self.alpha);
        s.push_str("\n[config]\n");
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k}={v}");
        }
        s.push_str("\n[subjects]\nclassifier,method,subject,n,mean,std\n");
        for x in &self.subjects {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.6}",
                x.classifier, x.method, x.subject, x.n, x.mean, x.std
            );
        }
        s.push_str("\n[methods]\nclassifier,method,mean\n");
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&(r.classifier, r.method)) {
                seen.push((r.classifier, r.method));
            }
        }
        for (c, m) in seen {
            let _ = writeln!(s, "{c},{m},{:.6}", self.mean(c, m).unwrap_or(f64::NAN));
        }
        s.push_str("\n[tests]\nclassifier,comparison,chatemg_mean,baseline_mean,p_value,significant\n");
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "{},chatemg>{},{:.6},{:.6},{:.6e},{}",
                c.classifier,
                c.baseline,
                c.chatemg_mean,
                c.baseline_mean,
                c.p_value,
                if c.significant { "yes" } else { "no" }
            );
        }
        s
    }

    /// Writes the accuracy table to `csv` and the summary next to it.
    pub fn write(&self, csv: &Path) -> Result<()> {
        if let Some(dir) = csv.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        io::write_string(csv, &self.to_csv())?;
        io::write_string(&summary_path(csv), &self.summary())
    }
}

/// `report.csv` → `report.summary.txt`.
pub fn summary_path(csv: &Path) -> std::path::PathBuf {
    let stem = csv.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.summary.txt"))
}

fn windows_set<S: Scalar>(recs: &[&Recording], len: usize, stride: usize) -> Result<(Vec<Vec<S>>, Vec<Intent>)> {
    let mut w: Vec<EmgWindow> = Vec::new();
    for r in recs {
        w.extend(segment_windows(r, len, stride)?);
    }
    Ok(build_classifier_set(&w))
}

/// Evaluates every classifier and method on every inferral recording.
///
/// `models` holds one entry per experiment and is only consulted for the
/// chatemg method. All leakage checks run before any training.
pub fn run_scenario<S: Scalar>(
    scenario: &Scenario,
    corpus: &[Recording],
    models: &[GenModels<S>],
    classifiers: &[ClfConfig],
    methods: &[Method],
    config: &EvalConfig,
) -> Result<ScenarioReport> {
    config.validate()?;
    if classifiers.is_empty() || methods.is_empty() {
        return Err(Error::invalid("at least one classifier and one method are required"));
    }
    for c in classifiers {
        c.validate()?;
    }
    let by_id: BTreeMap<String, &Recording> = corpus.iter().map(|r| (r.id(), r)).collect();
    let lookup = |id: &String| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("recording {id} is not in the corpus")))
    };
    let use_chatemg = methods.contains(&Method::ChatEmg);
    if use_chatemg && models.len() != scenario.experiments.len() {
        return Err(Error::invalid(format!(
            "{} experiments but {} generative model sets",
            scenario.experiments.len(),
            models.len()
        )));
    }
    for (ei, e) in scenario.experiments.iter().enumerate() {
        e.check_leakage(&e.train_recordings)?;
        if use_chatemg {
            e.check_leakage(&models[ei].trained_on)?;
        }
        for id in e.inferral_recordings.iter().chain(&e.train_recordings) {
            lookup(id)?;
        }
    }

    let mut rows = Vec::new();
    for (ei, e) in scenario.experiments.iter().enumerate() {
        let offline = if methods.contains(&Method::FineTune) {
            let recs: Vec<&Recording> = e.train_recordings.iter().map(lookup).collect::<Result<_>>()?;
            Some(windows_set::<S>(&recs, config.window_len, config.offline_stride)?)
        } else {
            None
        };
        // the transformer adapts from one pretrained network per experiment
        let mut pretrained: BTreeMap<usize, FittedClassifier<S>> = BTreeMap::new();
        if let Some((xo, yo)) = &offline {
            for (ci, c) in classifiers.iter().enumerate() {
                if c.kind == ClassifierKind::Transformer {
                    let cfg = c.reseeded(derive_seed(config.seed, &[0x0ff, ei as u64, ci as u64]));
                    pretrained.insert(ci, fit(&cfg, xo, yo)?);
                }
            }
        }
        for (ri, id) in e.inferral_recordings.iter().enumerate() {
            let rec = lookup(id)?;
            let (support, query) = split_support_query(rec)?;
            let (xs, ys) = windows_set::<S>(&[&support], config.window_len, config.window_stride)?;
            let (xq, yq) = windows_set::<S>(&[&query], config.window_len, config.window_stride)?;
            if xq.is_empty() {
                return Err(Error::invalid(format!("recording {id} has no query windows")));
            }
            let key = [ei as u64, ri as u64];
            let synthetic = if use_chatemg {
                let sampling = SamplingConfig {
                    seed: derive_seed(config.seed, &[0x5a, key[0], key[1]]),
                    ..config.sampling.clone()
                };
                let batches = batch_generate(
                    &models[ei].models,
                    &support,
                    config.n_synthetic,
                    config.prompt_len,
                    config.window_len,
                    &sampling,
                )?;
                let w: Vec<EmgWindow> = batches.into_values().flat_map(|b| b.windows).collect();
                let (mut x, mut y) = (xs.clone(), ys.clone());
                let (xg, yg) = build_classifier_set::<S>(&w);
                x.extend(xg);
                y.extend(yg);
                Some((x, y))
            } else {
                None
            };
            for (ci, c) in classifiers.iter().enumerate() {
                let cfg = c.reseeded(derive_seed(config.seed, &[0xc1f, key[0], key[1], ci as u64]));
                for &method in methods {
                    let clf = match method {
                        Method::SelfOnly => fit(&cfg, &xs, &ys)?,
                        Method::FineTune => {
                            let (xo, yo) = offline.as_ref().expect("offline set built for fine_tune");
                            match pretrained.get(&ci) {
                                Some(p) => fine_tune(FineTuneFrom::Pretrained(p), (xo, yo), (&xs, &ys))?,
                                None => fine_tune(FineTuneFrom::Config(&cfg), (xo, yo), (&xs, &ys))?,
                            }
                        }
                        Method::ChatEmg => {
                            let (x, y) = synthetic.as_ref().expect("synthetic set built for chatemg");
                            fit(&cfg, x, y)?
                        }
                    };
                    rows.push(AccuracyRow {
                        scenario: scenario.kind,
                        classifier: c.kind,
                        method,
                        subject: rec.meta().subject_id.clone(),
                        recording: id.clone(),
                        accuracy: clf.accuracy(&xq, &yq)?,
                    });
                }
            }
        }
    }

    let mut snapshot: Vec<(String, String)> = config
        .to_pairs()
        .into_iter()
        .map(|(k, v)| (format!("eval.{k}"), v))
        .collect();
    snapshot.push((
        "eval.classifiers".into(),
        classifiers.iter().map(|c| c.kind.as_str()).collect::<Vec<_>>().join(","),
    ));
    snapshot.push((
        "eval.methods".into(),
        methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(","),
    ));
    ScenarioReport::from_rows(scenario.kind, rows, config.alpha, snapshot)
}

#[cfg(test)]
mod tests;
