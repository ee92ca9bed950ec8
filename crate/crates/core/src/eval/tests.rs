use super::*;
use crate::classifiers::RfConfig;
use crate::datasim::{simulate_corpus, CorpusSpec, SimParams};
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;
use std::sync::OnceLock;

const CUE: usize = 40;

fn corpus() -> &'static [Recording] {
    static C: OnceLock<Vec<Recording>> = OnceLock::new();
    C.get_or_init(|| {
        simulate_corpus(&CorpusSpec {
            n_subjects: 3,
            master_seed: 11,
            // quiet enough that the classes separate from a 15-window support set
            params: SimParams {
                lead_in_frames: CUE,
                cue_frames: CUE,
                noise: 1.0,
                noise_prop: 0.03,
                ..Default::default()
            },
            ..Default::default()
        })
        .unwrap()
    })
}

fn eval_config() -> EvalConfig {
    EvalConfig {
        window_len: 32,
        window_stride: 4,
        offline_stride: 16,
        n_synthetic: 8,
        prompt_len: 20,
        sampling: SamplingConfig {
            top_k: Some(5),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn gen_spec() -> GenTrainSpec {
    GenTrainSpec {
        model: ModelConfig {
            context_len: 32,
            ..ModelConfig::tiny()
        },
        train: TrainConfig {
            learning_rate: 3e-2,
            batch_size: 16,
            max_steps: Some(400),
            max_epochs: 1000,
            patience: 10,
            val_interval: 100,
            val_examples: Some(16),
            ..Default::default()
        },
        stride: 8,
        ..Default::default()
    }
}

fn classifiers() -> Vec<ClfConfig> {
    let mut rf = ClfConfig::new(ClassifierKind::Rf);
    rf.rf = RfConfig {
        n_trees: 15,
        ..Default::default()
    };
    vec![ClfConfig::new(ClassifierKind::Lda), rf]
}

fn models_for(s: &Scenario) -> Vec<GenModels<f32>> {
    s.experiments
        .iter()
        .map(|e| train_experiment_models(e, corpus(), &gen_spec(), &mut |_, _| {}).unwrap())
        .collect()
}

#[test]
fn scenario_recording_sets() {
    let c = corpus();
    let cond = Scenario::build(ScenarioKind::Condition, c, 3).unwrap();
    assert_eq!(cond.experiments.len(), 1);
    let e = &cond.experiments[0];
    assert_eq!(e.train_recordings.len(), 3 * 2 * 2);
    assert_eq!(e.inferral_recordings.len(), 3 * 3);
    let meta = |id: &String| c.iter().find(|r| &r.id() == id).unwrap().meta().clone();
    assert!(e.train_recordings.iter().all(|id| meta(id).condition == Condition::ALL[0]));
    assert!(e.inferral_recordings.iter().all(|id| meta(id).condition == Condition::ALL[2]));

    let sess = Scenario::build(ScenarioKind::Session, c, 3).unwrap();
    let e = &sess.experiments[0];
    assert!(e.train_recordings.iter().all(|id| meta(id).session_index == 1));
    assert!(e.inferral_recordings.iter().all(|id| meta(id).session_index == 2));

    let subj = Scenario::build(ScenarioKind::Subject, c, 3).unwrap();
    assert_eq!(subj.experiments.len(), 3);
    for e in &subj.experiments {
        assert!(e.train_recordings.iter().all(|id| meta(id).subject_id != e.holdout));
        assert!(e.inferral_recordings.iter().all(|id| meta(id).subject_id == e.holdout));
        assert_eq!(e.train_recordings.len(), 2 * 16);
        assert_eq!(e.inferral_recordings.len(), 3);
        e.check_leakage(&e.train_recordings).unwrap();
    }
    assert!(Scenario::build(ScenarioKind::Subject, c, 17).is_err());
    assert_eq!("session".parse::<ScenarioKind>().unwrap(), ScenarioKind::Session);
    assert_eq!("fine_tune".parse::<Method>().unwrap(), Method::FineTune);
    assert!("both".parse::<Method>().is_err());
}

#[test]
fn leakage_aborts_before_training() {
    let s = Scenario::build(ScenarioKind::Subject, corpus(), 3).unwrap();
    let mut models = vec![];
    for e in &s.experiments {
        let leaky = Experiment {
            train_recordings: e.inferral_recordings.clone(),
            ..e.clone()
        };
        let set = IntentModelSet::new(
            Intent::ALL
                .into_iter()
                .map(|i| (i, crate::model::ChatEmg::<f32>::init(gen_spec().model, 0).unwrap()))
                .collect(),
        )
        .unwrap();
        models.push(GenModels {
            trained_on: leaky.train_recordings.clone(),
            models: set,
        });
        assert!(matches!(
            train_experiment_models::<f32>(&leaky, corpus(), &gen_spec(), &mut |_, _| panic!("trained")),
            Err(Error::Leakage(_))
        ));
    }
    // a huge transformer would take minutes; the check must fire first
    let mut big = ClfConfig::new(ClassifierKind::Transformer);
    big.transformer.epochs = 10_000;
    let r = run_scenario(&s, corpus(), &models, &[big], &[Method::ChatEmg], &eval_config());
    assert!(matches!(r, Err(Error::Leakage(_))));
}

#[test]
fn report_shape_and_aggregation() {
    let s = Scenario::build(ScenarioKind::Condition, corpus(), 3).unwrap();
    let models = models_for(&s);
    let methods = Method::ALL;
    let report = run_scenario(&s, corpus(), &models, &classifiers(), &methods, &eval_config()).unwrap();
    assert_eq!(report.rows.len(), 2 * 3 * 3 * 3);
    assert!(report.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    for sum in &report.subjects {
        let v: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.classifier == sum.classifier && r.method == sum.method && r.subject == sum.subject)
            .map(|r| r.accuracy)
            .collect();
        assert_eq!(v.len(), 3);
        assert!((sum.mean - v.iter().sum::<f64>() / 3.0).abs() <= 1e-12);
        assert!(sum.std >= 0.0);
    }
    // chatemg vs self and fine_tune, per classifier
    assert_eq!(report.comparisons.len(), 4);
    assert!(report.comparisons.iter().all(|c| c.p_value > 0.0 && c.p_value <= 1.0));
    assert!(report
        .comparisons
        .iter()
        .all(|c| c.significant == (c.p_value < report.alpha)));

    // separable oracle data: the real-data baselines do well
    for kind in [ClassifierKind::Lda, ClassifierKind::Rf] {
        for m in methods {
            let acc = report.mean(kind, m).unwrap();
            assert!((0.0..=1.0).contains(&acc));
            if m != Method::ChatEmg {
                assert!(acc >= 0.9, "{kind} {m}: {acc}\n{}", report.summary());
            }
        }
    }

    let csv = report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 1 + report.rows.len());
    let summary = report.summary();
    assert!(summary.contains("chatemg>self"));
    assert!(summary.contains("eval.n_synthetic=8"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out/report.csv");
    report.write(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), csv);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/report.summary.txt")).unwrap(), summary);

    let again = run_scenario(&s, corpus(), &models, &classifiers(), &methods, &eval_config()).unwrap();
    assert_eq!(again, report);
}

#[test]
fn self_only_needs_no_models() {
    let s = Scenario::build(ScenarioKind::Session, corpus(), 3).unwrap();
    let r = run_scenario::<f64>(&s, corpus(), &[], &classifiers()[..1], &[Method::SelfOnly], &eval_config()).unwrap();
    assert_eq!(r.rows.len(), 3 * 3);
    assert!(r.comparisons.is_empty());
    assert!(run_scenario::<f64>(&s, corpus(), &[], &classifiers(), &[Method::ChatEmg], &eval_config()).is_err());
}

#[test]
fn report_from_rows_pairs_tests_by_classifier() {
    let mk = |classifier, method, subject: &str, i: usize, accuracy| AccuracyRow {
        scenario: ScenarioKind::Subject,
        classifier,
        method,
        subject: subject.into(),
        recording: format!("{subject}_{i}"),
        accuracy,
    };
    let mut rows = vec![];
    for (si, s) in ["S1", "S2"].iter().enumerate() {
        for i in 0..3 {
            let base = 0.5 + 0.1 * si as f64 + 0.01 * i as f64;
            rows.push(mk(ClassifierKind::Lda, Method::SelfOnly, s, i, base));
            rows.push(mk(ClassifierKind::Lda, Method::ChatEmg, s, i, base + 0.2));
        }
    }
    let r = ScenarioReport::from_rows(ScenarioKind::Subject, rows, 0.05, vec![]).unwrap();
    assert_eq!(r.subjects.len(), 4);
    let s1 = r
        .subjects
        .iter()
        .find(|x| x.subject == "S1" && x.method == Method::SelfOnly)
        .unwrap();
    assert!((s1.mean - 0.51).abs() < 1e-12);
    assert!((s1.std - (2.0f64 / 3.0).sqrt() * 0.01).abs() < 1e-12);
    assert_eq!(r.comparisons.len(), 1);
    let c = &r.comparisons[0];
    assert_eq!(c.baseline, Method::SelfOnly);
    assert_eq!(c.p_value, wilcoxon_rank_sum_one_sided(
        &[0.7, 0.71, 0.72, 0.8, 0.81, 0.82],
        &[0.5, 0.51, 0.52, 0.6, 0.61, 0.62]
    ).unwrap());
}
