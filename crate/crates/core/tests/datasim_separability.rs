use chatemg::classifiers::{fit, ClassifierKind, ClfConfig};
use chatemg::dataset::build_classifier_set;
use chatemg::datasim::{simulate_recording, CorpusSpec, SubjectProfile};
use chatemg::signal::{segment_windows, split_support_query, Condition, DEFAULT_WINDOW_LEN};
use chatemg::{Intent, Recording, RecordingMeta};

fn recording(spec: &CorpusSpec, profile: &SubjectProfile, subject: usize, seed: u64) -> Recording {
    let meta = RecordingMeta {
        subject_id: profile.subject_id.clone(),
        session_index: 1,
        condition: Condition::ALL[0],
        recording_index: 1,
    };
    simulate_recording(profile, &spec.condition_effect(subject), meta, &spec.params, seed).unwrap()
}

fn features(rec: &Recording) -> (Vec<Vec<f64>>, Vec<Intent>) {
    build_classifier_set(&segment_windows(rec, DEFAULT_WINDOW_LEN, 10).unwrap())
}

/// (own-query accuracy per subject, mean accuracy on every other subject's query)
fn transfer(spec: &CorpusSpec) -> (Vec<f64>, f64) {
    let cfg = ClfConfig::new(ClassifierKind::Lda);
    let n = spec.n_subjects;
    let split: Vec<(Recording, Recording)> = (1..=n)
        .map(|s| split_support_query(&recording(spec, &spec.profile(s), s, 100 + s as u64)).unwrap())
        .collect();
    let mut own = Vec::new();
    let mut cross = 0.0;
    for a in 0..n {
        let (xs, ys) = features(&split[a].0);
        let clf = fit(&cfg, &xs, &ys).unwrap();
        for b in 0..n {
            let (xq, yq) = features(&split[b].1);
            let acc = clf.accuracy(&xq, &yq).unwrap();
            if a == b {
                own.push(acc);
            } else {
                cross += acc;
            }
        }
    }
    (own, cross / (n * (n - 1)) as f64)
}

#[test]
fn subjects_are_separable_but_do_not_transfer() {
    for seed in 0..8 {
        let spec = CorpusSpec {
            master_seed: seed,
            ..Default::default()
        };
        let (own, cross) = transfer(&spec);
        assert!(own.iter().all(|&a| a >= 0.9), "seed {seed}: own-subject accuracy {own:?}");
        assert!(cross <= 0.8, "seed {seed}: cross-subject accuracy {cross}");
    }
}

#[test]
fn clean_profiles_are_distinguishable() {
    let spec = CorpusSpec::default();
    let cfg = ClfConfig::new(ClassifierKind::Lda);
    for s in 1..=spec.n_subjects {
        let mut p = spec.profile(s);
        p.noise = 0.0;
        p.noise_prop = 0.0;
        p.drift_rate = 0.0;
        let (support, query) = split_support_query(&recording(&spec, &p, s, 7)).unwrap();
        let (xs, ys) = features(&support);
        let clf = fit(&cfg, &xs, &ys).unwrap();
        let (xq, yq) = features(&query);
        assert!(clf.accuracy(&xq, &yq).unwrap() >= 0.9, "subject {s}");
    }
}
