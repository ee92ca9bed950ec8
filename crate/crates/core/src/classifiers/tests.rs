use super::*;
use crate::signal::CHANNELS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three clusters in `T×8` space: class `c` raises channel `c` over the whole window.
fn clusters(n_per: usize, t: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<Intent>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 0..n_per {
        for intent in Intent::ALL {
            let _ = k;
            x.push(
                (0..t * CHANNELS)
                    .map(|j| {
                        let base = if j % CHANNELS == intent.index() { 0.6 } else { -0.2 };
                        base + rng.gen_range(-noise..noise)
                    })
                    .collect(),
            );
            y.push(intent);
        }
    }
    (x, y)
}

fn quick(kind: ClassifierKind) -> ClfConfig {
    let mut c = ClfConfig::new(kind);
    c.rf.n_trees = 15;
    c.transformer = TransformerClfConfig {
        n_embed: 16,
        n_heads: 4,
        epochs: 15,
        batch_size: 8,
        learning_rate: 3e-3,
        ..Default::default()
    };
    c
}

#[test]
fn separable_clusters_fit_perfectly() {
    let (x, y) = clusters(8, 16, 0.3, 1);
    for kind in ClassifierKind::ALL {
        let clf = fit(&quick(kind), &x, &y).unwrap();
        assert_eq!(clf.accuracy(&x, &y).unwrap(), 1.0, "{kind}");
        let (xt, yt) = clusters(4, 16, 0.3, 2);
        assert_eq!(clf.accuracy(&xt, &yt).unwrap(), 1.0, "{kind} held out");
    }
}

#[test]
fn full_size_windows_flatten_to_2048() {
    let (x, y) = clusters(3, 256, 0.3, 3);
    assert_eq!(x[0].len(), 2048);
    let Fitted::Lda(m) = fit(&quick(ClassifierKind::Lda), &x, &y).unwrap().model else {
        unreachable!()
    };
    assert_eq!(m.decision(&x[..1]).unwrap()[0].len(), 3);
    assert!(m.decision(&[vec![0.0; 2047]]).is_err());
}

#[test]
fn fitting_is_deterministic() {
    let (x, y) = clusters(6, 8, 0.8, 4);
    let (probe, _) = clusters(5, 8, 1.0, 5);
    for kind in ClassifierKind::ALL {
        let a = fit(&quick(kind), &x, &y).unwrap();
        let b = fit(&quick(kind), &x, &y).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
    }
}

#[test]
fn predict_preserves_order_and_length() {
    let (x, y) = clusters(4, 8, 0.3, 6);
    for kind in ClassifierKind::ALL {
        let clf = fit(&quick(kind), &x, &y).unwrap();
        assert!(clf.predict(&[]).unwrap().is_empty());
        let rev: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let mut p = clf.predict(&rev).unwrap();
        p.reverse();
        assert_eq!(p, clf.predict(&x).unwrap());
    }
}

#[test]
fn lda_rejects_single_class() {
    let (x, y) = clusters(4, 4, 0.3, 7);
    let (xs, ys): (Vec<_>, Vec<_>) = x.into_iter().zip(y).filter(|(_, l)| *l == Intent::Open).unzip();
    assert!(matches!(
        fit(&quick(ClassifierKind::Lda), &xs, &ys),
        Err(Error::DegenerateTrainingSet(_))
    ));
    // the forest and transformer accept one class and predict it
    let clf = fit(&quick(ClassifierKind::Rf), &xs, &ys).unwrap();
    assert!(clf.predict(&xs).unwrap().iter().all(|&l| l == Intent::Open));
}

#[test]
fn accuracy_examples() {
    use Intent::*;
    assert_eq!(accuracy(&[Open, Close], &[Open, Close]).unwrap(), 1.0);
    assert_eq!(accuracy(&[Open, Close], &[Close, Relax]).unwrap(), 0.0);
    assert_eq!(accuracy(&[Open, Close, Relax, Open], &[Open, Open, Relax, Close]).unwrap(), 0.5);
    assert!(accuracy(&[], &[]).is_err());
    assert!(accuracy(&[Open], &[Open, Open]).is_err());
}

#[test]
fn accuracy_invariant_under_joint_permutation() {
    let (x, y) = clusters(5, 8, 1.2, 8);
    let clf = fit(&quick(ClassifierKind::Lda), &x, &y).unwrap();
    let mut idx: Vec<usize> = (0..x.len()).collect();
    use rand::seq::SliceRandom;
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let xp: Vec<_> = idx.iter().map(|&i| x[i].clone()).collect();
    let yp: Vec<_> = idx.iter().map(|&i| y[i]).collect();
    assert_eq!(clf.accuracy(&x, &y).unwrap(), clf.accuracy(&xp, &yp).unwrap());
}

#[test]
fn union_fine_tune_with_empty_support_equals_offline_fit() {
    let (x, y) = clusters(5, 8, 0.8, 9);
    for kind in [ClassifierKind::Lda, ClassifierKind::Rf] {
        let cfg = quick(kind);
        let plain = fit(&cfg, &x, &y).unwrap();
        let tuned = fine_tune(FineTuneFrom::Pretrained(&plain), (&x, &y), (&[], &[])).unwrap();
        assert_eq!(plain, tuned);
        let from_cfg = fine_tune(FineTuneFrom::Config(&cfg), (&x, &y), (&[], &[])).unwrap();
        assert_eq!(plain, from_cfg);
    }
}

#[test]
fn transformer_zero_epoch_fine_tune_is_identity() {
    let (x, y) = clusters(4, 8, 0.5, 10);
    let mut cfg = quick(ClassifierKind::Transformer);
    cfg.transformer.fine_tune_epochs = 0;
    let pre = fit(&cfg, &x, &y).unwrap();
    let (xs, ys) = clusters(2, 8, 0.5, 11);
    let tuned = fine_tune(FineTuneFrom::Pretrained(&pre), (&x, &y), (&xs, &ys)).unwrap();
    assert_eq!(pre, tuned);
}

#[test]
fn fine_tune_on_in_distribution_support_keeps_accuracy() {
    let (x, y) = clusters(10, 8, 1.0, 12);
    let (xs, ys) = clusters(3, 8, 1.0, 13);
    let (xv, yv) = clusters(60, 8, 1.0, 14);
    for kind in ClassifierKind::ALL {
        let cfg = quick(kind);
        let pre = fit(&cfg, &x, &y).unwrap();
        let tuned = fine_tune(FineTuneFrom::Pretrained(&pre), (&x, &y), (&xs, &ys)).unwrap();
        let a = pre.accuracy(&xv, &yv).unwrap();
        let b = tuned.accuracy(&xv, &yv).unwrap();
        assert!(b >= a - 0.05, "{kind}: {a} -> {b}");
    }
}

#[test]
fn synthetic_windows_are_ordinary_training_data() {
    use crate::dataset::build_classifier_set;
    use crate::signal::{EmgWindow, TokenMatrix, WindowSource};
    let mk = |intent: Intent, level: u16| EmgWindow {
        data: TokenMatrix::from_flat(
            (0..16 * CHANNELS)
                .map(|j| if j % CHANNELS == intent.index() { level } else { 100 + (j % 7) as u16 })
                .collect(),
        )
        .unwrap(),
        intent,
        source: WindowSource {
            recording_id: "x".into(),
            start: 0,
        },
    };
    let support: Vec<EmgWindow> = Intent::ALL.iter().flat_map(|&i| [mk(i, 700), mk(i, 650)]).collect();
    let synthetic: Vec<EmgWindow> = Intent::ALL.iter().map(|&i| mk(i, 720)).collect();
    let all: Vec<EmgWindow> = support.iter().chain(&synthetic).cloned().collect();
    let (xa, ya) = build_classifier_set::<f64>(&support);
    let (xb, yb) = build_classifier_set::<f64>(&all);
    let cfg = quick(ClassifierKind::Rf);
    assert_eq!(fit(&cfg, &xa, &ya).unwrap().accuracy(&xa, &ya).unwrap(), 1.0);
    assert_eq!(fit(&cfg, &xb, &yb).unwrap().accuracy(&xb, &yb).unwrap(), 1.0);
}

#[test]
fn save_load_round_trip() {
    let (x, y) = clusters(5, 8, 0.8, 15);
    let dir = tempfile::tempdir().unwrap();
    for kind in ClassifierKind::ALL {
        let xf: Vec<Vec<f32>> = x.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let mut cfg = quick(kind);
        cfg.balance_classes = kind == ClassifierKind::Rf;
        let clf = fit(&cfg, &xf, &y).unwrap();
        let path = dir.path().join(format!("{kind}.clf"));
        clf.save(&path).unwrap();
        let back = FittedClassifier::<f32>::load(&path).unwrap();
        assert_eq!(back.config, clf.config);
        assert_eq!(back.predict(&xf).unwrap(), clf.predict(&xf).unwrap());
        if kind != ClassifierKind::Lda {
            assert_eq!(back, clf);
        }
    }
    let mut c = crate::container::Container::new("other");
    c.set("kind", "lda");
    assert!(FittedClassifier::<f32>::from_container(&c).is_err());
}

#[test]
fn transformer_gradients_match_finite_differences() {
    let cfg = TransformerClfConfig {
        n_embed: 8,
        n_heads: 2,
        mlp_layers: 3,
        seed: 3,
        ..Default::default()
    };
    let mut m = TransformerClassifier::<f64>::init(&cfg, 6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    m.params_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    let x: Vec<f64> = (0..6 * CHANNELS).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let label = Intent::Close;
    let mut g = vec![0.0; m.num_params()];
    m.loss_and_grad(&x, label, 1.0, &mut g).unwrap();
    let h = 1e-5;
    let loss = |m: &TransformerClassifier<f64>| {
        let mut scratch = vec![0.0; m.num_params()];
        m.loss_and_grad(&x, label, 1.0, &mut scratch).unwrap()
    };
    for (name, slot) in m.tensor_names() {
        let mut fd = Vec::with_capacity(slot.len);
        for k in slot.offset..slot.offset + slot.len {
            let orig = m.params()[k];
            m.params_mut()[k] = orig + h;
            let up = loss(&m);
            m.params_mut()[k] = orig - h;
            let down = loss(&m);
            m.params_mut()[k] = orig;
            fd.push((up - down) / (2.0 * h));
        }
        let an = &g[slot.offset..slot.offset + slot.len];
        let diff: f64 = an.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        assert!(scale > 0.0, "{name} has no gradient");
        assert!(diff / scale < 1e-4, "{name}: relative error {}", diff / scale);
    }
}

#[test]
fn kind_parsing() {
    for k in ClassifierKind::ALL {
        assert_eq!(k.as_str().parse::<ClassifierKind>().unwrap(), k);
    }
    assert!("svm".parse::<ClassifierKind>().is_err());
}
