use dpnmt::corpus::{generate_synthetic_corpus, GeneratorConfig};
use dpnmt::data::{InputSpec, SourceView, Vocabularies};
use dpnmt::model::init_parameters;
use dpnmt::nmt::{AttentionVariant, Batch, EncodedExample, ModelConfig, ReconstructorMode};
use dpnmt::training::{joint_loss, loss_log_tsv, train, TrainHooks, TrainingConfig};

fn encoded(cfg: &ModelConfig, view: SourceView, n: usize) -> (Vocabularies, Vec<EncodedExample>) {
    let gc = GeneratorConfig {
        train_size: n,
        dev_size: 0,
        test_size: 0,
        ..Default::default()
    };
    let c = generate_synthetic_corpus(&gc, 11).unwrap();
    let v = Vocabularies::build(&c.train, &gc.lexicon(), 128).unwrap();
    let spec = InputSpec {
        view,
        mode: cfg.mode,
        joint_prediction: cfg.joint_prediction,
    };
    let ex = c
        .train
        .iter()
        .map(|e| spec.encode(&v, e.gold.as_ref().unwrap(), Some(&e.target)).unwrap())
        .collect();
    (v, ex)
}

fn small(mode: ReconstructorMode, attention: AttentionVariant, joint: bool) -> ModelConfig {
    ModelConfig {
        emb: 32,
        hidden: 32,
        mode,
        attention,
        joint_prediction: joint,
        ..Default::default()
    }
}

#[test]
fn loss_logs_are_bitwise_reproducible() {
    let base = small(ReconstructorMode::Shared, AttentionVariant::EncToDec, true);
    let (v, ex) = encoded(&base, SourceView::DpMarkers, 96);
    let cfg = v.model_config(&base);
    let tc = TrainingConfig {
        max_epochs: 2,
        ..Default::default()
    };
    let run = || {
        let out = train(init_parameters(&cfg, 5).unwrap(), &cfg, &tc, &ex, TrainHooks::default()).unwrap();
        (loss_log_tsv(&out.log), out.last)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert_eq!(a.lines().count(), 1 + 2 * 6);
    assert!(a.starts_with("step\tlikelihood\treconstruction\tprediction\ttotal\n"));
}

#[test]
fn zero_learning_rate_training_changes_nothing() {
    let base = small(ReconstructorMode::None, AttentionVariant::Independent, false);
    let (v, ex) = encoded(&base, SourceView::DpMarkers, 32);
    let cfg = v.model_config(&base);
    let store = init_parameters(&cfg, 6).unwrap();
    let tc = TrainingConfig {
        lr: 0.0,
        max_epochs: 1,
        ..Default::default()
    };
    let out = train(store.clone(), &cfg, &tc, &ex, TrainHooks::default()).unwrap();
    assert_eq!(out.last, store);
}

#[test]
fn dev_scorer_selects_best_and_stops_early() {
    let base = small(ReconstructorMode::None, AttentionVariant::Independent, false);
    let (v, ex) = encoded(&base, SourceView::Plain, 32);
    let cfg = v.model_config(&base);
    let tc = TrainingConfig {
        max_epochs: 20,
        patience: 2,
        ..Default::default()
    };
    let calls = std::cell::Cell::new(0);
    let hooks = TrainHooks {
        dev_score: Some(Box::new(|_| {
            calls.set(calls.get() + 1);
            // Peaks at the second evaluation.
            Ok(if calls.get() == 2 { 1.0 } else { 0.0 })
        })),
        ..Default::default()
    };
    let out = train(init_parameters(&cfg, 7).unwrap(), &cfg, &tc, &ex, hooks).unwrap();
    assert!(out.stopped_early);
    assert_eq!(out.evaluations.len(), 4);
    assert_ne!(out.best, out.last);
}

#[test]
fn first_epoch_lowers_the_loss_for_every_variant() {
    let variants = [
        (small(ReconstructorMode::None, AttentionVariant::Independent, false), SourceView::DpMarkers),
        (small(ReconstructorMode::Separate, AttentionVariant::Independent, false), SourceView::DpWords),
        (small(ReconstructorMode::Shared, AttentionVariant::Independent, false), SourceView::DpMarkers),
        (small(ReconstructorMode::Shared, AttentionVariant::EncToDec, true), SourceView::DpMarkers),
        (small(ReconstructorMode::Shared, AttentionVariant::DecToEnc, true), SourceView::DpMarkers),
    ];
    for (base, view) in variants {
        let (v, ex) = encoded(&base, view, 5000);
        let cfg = v.model_config(&base);
        let store = init_parameters(&cfg, 8).unwrap();
        let probe = Batch::from_examples(&ex[..64]).unwrap();
        let before = joint_loss(&store, &cfg, &probe).unwrap().total;
        let tc = TrainingConfig {
            max_epochs: 1,
            ..Default::default()
        };
        let out = train(store, &cfg, &tc, &ex, TrainHooks::default()).unwrap();
        let after = joint_loss(&out.last, &cfg, &probe).unwrap().total;
        assert!(after < before, "{} {}: {before} -> {after}", cfg.mode, cfg.attention);
    }
}
