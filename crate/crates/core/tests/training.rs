use dcmn::crf::argmax_rows;
use dcmn::dataio::{Recording, RoomVocabulary, Sample};
use dcmn::model::{forward_batch, Batch, Variant};
use dcmn::simulator::{make_dataset, SimConfig};
use dcmn::train::{
    evaluate, fit_training_norm, make_samples, predict, resume_model, train_model, train_run, RunSpec, Start, TrainConfig,
    TrainRun,
};
use dcmn::Error;

fn samples(seconds: usize) -> Vec<Sample> {
    let recs = make_dataset(&SimConfig::cohort(1, 0, 1, seconds, 11)).unwrap().1;
    let refs: Vec<&Recording> = recs.iter().collect();
    let norm = fit_training_norm(&refs).unwrap();
    make_samples(&refs, &norm, 10, 10).unwrap()
}

fn overfit_config(variant: Variant, epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        d_model: vec![16],
        epochs: vec![epochs],
        learning_rate: vec![lr],
        heads: 2,
        dropout: 0.0,
        batch_size: 5,
        patience: 0,
        validation_fraction: 0.0,
        variant,
        ..TrainConfig::default()
    }
}

fn run(cfg: &TrainConfig, data: &[Sample]) -> Result<TrainRun, Error> {
    let rooms = RoomVocabulary::default().len();
    let spec = RunSpec {
        cfg,
        model: cfg.model_config(cfg.d_model[0], rooms),
        learning_rate: cfg.learning_rate[0],
        forbidden: &[],
        seed: 5,
    };
    train_run(&spec, data, &[], Start::Fresh, &cfg.epochs)
}

#[test]
fn overfits_fifty_windows() {
    let data = samples(500);
    assert_eq!(data.len(), 50);
    let cfg = overfit_config(Variant::Full, 100, 0.01);
    let out = run(&cfg, &data).unwrap();
    let snap = &out.snapshots[0];
    let model = cfg.model_config(16, 6);
    let acc = evaluate(&snap.params, &model, &data, &[]).unwrap().accuracy;
    assert!(acc >= 99.0, "training accuracy {acc}");
    // smoothed loss falls over the first ten epochs
    let first: f64 = out.log[..3].iter().map(|l| l.train_loss).sum();
    let later: f64 = out.log[7..10].iter().map(|l| l.train_loss).sum();
    assert!(later < first, "{later} >= {first}");
}

#[test]
fn same_seed_same_loss() {
    let data = samples(300);
    let cfg = TrainConfig {
        dropout: 0.15,
        ..overfit_config(Variant::Full, 3, 0.01)
    };
    let a = run(&cfg, &data).unwrap();
    let b = run(&cfg, &data).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.snapshots[0].params, b.snapshots[0].params);
}

#[test]
fn huge_learning_rate_is_reported_as_divergence() {
    let data = samples(300);
    let cfg = overfit_config(Variant::Full, 20, 1e3);
    match run(&cfg, &data) {
        Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected divergence, got {:?}", other.map(|r| r.log.len())),
    }
}

#[test]
fn decoding_is_repeatable_and_no_crf_is_argmax() {
    let data = samples(200);
    for variant in [Variant::Full, Variant::NoCrf] {
        let cfg = overfit_config(variant, 2, 0.01);
        let out = run(&cfg, &data).unwrap();
        let model = cfg.model_config(16, 6);
        let p = &out.snapshots[0].params;
        let first = evaluate(p, &model, &data, &[]).unwrap();
        assert_eq!(first, evaluate(p, &model, &data, &[]).unwrap());
        if variant == Variant::NoCrf {
            let pred = predict(p, &model, &data, &[]).unwrap();
            for (s, yhat) in data.iter().zip(&pred) {
                let batch = Batch::from_samples(&[s], &model).unwrap();
                let (fwd, _) = forward_batch::<rand_chacha::ChaCha8Rng>(p, &model, &batch, None).unwrap();
                assert_eq!(yhat, &argmax_rows(&fwd.emissions));
            }
        }
    }
}

#[test]
fn grid_keeps_the_best_cell_and_resume_continues_epochs() {
    let recs = make_dataset(&SimConfig::cohort(2, 0, 1, 400, 3)).unwrap().1;
    let refs: Vec<&Recording> = recs.iter().collect();
    let vocab = RoomVocabulary::default();
    let cfg = TrainConfig {
        d_model: vec![8, 16],
        epochs: vec![1, 3],
        learning_rate: vec![0.01],
        heads: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let trained = train_model(&refs, &vocab, &cfg, &[], 9).unwrap();
    assert_eq!(trained.fitted.grid.len(), 4);
    let best = trained.fitted.grid.iter().map(|g| g.val_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(trained.fitted.selected.val_accuracy, best);
    assert!(trained.fitted.log.iter().all(|l| l.epoch <= trained.fitted.selected.epochs));
    let ckpt = &trained.checkpoint;
    assert_eq!(ckpt.epoch, trained.fitted.selected.best_epoch);
    let resumed = resume_model(ckpt, &refs, &vocab, &TrainConfig { epochs: vec![2], ..cfg }, 9).unwrap();
    let epochs: Vec<usize> = resumed.fitted.log.iter().map(|l| l.epoch).collect();
    assert_eq!(epochs, vec![ckpt.epoch + 1, ckpt.epoch + 2]);
    assert!(resumed.fitted.selected.val_accuracy >= trained.fitted.selected.val_accuracy - 1e-12);
}
