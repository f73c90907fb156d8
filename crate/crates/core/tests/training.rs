use ultrastf::data::{gen_synthetic, make_windows, split_622, SyntheticSpec, TrendKind, WindowedDataset};
use ultrastf::models::{checkpoint, ModelConfig};
use ultrastf::training::{evaluate_mae, train, LossKind, OptimizerKind, TrainConfig};

fn datasets(trend: TrendKind, noise: f64, t_in: usize, t_out: usize) -> (WindowedDataset, WindowedDataset) {
    let spec = SyntheticSpec {
        period: 6,
        length: 600,
        channels: 2,
        trend,
        trend_magnitude: 0.002,
        noise_std: noise,
        seed: 5,
        ..Default::default()
    };
    let parts = split_622(&gen_synthetic(&spec).unwrap()).unwrap();
    (
        make_windows(&parts[0], t_in, t_out, 1).unwrap(),
        make_windows(&parts[1], t_in, t_out, 1).unwrap(),
    )
}

#[test]
fn linear_model_learns_an_exact_periodic_continuation() {
    let (tr, va) = datasets(TrendKind::None, 0.0, 24, 6);
    let tc = TrainConfig {
        epochs: 200,
        learning_rate: 1e-2,
        loss: LossKind::Mse,
        patience: 0,
        seed: 1,
        ..Default::default()
    };
    let (_, report) = train(&ModelConfig::linear(24, 6), &tr, &va, &tc).unwrap();
    assert!(report.best_val_mae < 1e-3, "val MAE {}", report.best_val_mae);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let (tr, va) = datasets(TrendKind::PhaseDependent, 0.05, 24, 6);
    let config = ModelConfig::ultrastf(24, 6, 6, 4, 2);
    let tc = TrainConfig {
        epochs: 3,
        batch_size: 40,
        seed: 9,
        ..Default::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&config, &tr, &va, &tc).unwrap())
    };
    let (m1, r1) = run(1);
    let (m4, r4) = run(4);
    assert_eq!(m1, m4);
    assert_eq!(r1.epochs, r4.epochs);
    assert_eq!(checkpoint::encode(&m1).unwrap(), checkpoint::encode(&m4).unwrap());

    let other = TrainConfig { seed: 10, ..tc.clone() };
    let (m_other, _) = train(&config, &tr, &va, &other).unwrap();
    assert_ne!(m1, m_other);
}

#[test]
fn full_batch_descent_on_a_convex_loss_never_increases() {
    let (tr, va) = datasets(TrendKind::Linear, 0.1, 12, 6);
    let tc = TrainConfig {
        epochs: 40,
        batch_size: tr.len(),
        learning_rate: 0.01,
        optimizer: OptimizerKind::Sgd,
        momentum: 0.0,
        loss: LossKind::Mse,
        patience: 0,
        seed: 2,
        ..Default::default()
    };
    for config in [ModelConfig::linear(12, 6), ModelConfig::sparsetsf(12, 6, 6)] {
        let (_, report) = train(&config, &tr, &va, &tc).unwrap();
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
        for pair in losses[5..].windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "{config:?}: {losses:?}");
        }
        assert!(losses.last().unwrap() < &losses[0]);
    }
}

#[test]
fn checkpoint_reproduces_validation_mae() {
    let (tr, va) = datasets(TrendKind::PhaseDependent, 0.05, 24, 6);
    let tc = TrainConfig {
        epochs: 4,
        seed: 3,
        ..Default::default()
    };
    let (model, report) = train(&ModelConfig::ultrastf(24, 6, 6, 4, 2), &tr, &va, &tc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    checkpoint::save(&model, &path).unwrap();
    let loaded = checkpoint::load(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(evaluate_mae(&loaded, &va).unwrap(), report.best_val_mae);
    let best = &report.epochs[report.best_epoch - 1];
    assert_eq!(best.val_mae, report.best_val_mae);
}

#[test]
fn stops_early_on_a_plateau() {
    let (tr, va) = datasets(TrendKind::None, 0.05, 12, 6);
    let tc = TrainConfig {
        epochs: 50,
        learning_rate: 0.0,
        patience: 3,
        seed: 4,
        ..Default::default()
    };
    let (_, report) = train(&ModelConfig::sparsetsf(12, 6, 6), &tr, &va, &tc).unwrap();
    assert!(report.stopped_early);
    assert_eq!(report.epochs.len(), 4);
    assert_eq!(report.best_epoch, 1);

    let never = TrainConfig { patience: 0, epochs: 6, ..tc };
    let (_, report) = train(&ModelConfig::sparsetsf(12, 6, 6), &tr, &va, &never).unwrap();
    assert!(!report.stopped_early);
    assert_eq!(report.epochs.len(), 6);
}
