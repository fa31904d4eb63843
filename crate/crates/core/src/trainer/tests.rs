use proptest::prelude::*;

use super::*;
use crate::couplings::{CouplingConfig, CouplingKind};
use crate::graph::{make_graph_splits, make_splits, ring_star_collection, sbm, SbmConfig};
use crate::models::ModelFamily;

fn sbm_task() -> (DatasetBundle, SplitMasks) {
    let bundle = sbm(&SbmConfig::default()).unwrap();
    let Targets::Classes { labels, num_classes } = &bundle.targets else {
        unreachable!()
    };
    let masks = make_splits(labels, *num_classes, 10, 20, 0).unwrap();
    (bundle, masks)
}

fn small_model(family: ModelFamily, layers: usize) -> ModelConfig {
    ModelConfig {
        family,
        layers,
        coupling: CouplingConfig {
            hidden_dim: 8,
            ..CouplingConfig::default()
        },
        ..ModelConfig::default()
    }
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        patience: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn uniform_logits_give_log_class_count() {
    let tape = Tape::new();
    let x = tape.constant(Matrix::zeros(3, 4));
    let t = Targets::Classes {
        labels: vec![0, 1, 3],
        num_classes: 4,
    };
    let l = loss(&x, &t, &[0, 1, 2]).unwrap().value().item();
    assert!((l - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_logits_give_near_zero_loss() {
    let tape = Tape::new();
    let x = tape.constant(Matrix::from_rows(&[vec![20.0, 0.0], vec![0.0, 20.0]]).unwrap());
    let t = Targets::Classes {
        labels: vec![0, 1],
        num_classes: 2,
    };
    assert!(loss(&x, &t, &[0, 1]).unwrap().value().item() <= 1e-6);
}

#[test]
fn exact_regression_has_zero_loss_and_empty_mask_errors() {
    let tape = Tape::new();
    let x = tape.constant(Matrix::column(vec![0.5, -1.0]));
    let t = Targets::Regression(vec![0.5, -1.0]);
    assert_eq!(loss(&x, &t, &[0, 1]).unwrap().value().item(), 0.0);
    assert!(matches!(loss(&x, &t, &[]), Err(Error::Mask(_))));
    assert!(matches!(metric(&x.value(), &t, &[]), Err(Error::Mask(_))));
}

#[test]
fn accuracy_breaks_ties_toward_lowest_class() {
    let out = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap();
    let t = Targets::Classes {
        labels: vec![0, 0],
        num_classes: 2,
    };
    assert_eq!(metric(&out, &t, &[0, 1]).unwrap(), 50.0);
}

#[test]
fn adam_ignores_zero_gradients() {
    let mut params: BTreeMap<String, Matrix> = [("w".to_string(), Matrix::filled(2, 2, 0.7))].into();
    let before = params.clone();
    let grads: BTreeMap<String, Matrix> = [("w".to_string(), Matrix::zeros(2, 2))].into();
    let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 0.0);
    for _ in 0..5 {
        opt.step(&mut params, &grads);
    }
    assert_eq!(params, before);
}

#[test]
fn sgd_step_descends_to_first_order() {
    let (bundle, masks) = sbm_task();
    let model = Model::new(small_model(ModelFamily::Slgnn, 2), 2, 2).unwrap();
    let input = ModelInput::from_bundle(&bundle).unwrap();
    let rows = masks.train_idx();
    let (l0, grads) = compute_gradients(&model, &input, &bundle.targets, &rows, Mode::Eval).unwrap();
    let g2: f64 = grads.values().map(|g| g.dot(g)).sum();
    for lr in [1e-4, 1e-5] {
        let mut m = model.clone();
        Optimizer::new(OptimizerKind::Sgd, lr, 0.0).step(&mut m.params.values, &grads);
        let (l1, _) = compute_gradients(&m, &input, &bundle.targets, &rows, Mode::Eval).unwrap();
        let predicted = -lr * g2;
        assert!(((l1 - l0) - predicted).abs() < 0.05 * predicted.abs(), "lr {lr}: {} vs {predicted}", l1 - l0);
    }
}

#[test]
fn zero_learning_rate_freezes_everything() {
    let (bundle, masks) = sbm_task();
    let model = Model::new(small_model(ModelFamily::Slgnn, 2), 2, 2).unwrap();
    let cfg = TrainConfig {
        lr: 0.0,
        ..quick(5)
    };
    let (trained, report) = train(model.clone(), &bundle, &masks, &cfg).unwrap();
    assert_eq!(trained.params, model.params);
    let first = report.history[0].train_loss;
    assert!(report.history.iter().all(|r| r.train_loss == first));
}

#[test]
fn reruns_give_identical_reports() {
    let (bundle, masks) = sbm_task();
    let mut mc = small_model(ModelFamily::Slgnn, 2);
    mc.dropout = 0.2;
    let run = || {
        let (_, r) = run_experiment(&mc, &bundle, &masks, &quick(8)).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn sl_gcn_separates_the_block_model() {
    let (bundle, masks) = sbm_task();
    let mc = ModelConfig {
        layers: 4,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        epochs: 300,
        patience: 100,
        ..TrainConfig::default()
    };
    let (_, report) = run_experiment(&mc, &bundle, &masks, &cfg).unwrap();
    assert!(report.test_metric >= 95.0, "test accuracy {}", report.test_metric);
}

#[test]
fn early_stopping_keeps_the_best_validation_checkpoint() {
    let (bundle, masks) = sbm_task();
    let cfg = TrainConfig {
        lr: 0.01,
        epochs: 60,
        patience: 5,
        ..TrainConfig::default()
    };
    let (model, report) = run_experiment(&small_model(ModelFamily::Baseline, 2), &bundle, &masks, &cfg).unwrap();
    let best = report.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    let val = split_view(&bundle, Some(&ModelInput::from_bundle(&bundle).unwrap()), &masks.val).unwrap();
    let (restored, _) = evaluate(&model, &val).unwrap();
    assert_eq!(restored, best);
    assert_eq!(report.history[report.best_epoch].val_loss, best);
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let (bundle, masks) = sbm_task();
    let mut model = Model::new(small_model(ModelFamily::Baseline, 1), 2, 2).unwrap();
    model.params.values.get_mut("dec.b").unwrap().set(0, 0, f64::NAN);
    match train(model, &bundle, &masks, &quick(3)) {
        Err(Error::NonFinite { epoch, diagnostics }) => {
            assert_eq!(epoch, 0);
            assert!(diagnostics.contains("dec="));
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn t_score_examples() {
    let t = t_score(1.0, 1.0, 0.0, 1.0, 100).unwrap();
    assert!((t.t - 1.0 / 0.02f64.sqrt()).abs() < 1e-12);
    assert_eq!(t_score(3.0, 1.0, 3.0, 2.0, 10).unwrap().t, 0.0);
    let table = t_score(82.92, 1.39, 82.35, 1.61, 100).unwrap();
    assert!((table.t - 2.68).abs() < 0.02, "{}", table.t);
    assert!(table.significant);
    assert_eq!(table.threshold, 1.66);
    assert!(matches!(t_score(1.0, 0.0, 0.0, 0.0, 10), Err(Error::DegenerateVariance)));
    assert!(t_score(1.0, 1.0, 0.0, 1.0, 1).is_err());
}

#[test]
fn single_depth_sweep_gives_one_row() {
    let (bundle, masks) = sbm_task();
    let rows = depth_sweep(&small_model(ModelFamily::Slgnn, 1), &[4], &bundle, &masks, &quick(3), 1).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].report.layers, 4);
    let mut csv = Vec::new();
    write_depth_csv(&rows, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2);
    assert!(depth_sweep(&small_model(ModelFamily::Slgnn, 1), &[], &bundle, &masks, &quick(3), 1).is_err());
}

#[test]
fn deep_kuramoto_stays_finite() {
    let (bundle, masks) = sbm_task();
    let (_, report) = run_experiment(&small_model(ModelFamily::Kuramoto, 64), &bundle, &masks, &quick(3)).unwrap();
    assert!(report.history.iter().all(|r| r.train_loss.is_finite() && r.val_loss.is_finite()));
}

#[test]
fn robustness_level_zero_matches_plain_training() {
    let (bundle, masks) = sbm_task();
    let mc = small_model(ModelFamily::Baseline, 2);
    let cfg = quick(10);
    let rows = robustness_sweep(&mc, &bundle, &masks, &cfg, &[0, 50], 2, 7, 2).unwrap();
    assert_eq!(rows.len(), 2);
    let plain = run_experiment(
        &ModelConfig { seed: 7, ..mc.clone() },
        &bundle,
        &masks,
        &TrainConfig { seed: 7, ..cfg.clone() },
    )
    .unwrap()
    .1
    .test_metric;
    assert_eq!(rows[0].trials[0], plain);
    let mut csv = Vec::new();
    write_robustness_csv(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("level,mean,p25,p75"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn graph_level_tasks_train() {
    for task in [Task::GraphClass, Task::GraphReg] {
        let bundle = ring_star_collection(40, task, 1).unwrap();
        let masks = make_graph_splits(40, 2);
        let mc = ModelConfig {
            coupling: CouplingConfig {
                kind: CouplingKind::Gcn,
                hidden_dim: 8,
                ..CouplingConfig::default()
            },
            layers: 2,
            ..ModelConfig::default()
        };
        let cfg = TrainConfig {
            batch_size: 8,
            ..quick(5)
        };
        let (_, report) = run_experiment(&mc, &bundle, &masks, &cfg).unwrap();
        assert_eq!(report.epochs_run, 5);
        assert!(report.test_metric.is_finite());
    }
}

#[test]
fn parallel_map_keeps_order() {
    let items: Vec<usize> = (0..37).collect();
    assert_eq!(parallel_map(&items, 4, |&i| i * i), items.iter().map(|i| i * i).collect::<Vec<_>>());
}

#[test]
fn quantile_interpolates() {
    let v = [4.0, 1.0, 3.0, 2.0];
    assert_eq!(quantile(&v, 0.0), 1.0);
    assert_eq!(quantile(&v, 1.0), 4.0);
    assert!((quantile(&v, 0.25) - 1.75).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn t_score_is_antisymmetric(mu1 in -100.0f64..100.0, mu2 in -100.0f64..100.0, s1 in 0.1f64..5.0, s2 in 0.1f64..5.0, n in 2usize..200) {
        let a = t_score(mu1, s1, mu2, s2, n).unwrap().t;
        let b = t_score(mu2, s2, mu1, s1, n).unwrap().t;
        prop_assert!((a + b).abs() < 1e-9 * a.abs().max(1.0));
    }
}
