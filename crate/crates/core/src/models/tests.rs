use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::couplings::CouplingKind;
use crate::graph::{sbm, SbmConfig, Targets};

fn random_graph(n: usize, extra: usize, seed: u64) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    while edges.len() < n + extra {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    SparseGraph::build(&edges, n, false).unwrap()
}

fn random_features(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn small_config(family: ModelFamily, kind: CouplingKind) -> ModelConfig {
    ModelConfig {
        family,
        coupling: CouplingConfig {
            kind,
            hidden_dim: 4,
            heads: 2,
            attn_dim: 3,
            ..CouplingConfig::default()
        },
        layers: 2,
        seed: 11,
        ..ModelConfig::default()
    }
}

fn node_input(n: usize, d: usize, seed: u64) -> ModelInput {
    ModelInput::new(&random_graph(n, n / 2, seed), random_features(n, d, seed + 1), None).unwrap()
}

fn zero_layers(model: &mut Model) {
    for (name, m) in model.params.values.iter_mut() {
        if name.starts_with("layer") {
            *m = Matrix::zeros(m.rows(), m.cols());
        }
    }
}

fn magnitudes(planes: &[Matrix]) -> Vec<f64> {
    planes[0]
        .data()
        .iter()
        .zip(planes[1].data())
        .map(|(a, b)| a.hypot(*b))
        .collect()
}

#[test]
fn rejects_zero_layers_and_large_dropout() {
    let mut cfg = ModelConfig {
        layers: 0,
        ..ModelConfig::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    cfg.layers = 2;
    cfg.dropout = 0.6;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    cfg.dropout = 0.5;
    assert!(cfg.validate().is_ok());
}

#[test]
fn zero_step_reduces_to_decode_of_encode() {
    let input = node_input(8, 3, 1);
    for family in ModelFamily::ALL {
        for kind in [CouplingKind::Gcn, CouplingKind::Gat, CouplingKind::Tran] {
            let mut cfg = small_config(family, kind);
            cfg.step.dt = 0.0;
            let model = Model::new(cfg, 3, 2).unwrap();
            let tape = Tape::new();
            let params = model.params.constants(&tape);
            let out = model.forward(&params, &input, Mode::Eval).unwrap();
            let x0 = tape.constant(input.features.clone());
            let enc = model.encode(&params, &x0).unwrap();
            let direct = model
                .decoder_input(&enc)
                .unwrap()
                .matmul(&params["dec.w"])
                .unwrap()
                .add_row(&params["dec.b"])
                .unwrap();
            let diff = out.output.value().zip_map(&direct.value(), |a, b| a - b).max_abs();
            assert!(diff < 1e-12, "{family}/{kind}: {diff}");
        }
    }
}

#[test]
fn zero_input_gives_zero_slgnn_encoding() {
    let model = Model::new(small_config(ModelFamily::Slgnn, CouplingKind::Gcn), 3, 2).unwrap();
    let tape = Tape::new();
    let params = model.params.constants(&tape);
    let z = model.encode(&params, &tape.constant(Matrix::zeros(5, 3))).unwrap();
    assert_eq!(z[0].value().max_abs(), 0.0);
    assert_eq!(z[1].value().max_abs(), 0.0);
}

#[test]
fn kuramoto_states_stay_on_unit_circle() {
    let input = node_input(10, 3, 2);
    for kind in [CouplingKind::Gcn, CouplingKind::Gat, CouplingKind::Tran] {
        let mut cfg = small_config(ModelFamily::Kuramoto, kind);
        cfg.layers = 6;
        let model = Model::new(cfg, 3, 2).unwrap();
        let tape = Tape::new();
        let out = model.forward(&model.params.constants(&tape), &input, Mode::Eval).unwrap();
        for planes in &out.states {
            for r in magnitudes(planes) {
                assert!((r - 1.0).abs() < 1e-12, "{kind}: {r}");
            }
        }
    }
}

#[test]
fn decoupled_slgnn_settles_on_limit_cycle() {
    let input = node_input(10, 3, 3);
    let mut cfg = small_config(ModelFamily::Slgnn, CouplingKind::Gcn);
    cfg.layers = 60;
    cfg.step.newton_tol = 1e-12;
    let mut model = Model::new(cfg, 3, 2).unwrap();
    zero_layers(&mut model);
    let tape = Tape::new();
    let out = model.forward(&model.params.constants(&tape), &input, Mode::Eval).unwrap();
    for r in magnitudes(out.states.last().unwrap()) {
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }
}

#[test]
fn subcritical_slgnn_magnitudes_shrink_with_depth() {
    let input = node_input(10, 3, 4);
    let mut cfg = small_config(ModelFamily::Slgnn, CouplingKind::Gcn);
    cfg.layers = 20;
    cfg.sl = SLParams::new(-0.5, 1.0, 1.0, 0.0);
    let mut model = Model::new(cfg, 3, 2).unwrap();
    zero_layers(&mut model);
    let tape = Tape::new();
    let out = model.forward(&model.params.constants(&tape), &input, Mode::Eval).unwrap();
    for w in out.states.windows(2) {
        for (a, b) in magnitudes(&w[0]).iter().zip(magnitudes(&w[1])) {
            assert!(b < *a || *a == 0.0, "{b} !< {a}");
        }
    }
}

#[test]
fn reruns_are_bit_identical() {
    let input = node_input(12, 3, 5);
    for family in ModelFamily::ALL {
        let mut cfg = small_config(family, CouplingKind::Gat);
        cfg.dropout = 0.3;
        cfg.input_dropout = 0.2;
        let a = Model::new(cfg.clone(), 3, 2).unwrap();
        let b = Model::new(cfg, 3, 2).unwrap();
        assert_eq!(a.params, b.params);
        let run = |m: &Model| {
            let tape = Tape::new();
            let out = m
                .forward(&m.params.constants(&tape), &input, Mode::Train { seed: 9 })
                .unwrap();
            (*out.output.value()).clone()
        };
        assert_eq!(run(&a), run(&b));
        assert_eq!(a.predict(&input).unwrap(), b.predict(&input).unwrap());
    }
}

#[test]
fn gradients_match_finite_differences() {
    let input = node_input(7, 3, 6);
    for (family, kind) in [
        (ModelFamily::Slgnn, CouplingKind::Gcn),
        (ModelFamily::Kuramoto, CouplingKind::Gat),
        (ModelFamily::Graphcon, CouplingKind::Tran),
        (ModelFamily::Baseline, CouplingKind::Gcn),
    ] {
        let model = Model::new(small_config(family, kind), 3, 2).unwrap();
        let report = gradcheck_model(&model, &input, 1e-6, 0).unwrap();
        assert!(report.max_rel_err() < 1e-4, "{family}/{kind}: {}", report.max_rel_err());
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let model = Model::new(small_config(ModelFamily::Kuramoto, CouplingKind::Gcn), 3, 2).unwrap();
    let x = random_features(5, 3, 7);
    let inputs = vec![
        x,
        model.params.values["enc.w"].clone(),
        model.params.values["enc.b"].clone(),
    ];
    let report = check_gradients(
        |_, t| {
            let params: BTreeMap<String, Tensor<'_>> =
                [("enc.w".to_string(), t[1]), ("enc.b".to_string(), t[2])].into_iter().collect();
            let z = model.encode(&params, &t[0])?;
            Ok(z[0].add(&z[1].scale(0.3))?.sum())
        },
        &inputs,
        1e-6,
    )
    .unwrap();
    assert!(report.max_rel_err() < 1e-4, "{}", report.max_rel_err());
}

#[test]
fn gradient_reaches_first_layer_at_depth_64() {
    let bundle = sbm(&SbmConfig::default()).unwrap();
    let input = ModelInput::from_bundle(&bundle).unwrap();
    let cfg = ModelConfig {
        layers: 64,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, bundle.features.cols(), 2).unwrap();
    let tape = Tape::new();
    let params = model.params.leaves(&tape);
    let out = model.forward(&params, &input, Mode::Eval).unwrap();
    let Targets::Classes { labels, .. } = &bundle.targets else {
        unreachable!()
    };
    let rows: Vec<usize> = (0..bundle.n()).collect();
    let loss = out.output.cross_entropy(labels, &rows).unwrap();
    tape.backward(loss).unwrap();
    let g = params["layer000.w"].grad().unwrap().norm();
    assert!(g > 1e-8, "first-layer gradient norm {g}");
}

#[test]
fn readout_of_single_and_duplicated_nodes() {
    let tape = Tape::new();
    let row = tape.constant(Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap());
    let one: Arc<[usize]> = vec![0].into();
    let pooled = readout(&row, &one, 1, Pooling::Mean).unwrap();
    assert_eq!(*pooled.value(), *row.value());
    let twice = tape.constant(Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![1.0, -2.0, 0.5]]).unwrap());
    let two: Arc<[usize]> = vec![0, 0].into();
    for pooling in [Pooling::Mean, Pooling::Max] {
        assert_eq!(*readout(&twice, &two, 1, pooling).unwrap().value(), *row.value());
    }
}

#[test]
fn readout_rejects_empty_graph() {
    let tape = Tape::new();
    let x = tape.constant(Matrix::zeros(2, 2));
    let m: Arc<[usize]> = vec![0, 2].into();
    assert!(matches!(readout(&x, &m, 3, Pooling::Mean), Err(Error::Pooling(_))));
}

#[test]
fn dropout_modes() {
    let tape = Tape::new();
    let x = tape.constant(random_features(4, 5, 8));
    assert_eq!(*dropout_apply(&x, 0.0, true, 1).unwrap().value(), *x.value());
    assert_eq!(*dropout_apply(&x, 0.4, false, 1).unwrap().value(), *x.value());
    assert!(dropout_apply(&x, 1.0, true, 1).is_err());
}

#[test]
fn dropout_preserves_expectation() {
    let x = Matrix::filled(10, 10, 2.0);
    let trials = 10_000;
    let mut total = 0.0;
    for seed in 0..trials {
        let mask = dropout_mask(10, 10, 0.5, seed);
        total += mask.zip_map(&x, |m, v| m * v).sum() / 100.0;
    }
    let mean = total / trials as f64;
    assert!((mean - 2.0).abs() < 0.02, "{mean}");
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(small_config(ModelFamily::Slgnn, CouplingKind::Tran), 3, 4).unwrap();
    model.save(dir.path()).unwrap();
    let loaded = Model::load(dir.path()).unwrap();
    assert_eq!(loaded, model);
}

#[test]
fn tied_weights_share_one_layer() {
    let mut cfg = small_config(ModelFamily::Baseline, CouplingKind::Gcn);
    cfg.tied = true;
    cfg.layers = 5;
    let model = Model::new(cfg, 3, 2).unwrap();
    assert_eq!(model.params.names().iter().filter(|n| n.starts_with("layers.")).count(), 1);
    model.predict(&node_input(6, 3, 9)).unwrap();
}

#[test]
fn graph_level_forward_emits_one_row_per_graph() {
    let bundle = crate::graph::ring_star_collection(6, crate::graph::Task::GraphClass, 3).unwrap();
    let input = ModelInput::from_bundle(&bundle).unwrap();
    let model = Model::new(small_config(ModelFamily::Slgnn, CouplingKind::Gcn), 2, 2).unwrap();
    assert_eq!(model.predict(&input).unwrap().shape(), (6, 2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn readout_ignores_node_order(seed in 0u64..1000, sizes in prop::collection::vec(1usize..5, 1..4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let membership: Vec<usize> = sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g, s)).collect();
        let n = membership.len();
        let x = random_features(n, 3, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted_x = Matrix::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        let permuted_m: Arc<[usize]> = perm.iter().map(|&i| membership[i]).collect::<Vec<_>>().into();
        let membership: Arc<[usize]> = membership.into();
        let tape = Tape::new();
        for pooling in [Pooling::Mean, Pooling::Max] {
            let a = readout(&tape.constant(x.clone()), &membership, sizes.len(), pooling).unwrap();
            let b = readout(&tape.constant(permuted_x.clone()), &permuted_m, sizes.len(), pooling).unwrap();
            let diff = a.value().zip_map(&b.value(), |p, q| p - q).max_abs();
            prop_assert!(diff < 1e-12);
        }
    }
}
