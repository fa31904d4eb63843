use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::gradcheck::check_gradients;
use crate::tensor::Tape;

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_params(cfg: &CouplingConfig, planes: usize, seed: u64) -> Vec<(String, Matrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cfg.param_shapes(planes)
        .into_iter()
        .map(|(name, (r, c))| (name, rand_matrix(&mut rng, r, c)))
        .collect()
}

fn bind<'t>(tape: &'t Tape, params: &[(String, Matrix)]) -> LayerParams<'t> {
    params
        .iter()
        .map(|(k, m)| (k.clone(), tape.leaf(m.clone())))
        .collect()
}

fn random_graph(n: usize, p: f64, seed: u64) -> SparseGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    // a spanning path keeps every node connected
    edges.extend((1..n).map(|i| (i - 1, i)));
    SparseGraph::build(&edges, n, false).unwrap()
}

fn cfg(kind: CouplingKind, hidden: usize) -> CouplingConfig {
    CouplingConfig {
        kind,
        hidden_dim: hidden,
        heads: 2,
        attn_dim: 3,
        kappa: 0.7,
        leaky_slope: 0.1,
        complex_weights: false,
    }
}

fn eval(c: &CouplingConfig, graph: &SparseGraph, planes: &[Matrix], params: &[(String, Matrix)]) -> Vec<Matrix> {
    let graphs = CouplingGraphs::new(graph).unwrap();
    let tape = Tape::new();
    let p = bind(&tape, params);
    let xs: Vec<Tensor<'_>> = planes.iter().map(|m| tape.constant(m.clone())).collect();
    apply_coupling(c, &xs, &graphs, &p)
        .unwrap()
        .iter()
        .map(|t| (*t.value()).clone())
        .collect()
}

fn max_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.zip_map(b, |x, y| x - y).max_abs()
}

#[test]
fn gcn_single_node_identity() {
    let g = SparseGraph::build(&[], 1, false).unwrap();
    let x = Matrix::from_rows(&[vec![0.5, 2.0, 0.0]]).unwrap();
    let params = vec![("w".to_string(), Matrix::identity(3))];
    let out = eval(&cfg(CouplingKind::Gcn, 3), &g, &[x.clone()], &params);
    assert_eq!(out[0], x);
}

#[test]
fn gcn_k2_hand_arithmetic() {
    let g = SparseGraph::complete(2, false).unwrap();
    let graphs = CouplingGraphs::new(&g).unwrap();
    assert!(graphs.normalized.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    let x = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
    let params = vec![("w".to_string(), Matrix::scalar(1.0))];
    let out = eval(&cfg(CouplingKind::Gcn, 1), &g, &[x], &params);
    assert_eq!(out[0].data(), &[2.0, 2.0]);

    let x = Matrix::from_rows(&[vec![-1.0], vec![-3.0]]).unwrap();
    let out = eval(&cfg(CouplingKind::Gcn, 1), &g, &[x], &params);
    assert!(out[0].data().iter().all(|v| (v + 0.2).abs() < 1e-15));
}

#[test]
fn gcn_rejects_unnormalized_graph() {
    let g = SparseGraph::ring(3, true).unwrap();
    let tape = Tape::new();
    let p = bind(&tape, &[("w".into(), Matrix::identity(2))]);
    let x = tape.constant(Matrix::zeros(3, 2));
    assert!(matches!(gcn_coupling(&[x], &g, &p, 0.1), Err(Error::Contract(_))));
}

#[test]
fn complex_weights_match_complex_product() {
    let mut c = cfg(CouplingKind::Gcn, 3);
    c.complex_weights = true;
    let g = random_graph(5, 0.4, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (re, im) = (rand_matrix(&mut rng, 5, 3), rand_matrix(&mut rng, 5, 3));
    let params = random_params(&c, 2, 3);
    assert_eq!(params.len(), 2);
    let out = eval(&c, &g, &[re.clone(), im.clone()], &params);

    let norm = CouplingGraphs::new(&g).unwrap().normalized;
    let (pr, pi) = (norm.apply(&re), norm.apply(&im));
    let (wr, wi) = (&params[0].1, &params[1].1);
    assert_eq!(params[0].0, "w_re");
    let leaky = |v: f64| if v > 0.0 { v } else { 0.1 * v };
    let expect_re = pr.matmul(wr).unwrap().zip_map(&pi.matmul(wi).unwrap(), |a, b| leaky(a - b));
    let expect_im = pr.matmul(wi).unwrap().zip_map(&pi.matmul(wr).unwrap(), |a, b| leaky(a + b));
    assert!(max_diff(&out[0], &expect_re) < 1e-14);
    assert!(max_diff(&out[1], &expect_im) < 1e-14);
}

fn gat_weights(c: &CouplingConfig, g: &SparseGraph, planes: &[Matrix], params: &[(String, Matrix)]) -> Vec<Matrix> {
    let loops = g.with_self_loops();
    let tape = Tape::new();
    let p = bind(&tape, params);
    let xs: Vec<Tensor<'_>> = planes.iter().map(|m| tape.constant(m.clone())).collect();
    (0..c.heads)
        .map(|k| (*gat_attention(&xs, &loops, &p, k, c.leaky_slope).unwrap().0.value()).clone())
        .collect()
}

#[test]
fn gat_identical_features_give_uniform_attention() {
    let c = cfg(CouplingKind::Gat, 4);
    let g = random_graph(7, 0.3, 4);
    let x = Matrix::from_rows(&vec![vec![0.3, -0.2, 0.9, 0.1]; 7]).unwrap();
    let loops = g.with_self_loops();
    for att in gat_weights(&c, &g, &[x], &random_params(&c, 1, 5)) {
        let dense = attention_matrix(&att, &loops);
        for i in 0..7 {
            let deg = loops.neighbors(i).len() as f64;
            for &j in loops.neighbors(i) {
                assert!((dense.get(i, j) - 1.0 / deg).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn gat_singleton_attention_is_one() {
    let c = cfg(CouplingKind::Gat, 2);
    let g = SparseGraph::build(&[], 1, false).unwrap();
    let x = Matrix::from_rows(&[vec![0.4, -1.0]]).unwrap();
    for att in gat_weights(&c, &g, &[x], &random_params(&c, 1, 6)) {
        assert_eq!(att.data(), &[1.0]);
    }
}

#[test]
fn gat_empty_neighborhood_errors() {
    let c = cfg(CouplingKind::Gat, 2);
    let g = SparseGraph::build(&[(0, 1)], 3, false).unwrap();
    let tape = Tape::new();
    let p = bind(&tape, &random_params(&c, 1, 7));
    let x = tape.constant(Matrix::zeros(3, 2));
    assert!(matches!(gat_coupling(&[x], &g, &p, 2, 0.2), Err(Error::Input(_))));
}

#[test]
fn tran_vanishes_when_neighbors_match() {
    let c = cfg(CouplingKind::Tran, 3);
    let g = random_graph(6, 0.5, 8);
    let x = Matrix::from_rows(&vec![vec![1.0, -2.0, 0.5]; 6]).unwrap();
    let out = eval(&c, &g, &[x], &random_params(&c, 1, 9));
    assert!(out[0].max_abs() == 0.0);
}

#[test]
fn tran_two_node_hand_arithmetic() {
    let mut c = cfg(CouplingKind::Tran, 1);
    c.kappa = 1.0;
    c.heads = 1;
    c.attn_dim = 1;
    let g = SparseGraph::complete(2, false).unwrap();
    let x = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
    let params = vec![
        ("head0.w_k".to_string(), Matrix::scalar(0.0)),
        ("head0.w_q".to_string(), Matrix::scalar(1.3)),
    ];
    let out = eval(&c, &g, &[x], &params);
    assert_eq!(out[0].get(0, 0), 2.0);
    assert!((out[0].get(1, 0) + 0.2).abs() < 1e-15);
}

#[test]
fn tran_translation_invariance_for_key_null_directions() {
    let c = cfg(CouplingKind::Tran, 4);
    let g = random_graph(6, 0.5, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_matrix(&mut rng, 6, 4);
    let shift = rand_matrix(&mut rng, 1, 4);
    let unit = shift.scaled(1.0 / shift.norm());
    // W_K = (I − ĉĉᵀ) M has ĉ in its left null space
    let projector = Matrix::identity(4).zip_map(&unit.t_matmul(&unit).unwrap(), |a, b| a - b);
    let mut params = random_params(&c, 1, 12);
    for (name, m) in params.iter_mut() {
        if name.ends_with("w_k") {
            *m = projector.matmul(m).unwrap();
        }
    }
    let shifted = Matrix::from_vec(6, 4, (0..24).map(|k| x.data()[k] + 3.7 * shift.data()[k % 4]).collect()).unwrap();
    let a = eval(&c, &g, &[x.clone()], &params);
    let b = eval(&c, &g, &[shifted.clone()], &params);
    assert!(max_diff(&a[0], &b[0]) < 1e-10);

    // with unconstrained keys the logits pick up a neighbor-dependent term
    let params = random_params(&c, 1, 12);
    let a = eval(&c, &g, &[x], &params);
    let b = eval(&c, &g, &[shifted], &params);
    assert!(max_diff(&a[0], &b[0]) > 1e-6);
}

#[test]
fn difference_aggregate_ignores_constant_shift() {
    let g = random_graph(6, 0.5, 13);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let att = Matrix::column((0..g.nnz()).map(|_| rng.random_range(0.0..1.0)).collect());
    let x = rand_matrix(&mut rng, 6, 3);
    let shifted = x.map(|v| v - 4.2);
    let tape = Tape::new();
    let w = tape.constant(att);
    let a = difference_aggregate(&w, &[tape.constant(x)], &g, 0.9, 0.3).unwrap();
    let b = difference_aggregate(&w, &[tape.constant(shifted)], &g, 0.9, 0.3).unwrap();
    assert!(max_diff(&a[0].value(), &b[0].value()) < 1e-12);
}

fn permuted(g: &SparseGraph, perm: &[usize]) -> SparseGraph {
    let edges: Vec<_> = g.edge_list().iter().map(|&(i, j)| (perm[i], perm[j])).collect();
    SparseGraph::build(&edges, g.n(), false).unwrap()
}

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for i in 0..m.rows() {
        out.row_mut(perm[i]).copy_from_slice(m.row(i));
    }
    out
}

#[test]
fn couplings_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for kind in [CouplingKind::Gcn, CouplingKind::Gat, CouplingKind::Tran] {
        for planes in [1, 2] {
            for trial in 0..5 {
                let c = cfg(kind, 4);
                let g = random_graph(6, 0.4, 100 + trial);
                let mut perm: Vec<usize> = (0..6).collect();
                perm.shuffle(&mut rng);
                let xs: Vec<Matrix> = (0..planes).map(|_| rand_matrix(&mut rng, 6, 4)).collect();
                let params = random_params(&c, planes, trial);
                let out = eval(&c, &g, &xs, &params);
                let xs_p: Vec<Matrix> = xs.iter().map(|m| permute_rows(m, &perm)).collect();
                let out_p = eval(&c, &permuted(&g, &perm), &xs_p, &params);
                for (o, op) in out.iter().zip(&out_p) {
                    assert!(max_diff(&permute_rows(o, &perm), op) < 1e-12, "{kind:?}");
                }
            }
        }
    }
}

#[test]
fn coupling_gradients_match_finite_differences() {
    for kind in [CouplingKind::Gcn, CouplingKind::Gat, CouplingKind::Tran] {
        for complex_weights in [false, true] {
            let mut c = cfg(kind, 4);
            c.complex_weights = complex_weights;
            let g = random_graph(5, 0.5, 21);
            let graphs = CouplingGraphs::new(&g).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(22);
            let params = random_params(&c, 2, 23);
            let mut inputs = vec![rand_matrix(&mut rng, 5, 4), rand_matrix(&mut rng, 5, 4)];
            inputs.extend(params.iter().map(|(_, m)| m.clone()));
            let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
            let report = check_gradients(
                |_, t| {
                    let p: LayerParams<'_> = names.iter().cloned().zip(t[2..].iter().copied()).collect();
                    let out = apply_coupling(&c, &t[..2], &graphs, &p)?;
                    Ok(out[0].sin().add(&out[1].powi(2))?.sum())
                },
                &inputs,
                1e-6,
            )
            .unwrap();
            assert!(report.max_rel_err() < 1e-4, "{kind:?}: {report:?}");
        }
    }
}

#[test]
fn param_shapes_by_kind() {
    let c = cfg(CouplingKind::Gat, 4);
    let shapes = c.param_shapes(2);
    assert_eq!(shapes.len(), 6);
    assert_eq!(shapes[0], ("head0.w".to_string(), (4, 2)));
    assert_eq!(shapes[1], ("head0.a_src".to_string(), (4, 1)));
    let c = cfg(CouplingKind::Tran, 4);
    assert_eq!(c.param_shapes(2)[0], ("head0.w_q".to_string(), (8, 3)));
}

#[test]
fn config_validation() {
    assert!(CouplingConfig::default().validate().is_ok());
    let mut c = cfg(CouplingKind::Gat, 5);
    assert!(c.validate().is_err());
    c.hidden_dim = 4;
    c.kappa = 0.0;
    assert!(c.validate().is_err());
    assert_eq!("tran".parse::<CouplingKind>().unwrap(), CouplingKind::Tran);
    assert!("gin".parse::<CouplingKind>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gat_attention_rows_are_distributions(seed in any::<u64>(), n in 2usize..12, density in 0.0f64..0.8) {
        let c = cfg(CouplingKind::Gat, 4);
        let g = random_graph(n, density, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = rand_matrix(&mut rng, n, 4).scaled(5.0);
        let loops = g.with_self_loops();
        for att in gat_weights(&c, &g, &[x], &random_params(&c, 1, seed)) {
            for i in 0..n {
                let lo = loops.row_offsets()[i];
                let hi = loops.row_offsets()[i + 1];
                let s: f64 = (lo..hi).map(|e| att.get(e, 0)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!((lo..hi).all(|e| att.get(e, 0) >= 0.0));
            }
        }
    }
}
