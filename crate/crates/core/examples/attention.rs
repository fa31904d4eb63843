//! Per-edge attention weights of one GAT head on a small graph.

use oscgnn::couplings::{attention_matrix, gat_attention, CouplingConfig, CouplingKind, CouplingGraphs};
use oscgnn::graph::SparseGraph;
use oscgnn::models::ParamStore;
use oscgnn::tensor::{Matrix, Tape};

fn main() -> oscgnn::Result<()> {
    let graphs = CouplingGraphs::new(&SparseGraph::build(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], 4, false)?)?;
    let cfg = CouplingConfig {
        kind: CouplingKind::Gat,
        hidden_dim: 4,
        heads: 2,
        ..CouplingConfig::default()
    };
    let store = ParamStore::glorot(&cfg.param_shapes(1), 3);
    let tape = Tape::new();
    let params = store.constants(&tape);
    let x = tape.constant(Matrix::from_rows(&[
        vec![1.0, 0.0, 0.5, 0.0],
        vec![0.0, 1.0, 0.0, 0.5],
        vec![0.5, 0.5, 1.0, 0.0],
        vec![0.0, 0.0, 0.5, 1.0],
    ])?);
    let (att, _) = gat_attention(&[x], &graphs.with_loops, &params, 0, cfg.leaky_slope)?;
    let dense = attention_matrix(&att.value(), &graphs.with_loops);
    for i in 0..dense.rows() {
        let row: Vec<String> = dense.row(i).iter().map(|v| format!("{v:.3}")).collect();
        println!("{}  (sum {:.3})", row.join(" "), dense.row(i).iter().sum::<f64>());
    }
    Ok(())
}
