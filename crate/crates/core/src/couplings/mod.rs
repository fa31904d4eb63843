//! Learnable coupling functions `F_θ`: GCN propagation, graph attention and
//! the transformer-style difference coupling.
//!
//! Complex states are passed as a list of real planes (`[re]` or `[re, im]`).
//! Value transforms share one real weight across planes and attention logits
//! are computed from the planes concatenated column-wise.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::tensor::{Matrix, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    #[default]
    Gcn,
    Gat,
    Tran,
}

impl FromStr for CouplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Self::Gcn),
            "gat" => Ok(Self::Gat),
            "tran" => Ok(Self::Tran),
            other => Err(Error::Config(format!("unknown coupling `{other}`"))),
        }
    }
}

impl fmt::Display for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gcn => "gcn",
            Self::Gat => "gat",
            Self::Tran => "tran",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub kind: CouplingKind,
    pub hidden_dim: usize,
    pub heads: usize,
    /// Key/query width `d_k` of the transformer coupling.
    pub attn_dim: usize,
    pub kappa: f64,
    pub leaky_slope: f64,
    /// Use complex value weights (separate real and imaginary matrices)
    /// instead of one real matrix shared by both planes.
    pub complex_weights: bool,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            kind: CouplingKind::Gcn,
            hidden_dim: 16,
            heads: 2,
            attn_dim: 16,
            kappa: 1.0,
            leaky_slope: 0.2,
            complex_weights: false,
        }
    }
}

impl CouplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        if self.kind != CouplingKind::Gcn && self.heads == 0 {
            return Err(Error::Config("heads must be >= 1".into()));
        }
        if self.kind == CouplingKind::Gat && self.hidden_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        if self.kind == CouplingKind::Tran && self.attn_dim == 0 {
            return Err(Error::Config("attn_dim must be >= 1".into()));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }

    /// Parameter names and shapes for one layer acting on `planes` planes.
    /// Weight matrices come first in each group so that fan-in/fan-out based
    /// initialization can read them off the shape.
    pub fn param_shapes(&self, planes: usize) -> Vec<(String, (usize, usize))> {
        let h = self.hidden_dim;
        let complex = self.complex_weights && planes == 2;
        let value_weights = |prefix: &str, rows: usize, cols: usize| {
            if complex {
                vec![
                    (format!("{prefix}w_re"), (rows, cols)),
                    (format!("{prefix}w_im"), (rows, cols)),
                ]
            } else {
                vec![(format!("{prefix}w"), (rows, cols))]
            }
        };
        match self.kind {
            CouplingKind::Gcn => value_weights("", h, h),
            CouplingKind::Gat => {
                let hd = h / self.heads;
                (0..self.heads)
                    .flat_map(|k| {
                        let prefix = format!("head{k}.");
                        let mut v = value_weights(&prefix, h, hd);
                        v.push((format!("{prefix}a_src"), (planes * hd, 1)));
                        v.push((format!("{prefix}a_dst"), (planes * hd, 1)));
                        v
                    })
                    .collect()
            }
            CouplingKind::Tran => (0..self.heads)
                .flat_map(|k| {
                    [
                        (format!("head{k}.w_q"), (planes * h, self.attn_dim)),
                        (format!("head{k}.w_k"), (planes * h, self.attn_dim)),
                    ]
                })
                .collect(),
        }
    }
}

/// The three views of one graph that the couplings need.
#[derive(Clone, Debug)]
pub struct CouplingGraphs {
    /// `D^{-1/2}(A + I)D^{-1/2}` for GCN.
    pub normalized: SparseGraph,
    /// `A + I` for attention including the node itself.
    pub with_loops: SparseGraph,
    /// `A` for the difference coupling.
    pub without_loops: SparseGraph,
}

impl CouplingGraphs {
    pub fn new(graph: &SparseGraph) -> Result<Self> {
        let with_loops = graph.with_self_loops();
        Ok(Self {
            normalized: with_loops.normalize_sym()?,
            with_loops,
            without_loops: graph.without_self_loops(),
        })
    }

    pub fn n(&self) -> usize {
        self.with_loops.n()
    }
}

/// Layer parameters looked up by the names from [`CouplingConfig::param_shapes`].
pub type LayerParams<'t> = BTreeMap<String, Tensor<'t>>;

fn param<'t>(params: &LayerParams<'t>, name: &str) -> Result<Tensor<'t>> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("missing coupling parameter `{name}`")))
}

fn check_planes(planes: &[Tensor<'_>], n: usize, width: usize) -> Result<()> {
    if planes.is_empty() || planes.len() > 2 {
        return Err(Error::Contract(format!("expected 1 or 2 planes, got {}", planes.len())));
    }
    for p in planes {
        if p.shape() != (n, width) {
            return Err(Error::Dimension {
                op: "coupling",
                left: (n, width),
                right: p.shape(),
            });
        }
    }
    Ok(())
}

/// Applies a value transform to every plane: shared real `w`, or the
/// complex product with `(w_re, w_im)` when both planes are present.
fn transform<'t>(params: &LayerParams<'t>, prefix: &str, planes: &[Tensor<'t>]) -> Result<Vec<Tensor<'t>>> {
    if let (Some(w_re), Some(w_im)) = (
        params.get(&format!("{prefix}w_re")),
        params.get(&format!("{prefix}w_im")),
    ) {
        let [re, im] = planes else {
            return Err(Error::Contract("complex weights need two planes".into()));
        };
        return Ok(vec![
            re.matmul(w_re)?.sub(&im.matmul(w_im)?)?,
            re.matmul(w_im)?.add(&im.matmul(w_re)?)?,
        ]);
    }
    let w = param(params, &format!("{prefix}w"))?;
    planes.iter().map(|p| p.matmul(&w)).collect()
}

/// `σ(Â X W)` per plane with `Â` the symmetric-normalized adjacency.
pub fn gcn_coupling<'t>(
    planes: &[Tensor<'t>],
    graph: &SparseGraph,
    params: &LayerParams<'t>,
    slope: f64,
) -> Result<Vec<Tensor<'t>>> {
    if !graph.is_normalized() {
        return Err(Error::Contract("gcn coupling needs a normalized graph".into()));
    }
    let width = planes.first().map_or(0, |p| p.shape().1);
    check_planes(planes, graph.n(), width)?;
    let propagated: Vec<Tensor<'t>> = planes.iter().map(|p| p.spmm(graph)).collect::<Result<_>>()?;
    Ok(transform(params, "", &propagated)?
        .iter()
        .map(|p| p.leaky_relu(slope))
        .collect())
}

/// Per-edge attention weights (nnz×1, CSR order) for one GAT head, plus the
/// transformed planes they aggregate.
pub fn gat_attention<'t>(
    planes: &[Tensor<'t>],
    graph: &SparseGraph,
    params: &LayerParams<'t>,
    head: usize,
    slope: f64,
) -> Result<(Tensor<'t>, Vec<Tensor<'t>>)> {
    if let Some(node) = (0..graph.n()).find(|&i| graph.neighbors(i).is_empty()) {
        return Err(Error::Input(format!(
            "node {node} has an empty attention neighborhood; add self-loops"
        )));
    }
    let prefix = format!("head{head}.");
    let s = transform(params, &prefix, planes)?;
    let joined = if s.len() == 1 { s[0] } else { Tensor::concat_cols(&s)? };
    let e_src = joined.matmul(&param(params, &format!("{prefix}a_src"))?)?;
    let e_dst = joined.matmul(&param(params, &format!("{prefix}a_dst"))?)?;
    let logits = e_src
        .gather_rows(graph.edge_rows_arc())?
        .add(&e_dst.gather_rows(graph.col_indices_arc())?)?
        .leaky_relu(slope);
    Ok((logits.segment_softmax(graph)?, s))
}

/// Multi-head graph attention: softmax over each neighborhood (self
/// included), heads concatenated, then LeakyReLU.
pub fn gat_coupling<'t>(
    planes: &[Tensor<'t>],
    graph: &SparseGraph,
    params: &LayerParams<'t>,
    heads: usize,
    slope: f64,
) -> Result<Vec<Tensor<'t>>> {
    let width = planes.first().map_or(0, |p| p.shape().1);
    check_planes(planes, graph.n(), width)?;
    let mut per_plane: Vec<Vec<Tensor<'t>>> = vec![Vec::with_capacity(heads); planes.len()];
    for k in 0..heads {
        let (att, s) = gat_attention(planes, graph, params, k, slope)?;
        for (p, sp) in s.iter().enumerate() {
            per_plane[p].push(Tensor::edge_aggregate(&att, sp, graph)?);
        }
    }
    per_plane
        .iter()
        .map(|hs| {
            let joined = if hs.len() == 1 { hs[0] } else { Tensor::concat_cols(hs)? };
            Ok(joined.leaky_relu(slope))
        })
        .collect()
}

/// Head-averaged attention of the difference coupling (nnz×1, CSR order
/// over `graph`, which carries no self-loops). Logits are
/// `(K_i · Q_j) / d_k` with `K = X W_K`, `Q = X W_Q` on the joined planes.
pub fn tran_attention<'t>(
    planes: &[Tensor<'t>],
    graph: &SparseGraph,
    params: &LayerParams<'t>,
    heads: usize,
    attn_dim: usize,
) -> Result<Tensor<'t>> {
    let joined = if planes.len() == 1 { planes[0] } else { Tensor::concat_cols(planes)? };
    let mut total: Option<Tensor<'t>> = None;
    for k in 0..heads {
        let keys = joined.matmul(&param(params, &format!("head{k}.w_k"))?)?;
        let queries = joined.matmul(&param(params, &format!("head{k}.w_q"))?)?;
        let logits = keys
            .gather_rows(graph.edge_rows_arc())?
            .row_dot(&queries.gather_rows(graph.col_indices_arc())?)?
            .scale(1.0 / attn_dim as f64);
        let att = logits.segment_softmax(graph)?;
        total = Some(match total {
            Some(t) => t.add(&att)?,
            None => att,
        });
    }
    let total = total.ok_or_else(|| Error::Config("tran coupling needs at least one head".into()))?;
    Ok(total.scale(1.0 / heads as f64))
}

/// `σ(κ Σ_j a_ij (X_j − X_i))` per plane with attention from
/// [`tran_attention`].
pub fn tran_coupling<'t>(
    planes: &[Tensor<'t>],
    graph: &SparseGraph,
    params: &LayerParams<'t>,
    cfg: &CouplingConfig,
) -> Result<Vec<Tensor<'t>>> {
    if graph.has_self_loops() {
        return Err(Error::Contract("tran coupling expects a graph without self-loops".into()));
    }
    let width = planes.first().map_or(0, |p| p.shape().1);
    check_planes(planes, graph.n(), width)?;
    let att = tran_attention(planes, graph, params, cfg.heads, cfg.attn_dim)?;
    difference_aggregate(&att, planes, graph, cfg.kappa, cfg.leaky_slope)
}

/// `σ(κ (Σ_j a_ij X_j − (Σ_j a_ij) X_i))` for fixed edge weights `att`.
pub fn difference_aggregate<'t>(
    att: &Tensor<'t>,
    planes: &[Tensor<'t>],
    graph: &SparseGraph,
    kappa: f64,
    slope: f64,
) -> Result<Vec<Tensor<'t>>> {
    let mass = att.segment_sum(graph)?;
    planes
        .iter()
        .map(|x| {
            let pulled = Tensor::edge_aggregate(att, x, graph)?;
            Ok(pulled.sub(&x.scale_rows(&mass)?)?.scale(kappa).leaky_relu(slope))
        })
        .collect()
}

/// Dispatches on `cfg.kind`.
pub fn apply_coupling<'t>(
    cfg: &CouplingConfig,
    planes: &[Tensor<'t>],
    graphs: &CouplingGraphs,
    params: &LayerParams<'t>,
) -> Result<Vec<Tensor<'t>>> {
    match cfg.kind {
        CouplingKind::Gcn => gcn_coupling(planes, &graphs.normalized, params, cfg.leaky_slope),
        CouplingKind::Gat => gat_coupling(planes, &graphs.with_loops, params, cfg.heads, cfg.leaky_slope),
        CouplingKind::Tran => tran_coupling(planes, &graphs.without_loops, params, cfg),
    }
}

/// Dense helper used by tests and examples: the attention matrix of edge
/// weights in CSR order.
pub fn attention_matrix(att: &Matrix, graph: &SparseGraph) -> Matrix {
    let mut m = Matrix::zeros(graph.n(), graph.n());
    let cols = graph.col_indices();
    for (e, &i) in graph.edge_rows().iter().enumerate() {
        m.set(i, cols[e], att.get(e, 0));
    }
    m
}

#[cfg(test)]
mod tests;
