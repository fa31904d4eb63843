//! Differentiable operations on [`Tensor`] handles.
//!
//! Each op computes its value eagerly and records a closure mapping the
//! output gradient to parent gradients. Shape checks happen before anything
//! is recorded.

use std::f64::consts::PI;
use std::rc::Rc;
use std::sync::Arc;

use super::{Matrix, Tensor};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

fn same_shape(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension {
            op,
            left: a,
            right: b,
        });
    }
    Ok(())
}

impl<'t> Tensor<'t> {
    pub fn matmul(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        let out = a.matmul(&b)?;
        Ok(self.record(out, &[*self, *other], move |g| {
            vec![g.matmul_t(&b).unwrap(), a.t_matmul(g).unwrap()]
        }))
    }

    pub fn add(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", a.shape(), b.shape())?;
        let out = a.zip_map(&b, |x, y| x + y);
        Ok(self.record(out, &[*self, *other], |g| vec![g.clone(), g.clone()]))
    }

    pub fn sub(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", a.shape(), b.shape())?;
        let out = a.zip_map(&b, |x, y| x - y);
        Ok(self.record(out, &[*self, *other], |g| vec![g.clone(), g.scaled(-1.0)]))
    }

    pub fn hadamard(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("hadamard", a.shape(), b.shape())?;
        let out = a.zip_map(&b, |x, y| x * y);
        Ok(self.record(out, &[*self, *other], move |g| {
            vec![g.zip_map(&b, |g, y| g * y), g.zip_map(&a, |g, x| g * x)]
        }))
    }

    pub fn scale(&self, s: f64) -> Tensor<'t> {
        let out = self.value().scaled(s);
        self.record(out, &[*self], move |g| vec![g.scaled(s)])
    }

    /// Adds a constant to every entry.
    pub fn offset(&self, c: f64) -> Tensor<'t> {
        let out = self.value().map(|x| x + c);
        self.record(out, &[*self], |g| vec![g.clone()])
    }

    /// Adds a 1×cols bias to every row.
    pub fn add_row(&self, bias: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (x, b) = (self.value(), bias.value());
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::Dimension {
                op: "add_row",
                left: x.shape(),
                right: b.shape(),
            });
        }
        let mut out = (*x).clone();
        for i in 0..out.rows() {
            for (o, bb) in out.row_mut(i).iter_mut().zip(b.data()) {
                *o += bb;
            }
        }
        Ok(self.record(out, &[*self, *bias], |g| vec![g.clone(), g.col_sums()]))
    }

    /// Multiplies every entry by a 1×1 tensor.
    pub fn scale_by(&self, s: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (x, sv) = (self.value(), s.value());
        same_shape("scale_by", sv.shape(), (1, 1))?;
        let k = sv.item();
        let out = x.scaled(k);
        Ok(self.record(out, &[*self, *s], move |g| {
            vec![g.scaled(k), Matrix::scalar(g.dot(&x))]
        }))
    }

    /// Adds a 1×1 tensor to every entry.
    pub fn shift_by(&self, s: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (x, sv) = (self.value(), s.value());
        same_shape("shift_by", sv.shape(), (1, 1))?;
        let k = sv.item();
        let out = x.map(|v| v + k);
        Ok(self.record(out, &[*self, *s], |g| {
            vec![g.clone(), Matrix::scalar(g.sum())]
        }))
    }

    /// Scales row `i` by `s[i]`, where `s` is rows×1.
    pub fn scale_rows(&self, s: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (x, sv) = (self.value(), s.value());
        if sv.shape() != (x.rows(), 1) {
            return Err(Error::Dimension {
                op: "scale_rows",
                left: x.shape(),
                right: sv.shape(),
            });
        }
        let mut out = (*x).clone();
        for i in 0..out.rows() {
            let k = sv.get(i, 0);
            out.row_mut(i).iter_mut().for_each(|v| *v *= k);
        }
        Ok(self.record(out, &[*self, *s], move |g| {
            let mut gx = g.clone();
            let mut gs = Matrix::zeros(x.rows(), 1);
            for i in 0..x.rows() {
                let k = sv.get(i, 0);
                gx.row_mut(i).iter_mut().for_each(|v| *v *= k);
                gs.set(i, 0, g.row(i).iter().zip(x.row(i)).map(|(a, b)| a * b).sum());
            }
            vec![gx, gs]
        }))
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor<'t> {
        let x = self.value();
        let out = x.map(|v| if v >= 0.0 { v } else { slope * v });
        self.record(out, &[*self], move |g| {
            vec![g.zip_map(&x, |g, v| if v >= 0.0 { g } else { slope * g })]
        })
    }

    /// Elementwise square root. Negative input is a domain error; the
    /// derivative at exactly zero is taken as zero.
    pub fn sqrt(&self) -> Result<Tensor<'t>> {
        let x = self.value();
        if let Some(bad) = x.data().iter().find(|v| **v < 0.0 || v.is_nan()) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: format!("negative input {bad}"),
            });
        }
        let out = Rc::new(x.map(f64::sqrt));
        let y = Rc::clone(&out);
        Ok(self.record((*out).clone(), &[*self], move |g| {
            vec![g.zip_map(&y, |g, s| if s > 0.0 { 0.5 * g / s } else { 0.0 })]
        }))
    }

    /// `sqrt(re² + im²)` with derivative `(re, im)/r`, taken as zero at the
    /// origin.
    pub fn magnitude(re: &Tensor<'t>, im: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (re.value(), im.value());
        same_shape("magnitude", a.shape(), b.shape())?;
        let r = Rc::new(a.zip_map(&b, f64::hypot));
        let rr = Rc::clone(&r);
        Ok(re.record((*r).clone(), &[*re, *im], move |g| {
            let mut ga = g.clone();
            let mut gb = g.clone();
            for k in 0..g.len() {
                let r = rr.data()[k];
                let (da, db) = if r > 0.0 {
                    (a.data()[k] / r, b.data()[k] / r)
                } else {
                    (0.0, 0.0)
                };
                ga.data_mut()[k] *= da;
                gb.data_mut()[k] *= db;
            }
            vec![ga, gb]
        }))
    }

    /// Two-argument arctangent `atan2(self, x)` in (−π, π]. Returns 0 at the
    /// origin, where the derivative is also taken as zero.
    pub fn atan2(&self, x: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (yv, xv) = (self.value(), x.value());
        same_shape("atan2", yv.shape(), xv.shape())?;
        let out = yv.zip_map(&xv, atan2_principal);
        Ok(self.record(out, &[*self, *x], move |g| {
            let mut gy = g.clone();
            let mut gx = g.clone();
            for k in 0..g.len() {
                let (y, x) = (yv.data()[k], xv.data()[k]);
                let r2 = x * x + y * y;
                let (dy, dx) = if r2 > 0.0 { (x / r2, -y / r2) } else { (0.0, 0.0) };
                gy.data_mut()[k] *= dy;
                gx.data_mut()[k] *= dx;
            }
            vec![gy, gx]
        }))
    }

    pub fn sin(&self) -> Tensor<'t> {
        let x = self.value();
        let out = x.map(f64::sin);
        self.record(out, &[*self], move |g| vec![g.zip_map(&x, |g, v| g * v.cos())])
    }

    pub fn cos(&self) -> Tensor<'t> {
        let x = self.value();
        let out = x.map(f64::cos);
        self.record(out, &[*self], move |g| vec![g.zip_map(&x, |g, v| -g * v.sin())])
    }

    pub fn exp(&self) -> Tensor<'t> {
        let out = Rc::new(self.value().map(f64::exp));
        let y = Rc::clone(&out);
        self.record((*out).clone(), &[*self], move |g| {
            vec![g.zip_map(&y, |g, e| g * e)]
        })
    }

    pub fn powi(&self, n: i32) -> Tensor<'t> {
        let x = self.value();
        let out = x.map(|v| v.powi(n));
        self.record(out, &[*self], move |g| {
            vec![g.zip_map(&x, |g, v| g * n as f64 * v.powi(n - 1))]
        })
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Tensor<'t> {
        let x = self.value();
        let mut out = (*x).clone();
        for i in 0..out.rows() {
            softmax_in_place(out.row_mut(i));
        }
        let s = Rc::new(out);
        let sv = Rc::clone(&s);
        self.record((*s).clone(), &[*self], move |g| {
            let mut gx = g.clone();
            for i in 0..g.rows() {
                let srow = sv.row(i);
                let dot: f64 = g.row(i).iter().zip(srow).map(|(a, b)| a * b).sum();
                for (o, (gi, si)) in gx.row_mut(i).iter_mut().zip(g.row(i).iter().zip(srow)) {
                    *o = si * (gi - dot);
                }
            }
            vec![gx]
        })
    }

    pub fn sum(&self) -> Tensor<'t> {
        let x = self.value();
        let (r, c) = x.shape();
        self.record(Matrix::scalar(x.sum()), &[*self], move |g| {
            vec![Matrix::filled(r, c, g.item())]
        })
    }

    pub fn mean(&self) -> Tensor<'t> {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn concat_cols(parts: &[Tensor<'t>]) -> Result<Tensor<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat_cols of nothing".into()))?;
        let values: Vec<Rc<Matrix>> = parts.iter().map(Tensor::value).collect();
        let rows = values[0].rows();
        for v in &values {
            if v.rows() != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: values[0].shape(),
                    right: v.shape(),
                });
            }
        }
        let widths: Vec<usize> = values.iter().map(|v| v.cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Matrix::zeros(rows, total);
        for i in 0..rows {
            let mut off = 0;
            for v in &values {
                out.row_mut(i)[off..off + v.cols()].copy_from_slice(v.row(i));
                off += v.cols();
            }
        }
        Ok(first.record(out, parts, move |g| {
            let mut off = 0;
            widths
                .iter()
                .map(|&w| {
                    let mut part = Matrix::zeros(rows, w);
                    for i in 0..rows {
                        part.row_mut(i).copy_from_slice(&g.row(i)[off..off + w]);
                    }
                    off += w;
                    part
                })
                .collect()
        }))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor<'t>> {
        let x = self.value();
        if start > end || end > x.cols() {
            return Err(Error::Dimension {
                op: "slice_cols",
                left: x.shape(),
                right: (start, end),
            });
        }
        let (rows, cols) = x.shape();
        let w = end - start;
        let mut out = Matrix::zeros(rows, w);
        for i in 0..rows {
            out.row_mut(i).copy_from_slice(&x.row(i)[start..end]);
        }
        Ok(self.record(out, &[*self], move |g| {
            let mut gx = Matrix::zeros(rows, cols);
            for i in 0..rows {
                gx.row_mut(i)[start..end].copy_from_slice(g.row(i));
            }
            vec![gx]
        }))
    }

    /// Row `k` of the output is row `index[k]` of `self`.
    pub fn gather_rows(&self, index: Arc<[usize]>) -> Result<Tensor<'t>> {
        let x = self.value();
        let (rows, cols) = x.shape();
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(Error::Input(format!(
                "gather_rows index {bad} out of range for {rows} rows"
            )));
        }
        let mut out = Matrix::zeros(index.len(), cols);
        for (k, &i) in index.iter().enumerate() {
            out.row_mut(k).copy_from_slice(x.row(i));
        }
        Ok(self.record(out, &[*self], move |g| {
            let mut gx = Matrix::zeros(rows, cols);
            for (k, &i) in index.iter().enumerate() {
                for (o, v) in gx.row_mut(i).iter_mut().zip(g.row(k)) {
                    *o += v;
                }
            }
            vec![gx]
        }))
    }

    /// Row-wise dot product of two equally shaped matrices, as rows×1.
    pub fn row_dot(&self, other: &Tensor<'t>) -> Result<Tensor<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("row_dot", a.shape(), b.shape())?;
        let out = Matrix::column(
            (0..a.rows())
                .map(|i| a.row(i).iter().zip(b.row(i)).map(|(x, y)| x * y).sum())
                .collect(),
        );
        Ok(self.record(out, &[*self, *other], move |g| {
            let mut ga = (*b).clone();
            let mut gb = (*a).clone();
            for i in 0..a.rows() {
                let k = g.get(i, 0);
                ga.row_mut(i).iter_mut().for_each(|v| *v *= k);
                gb.row_mut(i).iter_mut().for_each(|v| *v *= k);
            }
            vec![ga, gb]
        }))
    }

    /// Sparse-dense product `G · self` using the graph's stored values.
    pub fn spmm(&self, graph: &SparseGraph) -> Result<Tensor<'t>> {
        let x = self.value();
        if x.rows() != graph.n() {
            return Err(Error::Dimension {
                op: "spmm",
                left: (graph.n(), graph.n()),
                right: x.shape(),
            });
        }
        let out = graph.apply(&x);
        let g2 = graph.clone();
        Ok(self.record(out, &[*self], move |g| vec![g2.apply_transpose(g)]))
    }

    /// Edge-weighted aggregation: `out[i] = Σ_{e ∈ row i} w[e] · x[col(e)]`,
    /// with `weights` of shape nnz×1 in CSR order.
    pub fn edge_aggregate(
        weights: &Tensor<'t>,
        x: &Tensor<'t>,
        graph: &SparseGraph,
    ) -> Result<Tensor<'t>> {
        let (w, xv) = (weights.value(), x.value());
        if w.shape() != (graph.nnz(), 1) || xv.rows() != graph.n() {
            return Err(Error::Dimension {
                op: "edge_aggregate",
                left: w.shape(),
                right: xv.shape(),
            });
        }
        let offsets = graph.row_offsets_arc();
        let cols = graph.col_indices_arc();
        let d = xv.cols();
        let mut out = Matrix::zeros(graph.n(), d);
        for i in 0..graph.n() {
            for e in offsets[i]..offsets[i + 1] {
                let we = w.get(e, 0);
                let src = xv.row(cols[e]);
                for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                    *o += we * s;
                }
            }
        }
        let n = graph.n();
        Ok(weights.record(out, &[*weights, *x], move |g| {
            let mut gw = Matrix::zeros(w.rows(), 1);
            let mut gx = Matrix::zeros(n, d);
            for i in 0..n {
                let gi = g.row(i);
                for e in offsets[i]..offsets[i + 1] {
                    let j = cols[e];
                    gw.set(e, 0, gi.iter().zip(xv.row(j)).map(|(a, b)| a * b).sum());
                    let we = w.get(e, 0);
                    for (o, a) in gx.row_mut(j).iter_mut().zip(gi) {
                        *o += we * a;
                    }
                }
            }
            vec![gw, gx]
        }))
    }

    /// Softmax of nnz×k edge scores within each CSR row, per column.
    /// Empty rows are allowed and produce no entries.
    pub fn segment_softmax(&self, graph: &SparseGraph) -> Result<Tensor<'t>> {
        let x = self.value();
        if x.rows() != graph.nnz() {
            return Err(Error::Dimension {
                op: "segment_softmax",
                left: x.shape(),
                right: (graph.nnz(), x.cols()),
            });
        }
        let offsets = graph.row_offsets_arc();
        let k = x.cols();
        let mut out = (*x).clone();
        let mut buf = Vec::new();
        for i in 0..graph.n() {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            for c in 0..k {
                buf.clear();
                buf.extend((lo..hi).map(|e| x.get(e, c)));
                softmax_in_place(&mut buf);
                for (e, v) in (lo..hi).zip(&buf) {
                    out.set(e, c, *v);
                }
            }
        }
        let s = Rc::new(out);
        let sv = Rc::clone(&s);
        let n = graph.n();
        Ok(self.record((*s).clone(), &[*self], move |g| {
            let mut gx = Matrix::zeros(sv.rows(), k);
            for i in 0..n {
                let (lo, hi) = (offsets[i], offsets[i + 1]);
                for c in 0..k {
                    let dot: f64 = (lo..hi).map(|e| g.get(e, c) * sv.get(e, c)).sum();
                    for e in lo..hi {
                        gx.set(e, c, sv.get(e, c) * (g.get(e, c) - dot));
                    }
                }
            }
            vec![gx]
        }))
    }

    /// Sums nnz×k edge values within each CSR row, giving n×k.
    pub fn segment_sum(&self, graph: &SparseGraph) -> Result<Tensor<'t>> {
        let x = self.value();
        if x.rows() != graph.nnz() {
            return Err(Error::Dimension {
                op: "segment_sum",
                left: x.shape(),
                right: (graph.nnz(), x.cols()),
            });
        }
        let offsets = graph.row_offsets_arc();
        let (n, k) = (graph.n(), x.cols());
        let mut out = Matrix::zeros(n, k);
        for i in 0..n {
            for e in offsets[i]..offsets[i + 1] {
                for (o, v) in out.row_mut(i).iter_mut().zip(x.row(e)) {
                    *o += v;
                }
            }
        }
        let nnz = x.rows();
        Ok(self.record(out, &[*self], move |g| {
            let mut gx = Matrix::zeros(nnz, k);
            for i in 0..n {
                for e in offsets[i]..offsets[i + 1] {
                    gx.row_mut(e).copy_from_slice(g.row(i));
                }
            }
            vec![gx]
        }))
    }

    /// Mean of rows grouped by `membership[row]`, giving groups×cols.
    pub fn group_mean(&self, membership: Arc<[usize]>, groups: usize) -> Result<Tensor<'t>> {
        let x = self.value();
        let counts = group_counts(&membership, x.rows(), groups)?;
        let cols = x.cols();
        let mut out = Matrix::zeros(groups, cols);
        for (r, &gid) in membership.iter().enumerate() {
            for (o, v) in out.row_mut(gid).iter_mut().zip(x.row(r)) {
                *o += v / counts[gid] as f64;
            }
        }
        let rows = x.rows();
        Ok(self.record(out, &[*self], move |g| {
            let mut gx = Matrix::zeros(rows, cols);
            for (r, &gid) in membership.iter().enumerate() {
                let inv = 1.0 / counts[gid] as f64;
                for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(gid)) {
                    *o = v * inv;
                }
            }
            vec![gx]
        }))
    }

    /// Column-wise max of rows grouped by `membership[row]`.
    pub fn group_max(&self, membership: Arc<[usize]>, groups: usize) -> Result<Tensor<'t>> {
        let x = self.value();
        group_counts(&membership, x.rows(), groups)?;
        let cols = x.cols();
        let mut out = Matrix::filled(groups, cols, f64::NEG_INFINITY);
        let mut argmax = vec![usize::MAX; groups * cols];
        for (r, &gid) in membership.iter().enumerate() {
            for c in 0..cols {
                if x.get(r, c) > out.get(gid, c) {
                    out.set(gid, c, x.get(r, c));
                    argmax[gid * cols + c] = r;
                }
            }
        }
        let rows = x.rows();
        Ok(self.record(out, &[*self], move |g| {
            let mut gx = Matrix::zeros(rows, cols);
            for gid in 0..groups {
                for c in 0..cols {
                    let r = argmax[gid * cols + c];
                    gx.set(r, c, gx.get(r, c) + g.get(gid, c));
                }
            }
            vec![gx]
        }))
    }

    /// Mean cross-entropy of row-wise log-softmax over the selected rows.
    pub fn cross_entropy(&self, labels: &[usize], rows: &[usize]) -> Result<Tensor<'t>> {
        let x = self.value();
        if rows.is_empty() {
            return Err(Error::Mask("cross-entropy over an empty mask".into()));
        }
        if labels.len() != x.rows() {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: x.shape(),
                right: (labels.len(), 1),
            });
        }
        let classes = x.cols();
        let mut probs = Matrix::zeros(rows.len(), classes);
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let label = labels[r];
            if label >= classes {
                return Err(Error::Input(format!(
                    "label {label} out of range for {classes} classes"
                )));
            }
            let row = x.row(r);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            for (p, v) in probs.row_mut(k).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let m = rows.len() as f64;
        let rows: Vec<usize> = rows.to_vec();
        let labels: Vec<usize> = labels.to_vec();
        let shape = x.shape();
        Ok(self.record(Matrix::scalar(loss / m), &[*self], move |g| {
            let scale = g.item() / m;
            let mut gx = Matrix::zeros(shape.0, shape.1);
            for (k, &r) in rows.iter().enumerate() {
                for c in 0..shape.1 {
                    let onehot = if c == labels[r] { 1.0 } else { 0.0 };
                    let v = gx.get(r, c) + scale * (probs.get(k, c) - onehot);
                    gx.set(r, c, v);
                }
            }
            vec![gx]
        }))
    }

    /// Mean squared error over the selected rows against a same-width target.
    pub fn mse(&self, targets: &Matrix, rows: &[usize]) -> Result<Tensor<'t>> {
        let x = self.value();
        if rows.is_empty() {
            return Err(Error::Mask("mean squared error over an empty mask".into()));
        }
        same_shape("mse", x.shape(), targets.shape())?;
        let cols = x.cols();
        let count = (rows.len() * cols) as f64;
        let mut loss = 0.0;
        for &r in rows {
            for c in 0..cols {
                let d = x.get(r, c) - targets.get(r, c);
                loss += d * d;
            }
        }
        let rows: Vec<usize> = rows.to_vec();
        let t = targets.clone();
        Ok(self.record(Matrix::scalar(loss / count), &[*self], move |g| {
            let mut gx = Matrix::zeros(x.rows(), cols);
            let s = 2.0 * g.item() / count;
            for &r in &rows {
                for c in 0..cols {
                    gx.set(r, c, gx.get(r, c) + s * (x.get(r, c) - t.get(r, c)));
                }
            }
            vec![gx]
        }))
    }
}

fn group_counts(membership: &[usize], rows: usize, groups: usize) -> Result<Vec<usize>> {
    if membership.len() != rows {
        return Err(Error::Pooling(format!(
            "membership covers {} rows, features have {rows}",
            membership.len()
        )));
    }
    let mut counts = vec![0usize; groups];
    for &g in membership {
        if g >= groups {
            return Err(Error::Pooling(format!("group id {g} out of range ({groups} groups)")));
        }
        counts[g] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Pooling(format!("graph {empty} has no nodes")));
    }
    Ok(counts)
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// `atan2` mapped onto (−π, π]; the origin maps to 0.
pub fn atan2_principal(y: f64, x: f64) -> f64 {
    if y == 0.0 && x == 0.0 {
        return 0.0;
    }
    let a = y.atan2(x);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}
