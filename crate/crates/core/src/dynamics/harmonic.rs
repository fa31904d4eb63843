use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Damped harmonic oscillators, optionally coupled through a graph:
/// `ẍ + (2ζω₀ + c) ẋ + ω₀² x + L x = 0` with `L` the graph Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicParams {
    pub zeta: f64,
    pub omega0: f64,
    pub c: f64,
}

impl HarmonicParams {
    pub fn new(zeta: f64, omega0: f64) -> Self {
        Self {
            zeta,
            omega0,
            c: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta >= 0.0) || !(self.c >= 0.0) || !self.omega0.is_finite() {
            return Err(Error::Config(format!(
                "harmonic parameters need zeta >= 0, c >= 0 and finite omega0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Total velocity damping coefficient.
    pub fn damping(&self) -> f64 {
        2.0 * self.zeta * self.omega0.abs() + self.c
    }
}

fn stiffness(n: usize, p: &HarmonicParams, graph: Option<&SparseGraph>) -> Result<DMatrix<f64>> {
    let mut k = DMatrix::<f64>::identity(n, n) * (p.omega0 * p.omega0);
    if let Some(g) = graph {
        if g.n() != n {
            return Err(Error::Dimension {
                op: "harmonic",
                left: (g.n(), g.n()),
                right: (n, 1),
            });
        }
        let lap = g.laplacian();
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += lap.get(i, j);
            }
        }
    }
    Ok(k)
}

/// Right-hand side on the interleaved `[x_0, v_0, x_1, v_1, …]` layout.
pub fn harmonic_rhs(y: &[f64], p: &HarmonicParams, graph: Option<&SparseGraph>) -> Result<Vec<f64>> {
    let n = y.len() / 2;
    if let Some(g) = graph {
        if g.n() != n {
            return Err(Error::Dimension {
                op: "harmonic_rhs",
                left: (g.n(), g.n()),
                right: (n, 2),
            });
        }
    }
    let b = p.damping();
    let w2 = p.omega0 * p.omega0;
    let mut out = vec![0.0; y.len()];
    for j in 0..n {
        let (x, v) = (y[2 * j], y[2 * j + 1]);
        let mut force = -w2 * x - b * v;
        if let Some(g) = graph {
            for (&l, &a) in g.neighbors(j).iter().zip(g.row_values(j)) {
                if l != j {
                    force -= a * (x - y[2 * l]);
                }
            }
        }
        out[2 * j] = v;
        out[2 * j + 1] = force;
    }
    Ok(out)
}

/// `½|ẋ|² + ½ xᵀ K x` with `K = ω₀² I + L`.
pub fn harmonic_energy(y: &[f64], p: &HarmonicParams, graph: Option<&SparseGraph>) -> Result<f64> {
    let n = y.len() / 2;
    let k = stiffness(n, p, graph)?;
    let x = DVector::from_iterator(n, (0..n).map(|j| y[2 * j]));
    let kinetic: f64 = (0..n).map(|j| y[2 * j + 1].powi(2)).sum();
    Ok(0.5 * kinetic + 0.5 * x.dot(&(&k * &x)))
}

/// Position and velocity of one mode `q̈ + b q̇ + λ q = 0`.
fn mode(q0: f64, dq0: f64, lambda: f64, b: f64, t: f64) -> (f64, f64) {
    let disc = b * b - 4.0 * lambda;
    let scale = (b * b).max(lambda.abs()).max(1.0);
    if disc.abs() <= 1e-12 * scale {
        let s = -0.5 * b;
        let e = (s * t).exp();
        let c1 = dq0 - s * q0;
        let q = (q0 + c1 * t) * e;
        (q, s * q + c1 * e)
    } else if disc < 0.0 {
        let sigma = 0.5 * b;
        let wd = (lambda - sigma * sigma).sqrt();
        let e = (-sigma * t).exp();
        let (s, c) = (wd * t).sin_cos();
        let a = q0;
        let bb = (dq0 + sigma * q0) / wd;
        let q = e * (a * c + bb * s);
        let dq = -sigma * q + e * wd * (bb * c - a * s);
        (q, dq)
    } else {
        let root = disc.sqrt();
        let s1 = 0.5 * (-b + root);
        let s2 = 0.5 * (-b - root);
        let c1 = (dq0 - s2 * q0) / (s1 - s2);
        let c2 = q0 - c1;
        let (e1, e2) = ((s1 * t).exp(), (s2 * t).exp());
        (c1 * e1 + c2 * e2, c1 * s1 * e1 + c2 * s2 * e2)
    }
}

/// Closed-form state at time `t` by modal superposition over the
/// eigenvectors of `K = ω₀² I + L`. Returns positions and velocities.
pub fn harmonic_modal_solution(
    x0: &[f64],
    v0: &[f64],
    graph: Option<&SparseGraph>,
    p: &HarmonicParams,
    t: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let n = x0.len();
    if v0.len() != n {
        return Err(Error::Dimension {
            op: "harmonic_modal_solution",
            left: (n, 1),
            right: (v0.len(), 1),
        });
    }
    let k = stiffness(n, p, graph)?;
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite stiffness matrix".into()));
    }
    let eig = SymmetricEigen::new(k);
    let vecs = &eig.eigenvectors;
    let x = DVector::from_column_slice(x0);
    let v = DVector::from_column_slice(v0);
    let q0 = vecs.transpose() * &x;
    let dq0 = vecs.transpose() * &v;
    let b = p.damping();
    let mut q = DVector::zeros(n);
    let mut dq = DVector::zeros(n);
    for i in 0..n {
        let lambda = eig.eigenvalues[i];
        if !lambda.is_finite() {
            return Err(Error::Eigen(format!("eigenvalue {i} is not finite")));
        }
        // round-off can push the Laplacian's zero mode slightly negative
        let lambda = if lambda.abs() < 1e-12 { 0.0 } else { lambda };
        let (qi, dqi) = mode(q0[i], dq0[i], lambda, b, t);
        q[i] = qi;
        dq[i] = dqi;
    }
    let xt = vecs * q;
    let vt = vecs * dq;
    Ok((xt.iter().copied().collect(), vt.iter().copied().collect()))
}
