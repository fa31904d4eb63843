use num_complex::Complex64;
use serde::Serialize;

use super::SLParams;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

/// Minimum number of samples in the decay-fit window.
pub const DECAY_MIN_POINTS: usize = 20;
const PHASE_MIN_POINTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayKind {
    Exponential,
    Algebraic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub kind: DecayKind,
    /// Slope of `ln r` against `t` (exponential) or `ln t` (algebraic).
    pub rate: f64,
    pub r_squared: f64,
}

/// Least-squares slope and coefficient of determination.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Classifies magnitude decay over the final half of `(times, r)`.
pub fn estimate_decay_rate(times: &[f64], magnitudes: &[f64]) -> Result<DecayFit> {
    if times.len() != magnitudes.len() {
        return Err(Error::Dimension {
            op: "estimate_decay_rate",
            left: (times.len(), 1),
            right: (magnitudes.len(), 1),
        });
    }
    let start = times.len() / 2;
    let (t, r) = (&times[start..], &magnitudes[start..]);
    if t.len() < DECAY_MIN_POINTS {
        return Err(Error::Window {
            needed: DECAY_MIN_POINTS,
            got: t.len(),
        });
    }
    if r.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::FitRejected("non-positive magnitude in fit window".into()));
    }
    if t[0] <= 0.0 {
        return Err(Error::FitRejected("fit window must start after t = 0".into()));
    }
    if r.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::FitRejected("magnitude is not decreasing over the fit window".into()));
    }
    let log_r: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let log_t: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let (exp_rate, exp_r2) = linear_fit(t, &log_r);
    let (alg_rate, alg_r2) = linear_fit(&log_t, &log_r);
    Ok(if exp_r2 >= alg_r2 {
        DecayFit {
            kind: DecayKind::Exponential,
            rate: exp_rate,
            r_squared: exp_r2,
        }
    } else {
        DecayFit {
            kind: DecayKind::Algebraic,
            rate: alg_rate,
            r_squared: alg_r2,
        }
    })
}

/// Cumulative nearest-branch unwrapping.
pub fn unwrap_phases(phases: &[f64]) -> Vec<f64> {
    let tau = std::f64::consts::TAU;
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let d = p - phases[i - 1];
            offset -= tau * (d / tau).round();
        }
        out.push(p + offset);
    }
    out
}

/// Mean unwrapped phase velocity over the final quarter of the samples.
pub fn phase_velocity_limit(times: &[f64], phases: &[f64]) -> Result<f64> {
    if times.len() != phases.len() {
        return Err(Error::Dimension {
            op: "phase_velocity_limit",
            left: (times.len(), 1),
            right: (phases.len(), 1),
        });
    }
    let start = times.len() - times.len() / 4;
    let got = times.len() - start;
    if got < PHASE_MIN_POINTS {
        return Err(Error::Window {
            needed: PHASE_MIN_POINTS,
            got,
        });
    }
    let unwrapped = unwrap_phases(&phases[start - 1..]);
    let span = times[times.len() - 1] - times[start - 1];
    Ok((unwrapped[unwrapped.len() - 1] - unwrapped[0]) / span)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalityReport {
    pub residuals: Vec<f64>,
    /// Mean of `|cos(φ_j − φ_k) r_k / r_j|` over directed edges.
    pub mean_edge_ratio: f64,
}

/// Per-node `α + κ Σ_k A_jk (cos(φ_j − φ_k) r_k/r_j − 1)`.
pub fn criticality_residual(z: &[Complex64], p: &SLParams, graph: &SparseGraph) -> Result<CriticalityReport> {
    if graph.n() != z.len() {
        return Err(Error::Dimension {
            op: "criticality_residual",
            left: (graph.n(), graph.n()),
            right: (z.len(), 1),
        });
    }
    if let Some((node, r)) = z
        .iter()
        .map(|c| c.norm())
        .enumerate()
        .find(|(_, r)| *r < 1e-12)
    {
        return Err(Error::DegenerateMagnitude { node, r });
    }
    let mut residuals = Vec::with_capacity(z.len());
    let (mut ratio_sum, mut edges) = (0.0, 0usize);
    for j in 0..z.len() {
        let (rj, pj) = z[j].to_polar();
        let mut s = 0.0;
        for (&k, &a) in graph.neighbors(j).iter().zip(graph.row_values(j)) {
            if k == j {
                continue;
            }
            let (rk, pk) = z[k].to_polar();
            let ratio = (pj - pk).cos() * rk / rj;
            s += a * (ratio - 1.0);
            ratio_sum += ratio.abs();
            edges += 1;
        }
        residuals.push(p.alpha + p.kappa * s);
    }
    Ok(CriticalityReport {
        residuals,
        mean_edge_ratio: if edges == 0 { 0.0 } else { ratio_sum / edges as f64 },
    })
}

/// Kuramoto order parameter `|mean(e^{iφ})|`.
pub fn order_parameter(phases: &[f64]) -> f64 {
    if phases.is_empty() {
        return 0.0;
    }
    let s: Complex64 = phases.iter().map(|&p| Complex64::from_polar(1.0, p)).sum();
    s.norm() / phases.len() as f64
}

/// Largest pairwise distance `max |z_j − z_k|`.
pub fn sync_spread(z: &[Complex64]) -> f64 {
    let mut m = 0.0f64;
    for j in 0..z.len() {
        for k in j + 1..z.len() {
            m = m.max((z[j] - z[k]).norm());
        }
    }
    m
}
