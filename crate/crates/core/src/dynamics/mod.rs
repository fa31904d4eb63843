//! Continuous oscillator dynamics: right-hand sides, a Dormand-Prince
//! reference integrator and analyzers for the amplitude and phase regimes.

mod analysis;
mod harmonic;
mod rk45;
mod trajectory;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

pub use analysis::{
    criticality_residual, estimate_decay_rate, order_parameter, phase_velocity_limit,
    sync_spread, unwrap_phases, CriticalityReport, DecayFit, DecayKind, DECAY_MIN_POINTS,
};
pub use harmonic::{harmonic_energy, harmonic_modal_solution, harmonic_rhs, HarmonicParams};
pub use rk45::{integrate_rk45, Rk45Options};
pub use trajectory::{StateLayout, Trajectory};

/// Stuart-Landau oscillator parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SLParams {
    /// Hopf parameter (1/time).
    pub alpha: f64,
    /// Amplitude nonlinearity.
    pub beta: f64,
    /// Natural frequency (rad/time).
    pub omega: f64,
    /// Phase shift parameter.
    pub gamma: f64,
    /// Coupling strength multiplying the graph term.
    pub kappa: f64,
}

impl SLParams {
    pub fn new(alpha: f64, beta: f64, omega: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            omega,
            gamma,
            kappa: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.omega, self.gamma, self.kappa];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite oscillator parameters {self:?}")));
        }
        Ok(())
    }

    /// Non-fatal issues: the standard form assumes `beta > 0`.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.beta <= 0.0 {
            w.push(format!(
                "beta = {} <= 0: amplitude may grow without bound",
                self.beta
            ));
        }
        w
    }

    /// Limit-cycle radius `sqrt(alpha/beta)` when both are positive.
    pub fn limit_radius(&self) -> Option<f64> {
        (self.alpha > 0.0 && self.beta > 0.0).then(|| (self.alpha / self.beta).sqrt())
    }

    /// Asymptotic phase velocity on the limit cycle, `omega - gamma alpha/beta`.
    pub fn limit_phase_velocity(&self) -> f64 {
        match self.limit_radius() {
            Some(r) => self.omega - self.gamma * r * r,
            None => self.omega,
        }
    }
}

impl Default for SLParams {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0, 0.0)
    }
}

fn check_nodes(graph: Option<&SparseGraph>, n: usize) -> Result<()> {
    if let Some(g) = graph {
        if g.n() != n {
            return Err(Error::Dimension {
                op: "rhs",
                left: (g.n(), g.n()),
                right: (n, 1),
            });
        }
    }
    Ok(())
}

/// `ż_j = (α + iω − (β + iγ)|z_j|²) z_j + κ Σ_l A_lj (z_l − z_j)`.
/// Without a graph the oscillators are decoupled.
pub fn sl_rhs(z: &[Complex64], p: &SLParams, graph: Option<&SparseGraph>) -> Result<Vec<Complex64>> {
    check_nodes(graph, z.len())?;
    let lin = Complex64::new(p.alpha, p.omega);
    let cub = Complex64::new(p.beta, p.gamma);
    let mut out: Vec<Complex64> = z.iter().map(|&zj| (lin - cub * zj.norm_sqr()) * zj).collect();
    if let Some(g) = graph {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (&l, &a) in g.neighbors(j).iter().zip(g.row_values(j)) {
                if l != j {
                    acc += a * (z[l] - z[j]);
                }
            }
            *o += p.kappa * acc;
        }
    }
    Ok(out)
}

/// `φ̇_j = ω + Σ_l A_lj sin(φ_l − φ_j)`.
pub fn kuramoto_rhs(phi: &[f64], omega: f64, graph: &SparseGraph) -> Result<Vec<f64>> {
    check_nodes(Some(graph), phi.len())?;
    Ok((0..phi.len())
        .map(|j| {
            omega
                + graph
                    .neighbors(j)
                    .iter()
                    .zip(graph.row_values(j))
                    .filter(|(&l, _)| l != j)
                    .map(|(&l, &a)| a * (phi[l] - phi[j]).sin())
                    .sum::<f64>()
        })
        .collect())
}

/// Gradient-flow energy `E = −Σ_{j<k} A_jk cos(φ_j − φ_k) − ω Σ_j φ_j`,
/// signed so that `−∇E` is exactly [`kuramoto_rhs`].
pub fn kuramoto_energy(phi: &[f64], omega: f64, graph: &SparseGraph) -> Result<f64> {
    check_nodes(Some(graph), phi.len())?;
    let mut e = 0.0;
    for j in 0..phi.len() {
        for (&k, &a) in graph.neighbors(j).iter().zip(graph.row_values(j)) {
            if j < k {
                e -= a * (phi[j] - phi[k]).cos();
            }
        }
    }
    Ok(e - omega * phi.iter().sum::<f64>())
}

/// Packs complex node states as `[re_0, im_0, re_1, im_1, …]`.
pub fn pack_complex(z: &[Complex64]) -> Vec<f64> {
    z.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn unpack_complex(y: &[f64]) -> Vec<Complex64> {
    y.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

/// RK45 integration of the (optionally coupled) Stuart-Landau system.
pub fn integrate_sl(
    z0: &[Complex64],
    p: &SLParams,
    graph: Option<&SparseGraph>,
    t_end: f64,
    sample_times: &[f64],
    opts: &Rk45Options,
) -> Result<Trajectory> {
    check_nodes(graph, z0.len())?;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let z = unpack_complex(y);
        let f = sl_rhs(&z, p, graph).expect("shape checked");
        dy.copy_from_slice(&pack_complex(&f));
    };
    let mut traj = integrate_rk45(rhs, &pack_complex(z0), (0.0, t_end), sample_times, opts)?;
    traj.layout = StateLayout::Complex;
    Ok(traj)
}

/// RK45 integration of identical Kuramoto oscillators.
pub fn integrate_kuramoto(
    phi0: &[f64],
    omega: f64,
    graph: &SparseGraph,
    t_end: f64,
    sample_times: &[f64],
    opts: &Rk45Options,
) -> Result<Trajectory> {
    check_nodes(Some(graph), phi0.len())?;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy.copy_from_slice(&kuramoto_rhs(y, omega, graph).expect("shape checked"));
    };
    let mut traj = integrate_rk45(rhs, phi0, (0.0, t_end), sample_times, opts)?;
    traj.layout = StateLayout::Phase;
    Ok(traj)
}

/// Evenly spaced sample times `0, dt, 2dt, …` up to and including `t_end`.
pub fn sample_grid(t_end: f64, count: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=count).map(|k| t_end * k as f64 / count as f64).collect();
    if let Some(last) = grid.last_mut() {
        *last = t_end;
    }
    grid
}
