//! Coupled harmonic oscillators: closed-form modal solution against RK45.

use oscgnn::dynamics::{harmonic_energy, harmonic_modal_solution, harmonic_rhs, integrate_rk45, sample_grid, HarmonicParams, Rk45Options};
use oscgnn::graph::SparseGraph;

fn main() -> oscgnn::Result<()> {
    let g = SparseGraph::build(&[(0, 1), (1, 2), (2, 3), (0, 2)], 4, false)?;
    let x0 = [1.0, 0.0, -0.5, 0.2];
    let v0 = [0.0, 0.3, 0.0, -0.1];
    let y0: Vec<f64> = x0.iter().zip(&v0).flat_map(|(&x, &v)| [x, v]).collect();
    for zeta in [0.0, 0.2] {
        let p = HarmonicParams::new(zeta, 1.0);
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy.copy_from_slice(&harmonic_rhs(y, &p, Some(&g)).unwrap());
        let grid = sample_grid(30.0, 60);
        let traj = integrate_rk45(rhs, &y0, (0.0, 30.0), &grid, &Rk45Options::with_tolerances(1e-11, 1e-13))?;
        let mut err = 0.0f64;
        for (t, y) in traj.times.iter().zip(&traj.states) {
            let (x, v) = harmonic_modal_solution(&x0, &v0, Some(&g), &p, *t)?;
            for j in 0..4 {
                err = err.max((x[j] - y[2 * j]).abs()).max((v[j] - y[2 * j + 1]).abs());
            }
        }
        let (_, last) = traj.last().unwrap();
        println!(
            "zeta {zeta}: modal vs rk45 {err:.2e}, energy {:.6} -> {:.6}",
            harmonic_energy(&y0, &p, Some(&g))?,
            harmonic_energy(last, &p, Some(&g))?
        );
    }
    Ok(())
}
