//! Kuramoto phases on a ring synchronize while the energy decreases.

use oscgnn::dynamics::{integrate_kuramoto, kuramoto_energy, order_parameter, sample_grid, Rk45Options};
use oscgnn::graph::SparseGraph;

fn main() -> oscgnn::Result<()> {
    let g = SparseGraph::ring(6, false)?;
    let phi0 = [0.0, 0.9, 1.5, 2.0, 2.4, 3.0];
    let grid = sample_grid(20.0, 10);
    let traj = integrate_kuramoto(&phi0, 0.0, &g, 20.0, &grid, &Rk45Options::with_tolerances(1e-10, 1e-12))?;
    println!("{:>6} {:>10} {:>8}", "t", "energy", "order");
    for (t, phi) in traj.times.iter().zip(&traj.states) {
        println!("{t:>6.2} {:>10.5} {:>8.5}", kuramoto_energy(phi, 0.0, &g)?, order_parameter(phi));
    }
    Ok(())
}
