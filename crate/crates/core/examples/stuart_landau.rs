//! Single Stuart-Landau oscillator: limit cycle, critical decay and phase drift.

use num_complex::Complex64;
use oscgnn::dynamics::{estimate_decay_rate, integrate_sl, phase_velocity_limit, sample_grid, Rk45Options, SLParams};

fn main() -> oscgnn::Result<()> {
    let opts = Rk45Options::with_tolerances(1e-10, 1e-12);
    let grid = sample_grid(50.0, 500);

    for r0 in [0.1, 3.0] {
        let p = SLParams::new(1.0, 1.0, 1.0, 0.5);
        let traj = integrate_sl(&[Complex64::new(r0, 0.0)], &p, None, 50.0, &grid, &opts)?;
        let z = traj.complex_series(0);
        let phases: Vec<f64> = z.iter().map(|c| c.arg()).collect();
        println!(
            "r0 = {r0}: r(50) = {:.8}, phase velocity {:.5} (expected {})",
            z.last().unwrap().norm(),
            phase_velocity_limit(&traj.times, &phases)?,
            p.limit_phase_velocity()
        );
    }

    let critical = SLParams::new(0.0, 1.0, 1.0, 0.0);
    let long = sample_grid(200.0, 400);
    let traj = integrate_sl(&[Complex64::new(1.0, 0.0)], &critical, None, 200.0, &long, &opts)?;
    let mags: Vec<f64> = traj.complex_series(0).iter().map(|c| c.norm()).collect();
    let fit = estimate_decay_rate(&traj.times, &mags)?;
    println!("critical decay: {:?}, log-log slope {:.3}", fit.kind, fit.rate);
    Ok(())
}
