//! The implicit magnitude update solved by Newton and by Cardano, and the
//! IMEX scheme staying monotone at a step where explicit Euler blows up.

use num_complex::Complex64;
use oscgnn::dynamics::SLParams;
use oscgnn::solvers::{magnitude_residual, simulate_sl_fixed, solve_cubic_cardano, solve_cubic_newton, SlScheme, StepConfig};

fn main() -> oscgnn::Result<()> {
    for (r, a, b, dt) in [(0.5, 1.0, 1.0, 0.1), (10.0, -0.5, 2.0, 1.0), (3.0, 0.2, 0.5, 0.5)] {
        let n = solve_cubic_newton(r, a, b, dt, 1e-12, 100)?;
        let c = solve_cubic_cardano(r, a, b, dt)?;
        println!(
            "r~={r} a={a} b={b} dt={dt}: newton {:.12} ({} iters), cardano {:.12}, residual {:.1e}",
            n.root,
            n.iterations,
            c.root,
            magnitude_residual(n.root, r, a, b, dt)
        );
    }

    let p = SLParams::new(-0.5, 2.0, 1.0, 0.0);
    let z0 = [Complex64::new(10.0, 0.0)];
    let cfg = StepConfig::with_dt(1.0);
    let (traj, _) = simulate_sl_fixed(&z0, &p, None, &cfg, 5, SlScheme::Imex, None)?;
    let mags: Vec<String> = traj.states.iter().map(|s| format!("{:.3e}", s[0].hypot(s[1]))).collect();
    println!("imex magnitudes: {}", mags.join(", "));
    match simulate_sl_fixed(&z0, &p, None, &cfg, 5, SlScheme::Euler, Some(1e12)) {
        Ok((t, _)) => println!("euler final state {:?}", t.states.last().unwrap()),
        Err(e) => println!("euler: {e}"),
    }
    Ok(())
}
