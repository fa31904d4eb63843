use super::trajectory::{StateLayout, Trajectory};
use crate::error::{Error, Result};

/// Step-size control and abort thresholds for [`integrate_rk45`].
#[derive(Clone, Debug)]
pub struct Rk45Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Initial step; picked from the scale of `y0` and `f(y0)` when `None`.
    pub h0: Option<f64>,
    /// Abort once any component exceeds this magnitude.
    pub growth_limit: Option<f64>,
    /// Minimum step as a fraction of the integration span.
    pub min_step_fraction: f64,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 1_000_000,
            h0: None,
            growth_limit: None,
            min_step_fraction: 1e-12,
        }
    }
}

impl Rk45Options {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// difference between the 5th and embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy(y: &[f64], h: f64, terms: &[(f64, &[f64])], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

fn rms(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    (v.map(|x| x * x).sum::<f64>() / n.max(1) as f64).sqrt()
}

/// Adaptive Dormand-Prince 5(4) integration of `dy/dt = f(t, y)`.
///
/// With non-empty `sample_times` the state is reported at exactly those
/// times through the 4th-order continuous extension; otherwise every accepted
/// step is recorded.
pub fn integrate_rk45<F>(
    mut f: F,
    y0: &[f64],
    t_span: (f64, f64),
    sample_times: &[f64],
    opts: &Rk45Options,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let (t0, t1) = t_span;
    let span = t1 - t0;
    if !(span >= 0.0) || !span.is_finite() {
        return Err(Error::Contract(format!("invalid integration span [{t0}, {t1}]")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite initial state".into()));
    }
    if sample_times
        .windows(2)
        .any(|w| w[1] < w[0])
        || sample_times.iter().any(|&s| s < t0 || s > t1)
    {
        return Err(Error::Contract(
            "sample times must be sorted and inside the integration span".into(),
        ));
    }

    let n = y0.len();
    let mut traj = Trajectory::new(StateLayout::Raw, n);
    let mut next_sample = 0usize;
    let dense = !sample_times.is_empty();
    if dense {
        while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
            traj.push(sample_times[next_sample], y0.to_vec());
            next_sample += 1;
        }
    } else {
        traj.push(t0, y0.to_vec());
    }
    if span == 0.0 {
        return Ok(traj);
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k1);

    let mut h = match opts.h0 {
        Some(h) => h,
        None => {
            let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
            let d0 = rms((0..n).map(|i| y[i] / scale(i)), n);
            let d1 = rms((0..n).map(|i| k1[i] / scale(i)), n);
            if d0 < 1e-5 || d1 < 1e-5 {
                1e-6 * span.max(1.0)
            } else {
                0.01 * d0 / d1
            }
        }
    }
    .min(span);
    let h_min = opts.min_step_fraction * span;

    let mut steps = 0usize;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::MaxSteps { steps, t });
        }
        if h < h_min {
            return Err(Error::StepUnderflow { t, h });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        axpy(&y, h, &[(A21, &k1)], &mut tmp);
        f(t + C2 * h, &tmp, &mut k2);
        axpy(&y, h, &[(A31, &k1), (A32, &k2)], &mut tmp);
        f(t + C3 * h, &tmp, &mut k3);
        axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)], &mut tmp);
        f(t + C4 * h, &tmp, &mut k4);
        axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], &mut tmp);
        f(t + C5 * h, &tmp, &mut k5);
        axpy(
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            &mut tmp,
        );
        f(t + h, &tmp, &mut k6);
        axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            &mut y_new,
        );
        f(t + h, &y_new, &mut k7);
        steps += 1;

        let err = rms(
            (0..n).map(|i| {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                e / (opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs()))
            }),
            n,
        );

        if let Some(limit) = opts.growth_limit {
            // near a finite-time blow-up the step collapses before any
            // accepted state crosses the limit, so trial states count too
            let magnitude = y_new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if magnitude > limit || magnitude.is_nan() {
                return Err(Error::Growth { t, magnitude });
            }
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            traj.rejected += 1;
            h *= 0.2;
            continue;
        }
        if err > 1.0 {
            traj.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            continue;
        }

        let t_new = if last { t1 } else { t + h };
        if dense {
            while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                let ts = sample_times[next_sample];
                let theta = ((ts - t) / h).clamp(0.0, 1.0);
                let th1 = 1.0 - theta;
                let state = (0..n)
                    .map(|i| {
                        let dy = y_new[i] - y[i];
                        let b = h * k1[i] - dy;
                        let c = dy - h * k7[i] - b;
                        let d = h
                            * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                                + D7 * k7[i]);
                        y[i] + theta * (dy + th1 * (b + theta * (c + th1 * d)))
                    })
                    .collect();
                traj.push(ts, state);
                next_sample += 1;
            }
        } else {
            traj.push(t_new, y_new.clone());
        }

        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        std::mem::swap(&mut k1, &mut k7);
        traj.accepted += 1;

        let factor = if err == 0.0 {
            10.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
        };
        h *= factor;
    }
    Ok(traj)
}
