//! Central finite-difference check of tape gradients.

use super::{Matrix, Tape, Tensor};
use crate::error::Result;

/// Relative error of one input: `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, floor)`.
#[derive(Clone, Debug)]
pub struct InputCheck {
    pub index: usize,
    pub rel_err: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub inputs: Vec<InputCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.inputs.iter().fold(0.0, |m, c| m.max(c.rel_err))
    }
}

/// Norm below which a gradient is treated as zero when forming ratios.
pub const NORM_FLOOR: f64 = 1e-8;

/// Compares the gradients of a scalar function of several matrices with
/// central differences of step `h`.
pub fn check_gradients<F>(f: F, inputs: &[Matrix], h: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor<'_>> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let loss = f(&tape, &leaves)?;
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = leaves
        .iter()
        .map(|l| l.grad().expect("leaf gradient populated"))
        .collect();

    let eval = |values: &[Matrix]| -> Result<f64> {
        let tape = Tape::new();
        let ts: Vec<Tensor<'_>> = values.iter().map(|m| tape.constant(m.clone())).collect();
        Ok(f(&tape, &ts)?.value().item())
    };

    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut checks = Vec::with_capacity(inputs.len());
    for (index, a) in analytic.iter().enumerate() {
        let mut numeric = Matrix::zeros(a.rows(), a.cols());
        for k in 0..a.len() {
            let orig = work[index].data()[k];
            work[index].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[index].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[index].data_mut()[k] = orig;
            numeric.data_mut()[k] = (plus - minus) / (2.0 * h);
        }
        let diff = a.zip_map(&numeric, |x, y| x - y).norm();
        let (an, nn) = (a.norm(), numeric.norm());
        checks.push(InputCheck {
            index,
            rel_err: diff / an.max(nn).max(NORM_FLOOR),
            analytic_norm: an,
            numeric_norm: nn,
        });
    }
    Ok(GradCheckReport { inputs: checks })
}
