//! Reverse-mode gradients on the tape, checked against central differences.

use oscgnn::tensor::{gradcheck::check_gradients, Matrix, Tape, Tensor};

fn main() -> oscgnn::Result<()> {
    let tape = Tape::new();
    let x = tape.leaf(Matrix::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.5]])?);
    let w = tape.leaf(Matrix::from_rows(&[vec![1.0], vec![-0.5]])?);
    let y = x.matmul(&w)?.sin().powi(2).sum();
    tape.backward(y)?;
    println!("loss      {:.6}", y.value().item());
    println!("dloss/dw  {:?}", w.grad().unwrap().data());

    let report = check_gradients(
        |_tape, v: &[Tensor<'_>]| {
            let re = v[0].matmul(&v[1])?;
            Tensor::magnitude(&re, &re.cos()).map(|m| m.sum())
        },
        &[x.value().as_ref().clone(), w.value().as_ref().clone()],
        1e-6,
    )?;
    println!("max relative error {:.2e}", report.max_rel_err());
    Ok(())
}
