use super::Tensor;
use crate::error::{Error, Result};

/// Complex matrix stored as a real plane and an imaginary plane.
#[derive(Clone, Copy, Debug)]
pub struct ComplexMatrix<'t> {
    pub re: Tensor<'t>,
    pub im: Tensor<'t>,
}

impl<'t> ComplexMatrix<'t> {
    pub fn new(re: Tensor<'t>, im: Tensor<'t>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::Dimension {
                op: "complex",
                left: re.shape(),
                right: im.shape(),
            });
        }
        Ok(Self { re, im })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.re.shape()
    }

    pub fn planes(&self) -> [Tensor<'t>; 2] {
        [self.re, self.im]
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            re: self.re.add(&other.re)?,
            im: self.im.add(&other.im)?,
        })
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            re: self.re.scale(s),
            im: self.im.scale(s),
        }
    }

    /// Elementwise complex product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        let re = self.re.hadamard(&other.re)?.sub(&self.im.hadamard(&other.im)?)?;
        let im = self.re.hadamard(&other.im)?.add(&self.im.hadamard(&other.re)?)?;
        Ok(Self { re, im })
    }

    /// Complex matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let re = self.re.matmul(&other.re)?.sub(&self.im.matmul(&other.im)?)?;
        let im = self.re.matmul(&other.im)?.add(&self.im.matmul(&other.re)?)?;
        Ok(Self { re, im })
    }

    /// `|z|`, nonnegative by construction.
    pub fn magnitude(&self) -> Result<Tensor<'t>> {
        Tensor::magnitude(&self.re, &self.im)
    }

    /// `arg z` in (−π, π], zero at the origin.
    pub fn phase(&self) -> Result<Tensor<'t>> {
        self.im.atan2(&self.re)
    }

    /// `r (cos φ + i sin φ)`.
    pub fn from_polar(r: &Tensor<'t>, phi: &Tensor<'t>) -> Result<Self> {
        Ok(Self {
            re: r.hadamard(&phi.cos())?,
            im: r.hadamard(&phi.sin())?,
        })
    }

    /// `cos φ + i sin φ`.
    pub fn unit(phi: &Tensor<'t>) -> Self {
        Self {
            re: phi.cos(),
            im: phi.sin(),
        }
    }
}
