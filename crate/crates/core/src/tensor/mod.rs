//! Dense real tensors with tape-based reverse-mode differentiation.
//!
//! Complex values are carried as paired real planes ([`ComplexMatrix`]).
//! Values are [`Matrix`]; a [`Tensor`] is a handle to a value recorded on a
//! [`Tape`]. A tape is replayed at most once by [`Tape::backward`].

mod complex;
pub mod gradcheck;
mod matrix;
mod ops;
mod tape;

pub use complex::ComplexMatrix;
pub use matrix::Matrix;
pub use ops::atan2_principal;
pub use tape::{BackwardFn, Tape, Tensor};
