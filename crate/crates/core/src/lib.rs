//! Oscillatory graph neural networks.
//!
//! Stuart-Landau (SLGNN), Kuramoto, harmonic (GraphCON) and Euler baseline
//! layer families over GCN, GAT and transformer-style couplings, built on a
//! small reverse-mode differentiation engine. The Stuart-Landau layers use an
//! implicit-explicit step that solves the cubic magnitude update implicitly
//! (Newton or Cardano) and keeps the coupling and phase explicit.
//!
//! Alongside the networks, [`dynamics`] provides the continuous oscillator
//! systems, a Dormand-Prince reference integrator and analyzers for decay
//! rates, phase velocity, energy and criticality.

pub mod cli;
pub mod couplings;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod models;
pub mod solvers;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
