//! Collective neutrino oscillations on a simulated quantum register.
//!
//! Mass- and flavor-basis Hamiltonians and their particle-number blocks,
//! imaginary-time (QITE) and Krylov (QLanczos) spectra, first-order Trotter
//! dynamics, readout/zero-noise mitigation, all checked against exact
//! diagonalization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hamiltonians;
pub mod mitigation;
pub mod oracle;
pub mod par;
pub mod pauli;
pub mod qite;
pub mod qlanczos;
pub mod state;
pub mod trotter;

pub use error::{Error, Result};
pub use hamiltonians::{BlockSector, BlockSign, NeutrinoParams};
pub use mitigation::{FoldableNoise, ReadoutNoise, ZneConfig};
pub use pauli::{DenseOperator, Pauli, PauliString, PauliSum};
pub use state::{SamplingPlan, StateVector};
