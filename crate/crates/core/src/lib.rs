//! Two-level Chebyshev-Tucker ("ChebTuck") approximation of trivariate
//! functions, with the tensor formats, decompositions and Newton-kernel
//! machinery needed to apply it to range-separated particle potentials.
//!
//! Storage convention: a [`DenseTensor3`] stores entry `(i, j, k)` at
//! `i + n1·(j + n2·k)` (first index fastest). Indices are zero-based; mode
//! numbers are 1, 2, 3.

pub mod chebtuck;
pub mod chebyshev;
pub mod decomp;
pub mod error;
pub mod io;
pub mod multiparticle;
pub mod newton;
pub mod spline;
pub mod tensor;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use chebtuck::{ChebTuckFunction, Domain};
pub use multiparticle::{ParticleSystem, RsPotential};
pub use newton::{Integration, NewtonCp, SincQuadrature};
pub use tensor::{CpTensor, DenseTensor3, HybridTucker, Matrix, TuckerTensor};
