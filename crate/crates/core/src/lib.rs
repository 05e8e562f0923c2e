//! H(div)-conforming discontinuous Galerkin discretization of the
//! three-field Biot model with parameter-robust block preconditioning.
//!
//! The pipeline is `params` → `mesh` → `elements` → `assembly` → `solver`,
//! with `analysis` providing the stability, convergence and conservation
//! studies and `cli` the experiment drivers behind the `biot` binary.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod elements;
pub mod error;
pub mod mesh;
pub mod params;
pub mod quadrature;
pub mod solver;
pub mod sparse;
