//! Linear-attention layer stacks that solve graph Laplacian problems, and
//! the dense oracles used to verify them.
//!
//! A resistor network enters as a scaled incidence matrix `B`. Stacks of
//! linear attention layers with explicitly constructed weights then compute
//! electric-flow potentials, resistive embeddings (square roots of the
//! Laplacian pseudoinverse), heat kernels, and Laplacian eigenvectors.
//! Every construction comes with the exact dense oracle it is checked
//! against and a closed-form error bound that the forward pass must satisfy.
//!
//! Module map:
//! - [`graph`]: resistor networks, incidence/Laplacian views, seeded generators.
//! - [`linalg`]: Jacobi eigensolver, Gram-Schmidt QR, reference subspace iteration.
//! - [`targets`]: pseudoinverse, principal square root, heat kernel, resistances.
//! - [`transformer`]: the three forward-pass engines over block-structured states.
//! - [`constructions`]: per-task weight builders and their coefficient schedules.
//! - [`verify`]: error measurement, bound formulas, reports, invariance checks.

pub mod constructions;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod targets;
pub mod transformer;
pub mod verify;

pub use error::{GflError, Result};

/// Dense row-major matrix of f64; every shape in this crate is desk scale.
pub type Mat = ndarray::Array2<f64>;
