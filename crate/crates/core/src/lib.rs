//! Certified reachability for small feedforward networks.
//!
//! Ellipsoidal input sets are mapped to ellipsoidal output sets by
//! quadratic constraints on the activations. Training a two-layer network
//! and verifying a fixed one both reduce to feasibility of an affine
//! symmetric pencil, solved by [`solver::solve`].

// `!(x > 0.0)` is used on purpose so NaN is rejected; the eigen routines
// index several arrays per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod eigen;
pub mod error;
pub mod figure;
pub mod linalg;
pub mod lmi;
pub mod loop_transform;
pub mod model;
pub mod pipeline;
pub mod sets;
pub mod solver;

pub use error::{Error, Result};
pub use loop_transform::RecoveryMode;
pub use model::{Activation, Layer, Network};
pub use nalgebra;
pub use pipeline::{learn, monte_carlo, verify, Outcome, ProblemSpec, RunReport};
pub use sets::{Ellipsoid, Role, SectorBounds, SpecPair};
pub use solver::{solve, Certificate, SolveOptions, Verdict};
