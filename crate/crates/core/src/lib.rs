//! First-order and proximal splitting methods for convex (and some nonconvex)
//! composite problems, with a certification layer that checks the classical
//! inequalities, Lyapunov sequences and rates on actual solver traces.
//!
//! The crate is organised bottom-up:
//!
//! * [`linops`]: vectors, image grids and linear operators with adjoints.
//! * [`funcs`]: smooth and proximable function oracles, conjugates, prox calculus.
//! * [`solvers`]: gradient, forward-backward, splitting and primal-dual schemes,
//!   all producing a uniform [`solvers::SolverTrace`].
//! * [`certify`]: inequality checks, rate fits, equivalence harnesses.
//! * [`problems`]: imaging and sparse-recovery builders with several recipes each.
//!
//! Data-parallel inner loops (block proxes, dual updates, sampled property
//! trials) go through [`par`], which uses rayon when the `parallel` feature is
//! enabled and falls back to plain iterators otherwise.

pub mod certify;
pub mod error;
pub mod funcs;
pub mod linops;
pub mod par;
pub mod problems;
pub mod solvers;

pub use error::{Error, Result};
pub use linops::{Boundary, ImageGrid, LinearMap, LinearOperator, Vector};
