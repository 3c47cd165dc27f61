//! Finite-difference solver for a 2D incompressible magnetoviscoelastic
//! flow model coupling Navier-Stokes momentum transport, diffusive
//! deformation-gradient transport, and Landau-Lifshitz-Gilbert
//! magnetization dynamics, together with the diagnostics used to check its
//! energy law, constraints, and stability behavior numerically.
//!
//! Layout conventions live in [`grid`] and [`ops`]; every differential
//! operator, norm, and reduction in the crate is deterministic for a fixed
//! input regardless of thread count (see [`reduce`]).

pub mod algebra;
pub mod diagnostics;
pub mod elastic;
pub mod error;
pub mod field;
pub mod grid;
pub mod hext;
pub mod inequality;
pub mod norms;
pub mod ode;
pub mod ops;
pub mod poisson;
pub mod reduce;
pub mod scenario;
pub mod solver;
pub mod uniqueness;
pub mod state;

pub use error::{Error, Result};
pub use field::{MatrixField22, ScalarField, VectorField2, VectorField3};
pub use grid::{Bc, Grid, Layout};
pub use scenario::{parse_scenario, Scenario};
pub use state::State;
