//! Kantorovich-Bures transport of positive-semidefinite matrix-valued
//! measures on the flat torus: closed-form distances and geodesics, a dynamic
//! convex solver, the spherical distance through the cone construction, and
//! gradient flows.

#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod closed_form;
pub mod cone;
pub mod error;
pub mod flows;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod measure;
pub mod solver;

pub use error::{KbError, Result};
pub use grid::{GridSpec, Spectral};
pub use linalg::{Mat, PsdMatrix, SymMatrix};
pub use measure::MatrixMeasure;
pub use solver::{solve, SolverConfig, SolverReport, TransportPath};
