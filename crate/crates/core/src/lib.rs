//! Mixed-dimensional differential forms on forest geometries.

pub mod cli_io;
pub mod cochain_spaces;
pub mod differential_ops;
pub mod eigen;
pub mod error;
pub mod exact_rank;
pub mod fixtures;
pub mod forest_geometry;
pub mod hodge;
pub mod krylov;
pub mod laplace_solver;
pub mod ldl;
pub mod sparse;

pub use error::{Error, Result};
