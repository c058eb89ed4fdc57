//! Independent checks: exhaustive grid search and a sequential replica of
//! the distributed solver.

mod grid;
mod replica;

use thiserror::Error;

use crate::model::ModelError;
use crate::solver::SolverError;
use crate::trace::TraceDivergence;

pub use grid::{grid_extremes, grid_search, GridExtremes, GridSpec, DEFAULT_GRID_CAP};
pub use replica::{centralized_replica, expected_messages, verify_equivalence, CentralizedReplica, IterationMessages};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("grid has {points} points, above the cap of {cap}; lower the resolution or use fewer agents")]
    CapExceeded { points: f64, cap: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Diverged(TraceDivergence),
}
