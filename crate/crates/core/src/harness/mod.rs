//! Problem generators, experiment plans and result files.

mod experiment;
mod stats;
mod topology;

use thiserror::Error;

use crate::model::ModelError;
use crate::problem_file::ProblemFileError;
use crate::solver::SolverError;

pub use experiment::{
    emit_plot_data, run_experiment, AggregateRow, BudgetSpec, ExperimentPlan, ExperimentResult, PlotAxis, RunSummary,
};
pub use stats::{mean_std, sign_test, SignTest};
pub use topology::{generate_problem, ring_degree, CoefficientSpec, Topology, TopologyConfig, MAX_ATTEMPTS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no connected graph for {config} after {attempts} attempts")]
    Disconnected { config: String, attempts: u64 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {detail}")]
    Plan { path: String, detail: String },
    #[error("nothing to plot: {0}")]
    EmptyAggregate(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    ProblemFile(#[from] ProblemFileError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }
}
