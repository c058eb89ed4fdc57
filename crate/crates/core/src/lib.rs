//! Continuous DCOP model, pseudo-tree, simulated message-passing runtime and
//! the ABCD-E solver.

pub mod harness;
pub mod model;
pub mod oracle;
pub mod problem_file;
pub mod rng;
pub mod runtime;
pub mod solver;
pub mod trace;
pub mod tree;

pub use model::{Assignment, BinaryConstraint, CdcopInstance, IntervalDomain, ModelError, QuadraticCoefficients};
pub use solver::{Budget, DistributedSolver, RunOutcome, SolverConfig, SolverError, Variant};
pub use trace::{AnytimeTrace, TraceRecord};
pub use tree::{PseudoTree, RootSelection};
