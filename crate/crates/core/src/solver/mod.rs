//! The distributed bee-colony solver.
//!
//! The population is stored column-wise: agent `i` keeps the `i`-th
//! component of every solution. Each iteration runs a build step (evaluate
//! the population, refresh the global best and the elite set), an employed
//! phase, fitness-proportional onlooker phases and, for [`Variant::AbcdE`],
//! the scout phase that re-randomizes solutions every agent has already
//! tried to improve.
//!
//! [`DistributedSolver`] runs the protocol on [`crate::runtime`]; the pure
//! update rules live in this module so that the sequential replica in
//! [`crate::oracle`] applies exactly the same arithmetic.

mod agent;
mod driver;

use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, IntervalDomain, ModelError};
use crate::runtime::RuntimeError;
use crate::tree::{RootSelection, TreeError};

pub use agent::AgentFootprint;
pub use driver::{DistributedSolver, RootFootprint, RunOutcome};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Re-draws a solution once every agent has been asked to improve it.
    AbcdE,
    /// Re-draws a solution after a fixed number of update requests without
    /// improvement, whichever agents they went to.
    AbcdC,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::AbcdE => "abcd-e",
            Variant::AbcdC => "abcd-c",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "abcd-e" => Ok(Variant::AbcdE),
            "abcd-c" => Ok(Variant::AbcdC),
            other => Err(format!("unknown algorithm '{other}' (expected abcd-e or abcd-c)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Iterations(u64),
    /// Iterate until the limit has elapsed; at least one iteration runs.
    WallClock(Duration),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Population size `S`.
    pub population_size: usize,
    /// Elite set size `M`.
    pub elite_size: usize,
    pub budget: Budget,
    pub seed: u64,
    pub variant: Variant,
    /// Range of the coefficient on the elite difference term.
    pub phi_range: (f64, f64),
    /// Range of the coefficient on the global-best difference term.
    pub cap_phi_range: (f64, f64),
    pub root: RootSelection,
    /// Keep a log of every message sent.
    pub message_log: bool,
    /// [`Variant::AbcdC`] only: failed update requests after which a solution
    /// is re-drawn. `None` means one per agent. `Some(usize::MAX)` never
    /// re-draws.
    pub trial_limit: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            elite_size: 10,
            budget: Budget::Iterations(100),
            seed: 0,
            variant: Variant::AbcdE,
            phi_range: (-0.5, 0.5),
            cap_phi_range: (0.0, 1.0),
            root: RootSelection::HighestDegree,
            message_log: false,
            trial_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn new(population_size: usize, elite_size: usize, iterations: u64, seed: u64) -> Self {
        Self { population_size, elite_size, budget: Budget::Iterations(iterations), seed, ..Self::default() }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let err = |s: String| Err(SolverError::Config(s));
        if self.elite_size < 1 {
            return err("elite size M must be at least 1".into());
        }
        if self.population_size < self.elite_size {
            return err(format!("population size S={} is smaller than elite size M={}", self.population_size, self.elite_size));
        }
        match self.budget {
            Budget::Iterations(0) => return err("iteration budget must be at least 1".into()),
            Budget::WallClock(d) if d.is_zero() => return err("wall-clock budget must be positive".into()),
            _ => {}
        }
        if self.trial_limit == Some(0) {
            return err("trial limit must be at least 1".into());
        }
        for (name, (lo, hi)) in [("phi", self.phi_range), ("cap_phi", self.cap_phi_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return err(format!("{name} range ({lo}, {hi}) is not a finite interval"));
            }
        }
        Ok(())
    }
}

/// One object of a population slice: this agent's component of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionObject {
    pub x: f64,
    pub local_fitness: f64,
    /// Subtree sum on ordinary agents, global utility at the root.
    pub fitness: f64,
    /// Set when `x` changed after the last evaluation.
    pub stale: bool,
}

impl SolutionObject {
    pub fn fresh(x: f64) -> Self {
        Self { x, local_fitness: 0.0, fitness: f64::NEG_INFINITY, stale: true }
    }
}

/// `visited[u][i]`: agent `i` was asked to modify solution `u` since the
/// solution last changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitedMatrix {
    n: usize,
    flags: Vec<bool>,
}

impl VisitedMatrix {
    pub fn new(solutions: usize, agents: usize) -> Self {
        Self { n: agents, flags: vec![false; solutions * agents] }
    }

    pub fn mark(&mut self, u: usize, agent: AgentId) {
        self.flags[u * self.n + agent] = true;
    }

    pub fn get(&self, u: usize, agent: AgentId) -> bool {
        self.flags[u * self.n + agent]
    }

    pub fn row(&self, u: usize) -> &[bool] {
        &self.flags[u * self.n..(u + 1) * self.n]
    }

    pub fn set_row(&mut self, u: usize, value: bool) {
        self.flags[u * self.n..(u + 1) * self.n].fill(value);
    }

    pub fn clear_row(&mut self, u: usize) {
        self.set_row(u, false);
    }

    pub fn row_complete(&self, u: usize) -> bool {
        self.row(u).iter().all(|&v| v)
    }

    pub fn solutions(&self) -> usize {
        self.flags.len() / self.n.max(1)
    }

    pub fn entries(&self) -> usize {
        self.flags.len()
    }
}

/// Solutions the scout phase re-draws, ascending.
///
/// `attempts[u]` counts update requests for `u` since it last changed; only
/// [`Variant::AbcdC`] keeps it.
pub(crate) fn scout_indices(variant: Variant, visited: &VisitedMatrix, attempts: &[u64], limit: u64) -> Vec<usize> {
    match variant {
        Variant::AbcdE => (0..visited.solutions()).filter(|&t| visited.row_complete(t)).collect(),
        Variant::AbcdC => (0..attempts.len()).filter(|&t| attempts[t] >= limit).collect(),
    }
}

/// Positive fitness transform and selection probabilities, one entry per
/// solution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionState {
    pub fit: Vec<f64>,
    pub prob: Vec<f64>,
}

impl SelectionState {
    pub fn from_fitness(fitness: &[f64]) -> Self {
        let fit: Vec<f64> = fitness.iter().map(|&f| positive_fit(f)).collect();
        let total: f64 = fit.iter().sum();
        let prob = fit.iter().map(|&f| f / total).collect();
        Self { fit, prob }
    }
}

/// Maps a utility to a strictly positive weight.
pub fn positive_fit(fitness: f64) -> f64 {
    if fitness < 0.0 {
        1.0 / (1.0 + fitness.abs())
    } else {
        1.0 + fitness
    }
}

pub fn clamp_to_domain(x: f64, dom: IntervalDomain) -> f64 {
    if x < dom.lb() {
        dom.lb()
    } else if x > dom.ub() {
        dom.ub()
    } else {
        x
    }
}

/// The employed and onlooker update rule.
///
/// `elite_h` and `pop_h` come from the helper agent's column, `elite_i` and
/// `gbest_i` from the updating agent's own column.
pub fn candidate_update(
    elite_h: f64,
    gbest_i: f64,
    pop_h: f64,
    elite_i: f64,
    phi: f64,
    cap_phi: f64,
    dom: IntervalDomain,
) -> f64 {
    let raw = 0.5 * (elite_h + gbest_i) + phi * (pop_h - elite_i) + cap_phi * (pop_h - gbest_i);
    clamp_to_domain(raw, dom)
}

/// Uniform initialization: `lb + r·(ub − lb)` for `r ∈ [0, 1]`.
pub fn initial_value(dom: IntervalDomain, r: f64) -> f64 {
    dom.lb() + r * (dom.ub() - dom.lb())
}

/// Index picked by a roulette wheel over `prob` with a uniform `r ∈ [0, 1)`.
pub fn roulette(prob: &[f64], r: f64) -> usize {
    let mut acc = 0.0;
    for (u, &p) in prob.iter().enumerate() {
        acc += p;
        if r < acc {
            return u;
        }
    }
    // rounding left the total just below r: take the last nonzero entry
    prob.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Indices of the `m` highest fitnesses, best first, lower index on ties.
pub fn select_elite(fitness: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

/// Index of the best candidate strictly above `threshold`, lowest index among
/// ties.
pub fn best_strict_improvement(candidates: &[f64], threshold: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    let mut bar = threshold;
    for (k, &f) in candidates.iter().enumerate() {
        if f > bar {
            best = Some(k);
            bar = f;
        }
    }
    best
}

/// Random draws made by agents, in one place so every execution path
/// consumes its stream identically.
pub(crate) mod draws {
    use super::*;

    pub fn agent<R: Rng>(rng: &mut R, n: usize) -> AgentId {
        rng.gen_range(0..n)
    }

    /// Uniform over every agent except `me`.
    pub fn other_agent<R: Rng>(rng: &mut R, n: usize, me: AgentId) -> AgentId {
        let k = rng.gen_range(0..n - 1);
        if k >= me {
            k + 1
        } else {
            k
        }
    }

    pub fn index<R: Rng>(rng: &mut R, len: usize) -> usize {
        rng.gen_range(0..len)
    }

    pub fn in_range<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    }

    pub fn closed_unit<R: Rng>(rng: &mut R) -> f64 {
        rng.gen_range(0.0..=1.0)
    }

    pub fn open_unit<R: Rng>(rng: &mut R) -> f64 {
        rng.gen::<f64>()
    }
}
