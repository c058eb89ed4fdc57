//! Problem representation: agents, interval domains, binary constraint
//! functions and the aggregated utility they define.
//!
//! Every agent owns exactly one variable, so agent ids and variable indices
//! are the same thing throughout the crate.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an agent (and of the variable it controls).
pub type AgentId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid domain [{lb}, {ub}]: bounds must be finite with lb < ub")]
    InvalidDomain { lb: f64, ub: f64 },
    #[error("coefficient {name} is not finite ({value})")]
    NonFiniteCoefficient { name: &'static str, value: f64 },
    #[error("constraint ({i}, {j}) is a self-loop")]
    SelfLoop { i: AgentId, j: AgentId },
    #[error("constraint ({i}, {j}) references an agent outside 0..{n}")]
    UnknownAgentInConstraint { i: AgentId, j: AgentId, n: usize },
    #[error("duplicate constraint between agents {i} and {j}")]
    DuplicateConstraint { i: AgentId, j: AgentId },
    #[error("constraint graph is disconnected: agent {unreachable} is unreachable from agent 0")]
    Disconnected { unreachable: AgentId },
    #[error("instance has no agents")]
    Empty,
    #[error("unknown agent {agent} (instance has {n} agents)")]
    UnknownAgent { agent: AgentId, n: usize },
    #[error("assignment has {got} values, instance has {expected} agents")]
    AssignmentLength { got: usize, expected: usize },
    #[error("value {value} for agent {agent} is outside its domain [{lb}, {ub}]")]
    OutOfDomain { agent: AgentId, value: f64, lb: f64, ub: f64 },
    #[error("constraint ({i}, {j}) produced a non-finite utility {value} at ({xi}, {xj})")]
    NonFiniteUtility { i: AgentId, j: AgentId, xi: f64, xj: f64, value: f64 },
}

/// Closed interval `[lb, ub]` a variable takes its values from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct IntervalDomain {
    lb: f64,
    ub: f64,
}

impl IntervalDomain {
    pub fn new(lb: f64, ub: f64) -> Result<Self, ModelError> {
        if lb.is_finite() && ub.is_finite() && lb < ub {
            Ok(Self { lb, ub })
        } else {
            Err(ModelError::InvalidDomain { lb, ub })
        }
    }

    pub fn lb(&self) -> f64 {
        self.lb
    }

    pub fn ub(&self) -> f64 {
        self.ub
    }

    pub fn width(&self) -> f64 {
        self.ub - self.lb
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lb <= x && x <= self.ub
    }
}

impl TryFrom<[f64; 2]> for IntervalDomain {
    type Error = ModelError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(v[0], v[1])
    }
}

impl From<IntervalDomain> for [f64; 2] {
    fn from(d: IntervalDomain) -> Self {
        [d.lb, d.ub]
    }
}

impl fmt::Display for IntervalDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lb, self.ub)
    }
}

/// A utility function of two real arguments.
pub trait BinaryFunction: Send + Sync + fmt::Debug {
    fn eval(&self, x: f64, y: f64) -> f64;

    /// The quadratic form behind this function, if it has one. Only
    /// quadratic constraints can be written to problem files.
    fn as_quadratic(&self) -> Option<&QuadraticCoefficients> {
        None
    }
}

/// `a·x² + b·x + d·y² + e·y + f·x·y + g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl QuadraticCoefficients {
    pub fn new(a: f64, b: f64, d: f64, e: f64, f: f64, g: f64) -> Result<Self, ModelError> {
        let c = Self { a, b, d, e, f, g };
        for (name, value) in ["a", "b", "d", "e", "f", "g"].into_iter().zip(c.to_array()) {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteCoefficient { name, value });
            }
        }
        Ok(c)
    }

    pub fn from_array(c: [f64; 6]) -> Result<Self, ModelError> {
        Self::new(c[0], c[1], c[2], c[3], c[4], c[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.a, self.b, self.d, self.e, self.f, self.g]
    }
}

impl BinaryFunction for QuadraticCoefficients {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.a * x * x + self.b * x + self.d * y * y + self.e * y + self.f * x * y + self.g
    }

    fn as_quadratic(&self) -> Option<&QuadraticCoefficients> {
        Some(self)
    }
}

/// Adapter turning a closure into a [`BinaryFunction`].
pub struct FnConstraint<F> {
    name: &'static str,
    func: F,
}

impl<F> FnConstraint<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    pub fn new(name: &'static str, func: F) -> Self {
        Self { name, func }
    }
}

impl<F> fmt::Debug for FnConstraint<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("FnConstraint").field(&self.name).finish()
    }
}

impl<F> BinaryFunction for FnConstraint<F>
where
    F: Fn(f64, f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: f64, y: f64) -> f64 {
        (self.func)(x, y)
    }
}

/// Utility function over the scope `(i, j)`. Arguments are always passed in
/// stored order, whichever endpoint looks the constraint up.
#[derive(Debug, Clone)]
pub struct BinaryConstraint {
    i: AgentId,
    j: AgentId,
    utility: Arc<dyn BinaryFunction>,
}

impl BinaryConstraint {
    pub fn new(i: AgentId, j: AgentId, utility: Arc<dyn BinaryFunction>) -> Result<Self, ModelError> {
        if i == j {
            return Err(ModelError::SelfLoop { i, j });
        }
        Ok(Self { i, j, utility })
    }

    pub fn quadratic(i: AgentId, j: AgentId, coeffs: QuadraticCoefficients) -> Result<Self, ModelError> {
        Self::new(i, j, Arc::new(coeffs))
    }

    pub fn i(&self) -> AgentId {
        self.i
    }

    pub fn j(&self) -> AgentId {
        self.j
    }

    pub fn scope(&self) -> (AgentId, AgentId) {
        (self.i, self.j)
    }

    pub fn function(&self) -> &dyn BinaryFunction {
        self.utility.as_ref()
    }

    /// The endpoint that is not `agent`, if `agent` is in scope.
    pub fn other(&self, agent: AgentId) -> Option<AgentId> {
        if agent == self.i {
            Some(self.j)
        } else if agent == self.j {
            Some(self.i)
        } else {
            None
        }
    }

    /// Evaluates with the values of the two scope variables given in
    /// `(agent, other)` order, reordering them into stored order.
    pub fn eval_from(&self, agent: AgentId, own: f64, other: f64) -> f64 {
        if agent == self.i {
            self.utility.eval(own, other)
        } else {
            self.utility.eval(other, own)
        }
    }
}

/// A C-DCOP instance: one variable per agent, interval domains and binary
/// utility functions.
#[derive(Debug, Clone)]
pub struct CdcopInstance {
    domains: Vec<IntervalDomain>,
    constraints: Vec<BinaryConstraint>,
    /// Sorted neighbour ids per agent.
    neighbors: Vec<Vec<AgentId>>,
    /// Constraint index per (agent, neighbour slot), aligned with `neighbors`.
    incident: Vec<Vec<usize>>,
}

impl CdcopInstance {
    /// Builds and validates an instance. The constraint graph must be
    /// connected.
    pub fn new(domains: Vec<IntervalDomain>, constraints: Vec<BinaryConstraint>) -> Result<Self, ModelError> {
        let inst = Self::new_allow_disconnected(domains, constraints)?;
        if let Some(unreachable) = inst.first_unreachable() {
            return Err(ModelError::Disconnected { unreachable });
        }
        Ok(inst)
    }

    /// Like [`CdcopInstance::new`] without the connectivity check. Solvers
    /// reject such instances; this exists for partial fixtures and tests.
    pub fn new_allow_disconnected(
        domains: Vec<IntervalDomain>,
        constraints: Vec<BinaryConstraint>,
    ) -> Result<Self, ModelError> {
        let n = domains.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut adj: Vec<Vec<(AgentId, usize)>> = vec![Vec::new(); n];
        for (k, c) in constraints.iter().enumerate() {
            let (i, j) = c.scope();
            if i >= n || j >= n {
                return Err(ModelError::UnknownAgentInConstraint { i, j, n });
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(ModelError::DuplicateConstraint { i, j });
            }
            adj[i].push((j, k));
            adj[j].push((i, k));
        }
        let mut neighbors = Vec::with_capacity(n);
        let mut incident = Vec::with_capacity(n);
        for mut list in adj {
            list.sort_unstable();
            neighbors.push(list.iter().map(|&(j, _)| j).collect());
            incident.push(list.iter().map(|&(_, k)| k).collect());
        }
        Ok(Self { domains, constraints, neighbors, incident })
    }

    fn first_unreachable(&self) -> Option<AgentId> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(a) = stack.pop() {
            for &b in &self.neighbors[a] {
                if !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    pub fn is_connected(&self) -> bool {
        self.first_unreachable().is_none()
    }

    /// Number of agents (and variables).
    pub fn n(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[IntervalDomain] {
        &self.domains
    }

    pub fn domain(&self, agent: AgentId) -> Result<IntervalDomain, ModelError> {
        self.domains.get(agent).copied().ok_or(ModelError::UnknownAgent { agent, n: self.n() })
    }

    pub fn constraints(&self) -> &[BinaryConstraint] {
        &self.constraints
    }

    /// Neighbours of `agent` in ascending id order.
    pub fn neighbors(&self, agent: AgentId) -> &[AgentId] {
        &self.neighbors[agent]
    }

    pub fn degree(&self, agent: AgentId) -> usize {
        self.neighbors[agent].len()
    }

    /// `(neighbour, constraint)` pairs incident to `agent`, ascending by neighbour.
    pub fn incident(&self, agent: AgentId) -> impl Iterator<Item = (AgentId, &BinaryConstraint)> + '_ {
        self.neighbors[agent]
            .iter()
            .zip(&self.incident[agent])
            .map(move |(&j, &k)| (j, &self.constraints[k]))
    }

    /// The constraint between `a` and `b`, looked up in either order.
    pub fn constraint_between(&self, a: AgentId, b: AgentId) -> Option<&BinaryConstraint> {
        let list = self.neighbors.get(a)?;
        let slot = list.binary_search(&b).ok()?;
        Some(&self.constraints[self.incident[a][slot]])
    }

    pub fn check_assignment(&self, x: &Assignment) -> Result<(), ModelError> {
        if x.len() != self.n() {
            return Err(ModelError::AssignmentLength { got: x.len(), expected: self.n() });
        }
        for (agent, (&value, dom)) in x.values().iter().zip(&self.domains).enumerate() {
            if !dom.contains(value) {
                return Err(ModelError::OutOfDomain { agent, value, lb: dom.lb(), ub: dom.ub() });
            }
        }
        Ok(())
    }
}

/// A full assignment of values to all variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(Vec<f64>);

impl Assignment {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for Assignment {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Evaluates a constraint whose scope variables take `xi` and `xj`, given in
/// stored `(i, j)` order.
pub fn evaluate_constraint(inst: &CdcopInstance, c: &BinaryConstraint, xi: f64, xj: f64) -> Result<f64, ModelError> {
    let (i, j) = c.scope();
    for (agent, value) in [(i, xi), (j, xj)] {
        let dom = inst.domain(agent)?;
        if !dom.contains(value) {
            return Err(ModelError::OutOfDomain { agent, value, lb: dom.lb(), ub: dom.ub() });
        }
    }
    let value = c.function().eval(xi, xj);
    if !value.is_finite() {
        return Err(ModelError::NonFiniteUtility { i, j, xi, xj, value });
    }
    Ok(value)
}

/// Sum of all constraint utilities under `x`, accumulated in constraint-list
/// order starting from `0.0`.
pub fn global_utility(inst: &CdcopInstance, x: &Assignment) -> Result<f64, ModelError> {
    inst.check_assignment(x)?;
    let v = x.values();
    let mut total = 0.0;
    for c in inst.constraints() {
        total += evaluate_constraint(inst, c, v[c.i()], v[c.j()])?;
    }
    Ok(total)
}

/// Sum of the utilities of every constraint incident to `agent`, in
/// ascending neighbour order.
pub fn local_utility(inst: &CdcopInstance, agent: AgentId, x: &Assignment) -> Result<f64, ModelError> {
    if agent >= inst.n() {
        return Err(ModelError::UnknownAgent { agent, n: inst.n() });
    }
    inst.check_assignment(x)?;
    let v = x.values();
    let mut total = 0.0;
    for (_, c) in inst.incident(agent) {
        total += evaluate_constraint(inst, c, v[c.i()], v[c.j()])?;
    }
    Ok(total)
}

/// Reference problems used throughout the tests and examples.
pub mod fixtures {
    use super::*;

    /// The four-agent example problem: edges 0–1, 0–2, 0–3, 1–2, all
    /// domains `[-10, 10]`.
    pub fn four_agent_example() -> CdcopInstance {
        let two_pi = 2.0 * std::f64::consts::PI;
        let f01 = FnConstraint::new("x1^2 - cos(2 pi x2)", move |x1: f64, x2: f64| x1 * x1 - (two_pi * x2).cos());
        let f02 = FnConstraint::new("exp(sqrt(x1^2 + x3^2))", |x1: f64, x3: f64| (x1 * x1 + x3 * x3).sqrt().exp());
        let f03 = FnConstraint::new("(x1 + 2 x4 - 7)^2", |x1: f64, x4: f64| (x1 + 2.0 * x4 - 7.0).powi(2));
        let f12 = FnConstraint::new("x2^2 + x3^2 - x2 x3", |x2: f64, x3: f64| x2 * x2 + x3 * x3 - x2 * x3);
        let dom = IntervalDomain::new(-10.0, 10.0).unwrap();
        let constraints = vec![
            BinaryConstraint::new(0, 1, Arc::new(f01)).unwrap(),
            BinaryConstraint::new(0, 2, Arc::new(f02)).unwrap(),
            BinaryConstraint::new(0, 3, Arc::new(f03)).unwrap(),
            BinaryConstraint::new(1, 2, Arc::new(f12)).unwrap(),
        ];
        CdcopInstance::new(vec![dom; 4], constraints).unwrap()
    }

    /// Two agents on `[-10, 10]` joined by a single constraint.
    pub fn pair(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> CdcopInstance {
        let dom = IntervalDomain::new(-10.0, 10.0).unwrap();
        let c = BinaryConstraint::new(0, 1, Arc::new(FnConstraint::new("pair", f))).unwrap();
        CdcopInstance::new(vec![dom; 2], vec![c]).unwrap()
    }
}
