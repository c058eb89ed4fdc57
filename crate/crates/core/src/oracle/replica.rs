//! The solver without the message layer.
//!
//! Every agent still owns its random stream, and each stream is consumed in
//! the same order as in the distributed run: the root draws all of a phase's
//! targets before it handles requests addressed to itself, and an agent
//! handles several requests in the order the root issued them. Fitness is
//! summed the way the tree convergecast sums it. Message counters are
//! derived from the protocol's per-phase message pattern.

use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::OracleError;
use crate::model::{CdcopInstance, IntervalDomain};
use crate::rng::agent_stream;
use crate::solver::{
    best_strict_improvement, candidate_update, draws, initial_value, roulette, scout_indices, select_elite, Budget,
    DistributedSolver, SelectionState, SolverConfig, SolverError, Variant, VisitedMatrix,
};
use crate::trace::{AnytimeTrace, TraceRecord};
use crate::tree::PseudoTree;

/// Messages the protocol sends in one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IterationMessages {
    pub employed_requests: u64,
    pub onlooker_requests: u64,
    pub total: u64,
}

/// Message total for one iteration given which broadcasts happened.
///
/// `employed_replaced`/`employed_improved` say whether the employed phase
/// replaced any solution / improved the global best; `onlooker` lists the same
/// pair for each onlooker selection; `scouted` whether any solution was
/// re-drawn.
pub fn expected_messages(
    inst: &CdcopInstance,
    cfg: &SolverConfig,
    build_improved: bool,
    employed_replaced: bool,
    employed_improved: bool,
    onlooker: &[(bool, bool)],
    scouted: bool,
) -> IterationMessages {
    let n = inst.n() as u64;
    let s = cfg.population_size as u64;
    let m = cfg.elite_size as u64;
    let edges = inst.constraints().len() as u64;
    let bcast = n - 1;
    let evaluate = 2 * edges + (n - 1);
    let flag = |b: bool| if b { bcast } else { 0 };

    // build: evaluate, elite broadcast, maybe global best
    let mut total = evaluate + bcast + flag(build_improved);
    // employed: request, value request and value share per solution
    total += 3 * s + evaluate + flag(employed_replaced) + flag(employed_improved);
    for &(replaced, improved) in onlooker {
        total += bcast + 3 * m + evaluate + flag(replaced) + flag(improved);
    }
    total += flag(scouted);
    IterationMessages { employed_requests: s, onlooker_requests: onlooker.len() as u64 * m, total }
}

/// Sequential execution of the solver on one instance.
#[derive(Debug)]
pub struct CentralizedReplica {
    inst: Arc<CdcopInstance>,
    tree: PseudoTree,
    cfg: SolverConfig,
    domains: Vec<IntervalDomain>,
    rngs: Vec<ChaCha8Rng>,
    /// Children lists in post-order, for tree-order sums.
    post_order: Vec<usize>,
    /// `pop[u][i]`.
    pop: Vec<Vec<f64>>,
    /// Root-held fitness; `None` after a scout re-draw.
    pop_fit: Vec<Option<f64>>,
    elite: Vec<Vec<f64>>,
    gbest: Option<Vec<f64>>,
    gbest_fitness: f64,
    visited: VisitedMatrix,
    attempts: Vec<u64>,
    trial_limit: u64,
    selection: SelectionState,
    evaluations: u64,
    redrawn: u64,
    trace: AnytimeTrace,
    started: Instant,
}

impl CentralizedReplica {
    pub fn new(inst: Arc<CdcopInstance>, cfg: SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let n = inst.n();
        if n < 2 {
            return Err(SolverError::Config("at least two agents are required".into()));
        }
        let tree = PseudoTree::build_with(&inst, cfg.seed, cfg.root)?;
        let domains = inst.domains().to_vec();
        let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| agent_stream(cfg.seed, i)).collect();
        let s = cfg.population_size;
        // each agent draws its whole column before anything else
        let mut pop = vec![vec![0.0; n]; s];
        for i in 0..n {
            for row in pop.iter_mut() {
                row[i] = initial_value(domains[i], draws::closed_unit(&mut rngs[i]));
            }
        }
        let mut post_order = Vec::with_capacity(n);
        let mut stack = vec![(tree.root(), false)];
        while let Some((a, expanded)) = stack.pop() {
            if expanded {
                post_order.push(a);
            } else {
                stack.push((a, true));
                for &c in tree.children(a).iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        Ok(Self {
            tree,
            domains,
            rngs,
            post_order,
            pop,
            pop_fit: vec![None; s],
            elite: Vec::new(),
            gbest: None,
            gbest_fitness: f64::NEG_INFINITY,
            visited: VisitedMatrix::new(s, n),
            attempts: if cfg.variant == Variant::AbcdC { vec![0; s] } else { Vec::new() },
            trial_limit: cfg.trial_limit.unwrap_or(n) as u64,
            selection: SelectionState::default(),
            evaluations: 0,
            redrawn: 0,
            trace: AnytimeTrace::default(),
            started: Instant::now(),
            inst,
            cfg,
        })
    }

    /// Root fitness of one solution: local sums in ascending neighbour
    /// order, subtree sums in child order, halved at the root.
    fn fitness(&self, x: &[f64], local: &mut [f64], sub: &mut [f64]) -> f64 {
        let n = self.inst.n();
        for i in 0..n {
            let mut acc = 0.0;
            for (j, c) in self.inst.incident(i) {
                acc += c.eval_from(i, x[i], x[j]);
            }
            local[i] = acc;
        }
        for &a in &self.post_order {
            let mut acc = local[a];
            for &c in self.tree.children(a) {
                acc += sub[c];
            }
            sub[a] = acc;
        }
        sub[self.tree.root()] / 2.0
    }

    fn evaluate(&mut self, sols: &[Vec<f64>]) -> Vec<f64> {
        self.evaluations += 1;
        let n = self.inst.n();
        let (mut local, mut sub) = (vec![0.0; n], vec![0.0; n]);
        sols.iter().map(|x| self.fitness(x, &mut local, &mut sub)).collect()
    }

    /// Applies a strict global-best improvement from `fits`; true when the
    /// global best changed.
    fn offer_gbest(&mut self, sols: &[Vec<f64>], fits: &[f64]) -> bool {
        match best_strict_improvement(fits, self.gbest_fitness) {
            Some(best) => {
                self.gbest_fitness = fits[best];
                self.gbest = Some(sols[best].clone());
                true
            }
            None => false,
        }
    }

    /// Update of agent `j`'s component with helper `h`.
    #[allow(clippy::too_many_arguments)]
    fn candidate(&self, j: usize, h: usize, helper_elite: usize, own_elite: usize, u: usize, phi: f64, cap_phi: f64) -> f64 {
        let gbest = self.gbest.as_ref().expect("global best set in the build step");
        candidate_update(
            self.elite[helper_elite][h],
            gbest[j],
            self.pop[u][h],
            self.elite[own_elite][j],
            phi,
            cap_phi,
            self.domains[j],
        )
    }

    fn note_request(&mut self, u: usize, j: usize) {
        self.visited.mark(u, j);
        if let Some(a) = self.attempts.get_mut(u) {
            *a += 1;
        }
    }

    fn changed(&mut self, u: usize) {
        self.visited.clear_row(u);
        if let Some(a) = self.attempts.get_mut(u) {
            *a = 0;
        }
    }

    fn build(&mut self) -> bool {
        let pop = std::mem::take(&mut self.pop);
        let fits = self.evaluate(&pop);
        let improved = self.offer_gbest(&pop, &fits);
        self.pop = pop;
        self.pop_fit = fits.iter().copied().map(Some).collect();
        self.elite = select_elite(&fits, self.cfg.elite_size).into_iter().map(|k| self.pop[k].clone()).collect();
        improved
    }

    fn employed(&mut self) -> (bool, bool) {
        let n = self.inst.n();
        let s = self.cfg.population_size;
        let root = self.tree.root();
        let targets: Vec<usize> = (0..s).map(|_| draws::agent(&mut self.rngs[root], n)).collect();
        let mut q = self.pop.clone();
        for (u, &j) in targets.iter().enumerate() {
            self.note_request(u, j);
            let rng = &mut self.rngs[j];
            let l = draws::index(rng, self.cfg.elite_size);
            let h = draws::other_agent(rng, n, j);
            let phi = draws::in_range(rng, self.cfg.phi_range);
            let cap_phi = draws::in_range(rng, self.cfg.cap_phi_range);
            q[u][j] = self.candidate(j, h, l, l, u, phi, cap_phi);
        }
        let fits = self.evaluate(&q);
        let mut replaced = false;
        for u in 0..s {
            if fits[u] > self.pop_fit[u].unwrap_or(f64::NEG_INFINITY) {
                self.pop[u] = q[u].clone();
                self.pop_fit[u] = Some(fits[u]);
                self.changed(u);
                replaced = true;
            }
        }
        let improved = self.offer_gbest(&q, &fits);
        (replaced, improved)
    }

    fn selection_probabilities(&mut self) {
        let fits: Vec<f64> = self.pop_fit.iter().map(|f| f.unwrap_or(f64::NEG_INFINITY)).collect();
        self.selection = SelectionState::from_fitness(&fits);
    }

    fn onlooker(&mut self) -> (bool, bool) {
        let n = self.inst.n();
        let m = self.cfg.elite_size;
        let root = self.tree.root();
        let u = roulette(&self.selection.prob, draws::open_unit(&mut self.rngs[root]));
        let targets: Vec<usize> = (0..m).map(|_| draws::agent(&mut self.rngs[root], n)).collect();
        let mut r = vec![self.pop[u].clone(); m];
        for (k, &j) in targets.iter().enumerate() {
            self.note_request(u, j);
            let rng = &mut self.rngs[j];
            let h = draws::other_agent(rng, n, j);
            let l = draws::index(rng, m);
            let phi = draws::in_range(rng, self.cfg.phi_range);
            let cap_phi = draws::in_range(rng, self.cfg.cap_phi_range);
            r[k][j] = self.candidate(j, h, k, l, u, phi, cap_phi);
        }
        let fits = self.evaluate(&r);
        let threshold = self.pop_fit[u].unwrap_or(f64::NEG_INFINITY);
        let replaced = match best_strict_improvement(&fits, threshold) {
            Some(t) => {
                self.pop[u] = r[t].clone();
                self.pop_fit[u] = Some(fits[t]);
                self.changed(u);
                true
            }
            None => false,
        };
        let improved = self.offer_gbest(&r, &fits);
        (replaced, improved)
    }

    fn scout(&mut self) -> bool {
        let indices = scout_indices(self.cfg.variant, &self.visited, &self.attempts, self.trial_limit);
        for &t in &indices {
            self.changed(t);
            self.pop_fit[t] = None;
        }
        for i in 0..self.inst.n() {
            for &t in &indices {
                self.pop[t][i] = initial_value(self.domains[i], draws::closed_unit(&mut self.rngs[i]));
            }
        }
        self.redrawn += indices.len() as u64;
        !indices.is_empty()
    }

    pub fn iterate(&mut self) -> &TraceRecord {
        let build_improved = self.build();
        let (employed_replaced, employed_improved) = self.employed();
        self.selection_probabilities();
        let onlooker: Vec<(bool, bool)> = (0..self.cfg.population_size).map(|_| self.onlooker()).collect();
        let scouted = self.scout();
        let msgs = expected_messages(
            &self.inst,
            &self.cfg,
            build_improved,
            employed_replaced,
            employed_improved,
            &onlooker,
            scouted,
        );
        self.trace.push(TraceRecord {
            iteration: self.trace.len() as u64 + 1,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
            gbest_utility: self.gbest_fitness,
            employed_requests: msgs.employed_requests,
            onlooker_requests: msgs.onlooker_requests,
            total_messages: msgs.total,
        });
        self.trace.last().unwrap()
    }

    pub fn run(mut self) -> AnytimeTrace {
        self.started = Instant::now();
        match self.cfg.budget {
            Budget::Iterations(k) => {
                for _ in 0..k {
                    self.iterate();
                }
            }
            Budget::WallClock(limit) => loop {
                self.iterate();
                if self.started.elapsed() >= limit {
                    break;
                }
            },
        }
        self.trace
    }

    pub fn trace(&self) -> &AnytimeTrace {
        &self.trace
    }

    pub fn tree(&self) -> &PseudoTree {
        &self.tree
    }

    /// `population()[u][i]`.
    pub fn population(&self) -> &[Vec<f64>] {
        &self.pop
    }

    pub fn population_fitness(&self) -> &[Option<f64>] {
        &self.pop_fit
    }

    pub fn elite(&self) -> &[Vec<f64>] {
        &self.elite
    }

    pub fn gbest(&self) -> Option<&[f64]> {
        self.gbest.as_deref()
    }

    pub fn gbest_fitness(&self) -> f64 {
        self.gbest_fitness
    }

    pub fn visited(&self) -> &VisitedMatrix {
        &self.visited
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Solutions re-drawn by the scout phase so far.
    pub fn redrawn(&self) -> u64 {
        self.redrawn
    }
}

/// Runs the replica to the configured budget.
pub fn centralized_replica(inst: &CdcopInstance, cfg: &SolverConfig) -> Result<AnytimeTrace, SolverError> {
    Ok(CentralizedReplica::new(Arc::new(inst.clone()), cfg.clone())?.run())
}

/// Runs both executions and reports the first field in which their traces
/// differ.
pub fn verify_equivalence(inst: &CdcopInstance, cfg: &SolverConfig) -> Result<AnytimeTrace, OracleError> {
    let distributed = DistributedSolver::solve(inst, cfg.clone())?.trace;
    let replica = centralized_replica(inst, cfg)?;
    match distributed.first_divergence(&replica) {
        Some(d) => Err(OracleError::Diverged(d)),
        None => Ok(distributed),
    }
}
