use std::sync::Arc;
use std::time::Instant;

use super::agent::{AbcdAgent, AgentFootprint, Segment, Shared, Timing};
use super::{Budget, SelectionState, SolverConfig, SolverError, VisitedMatrix};
use crate::model::{Assignment, CdcopInstance};
use crate::rng::agent_stream;
use crate::runtime::{Counters, MailboxNetwork, MessageKind, PopLabel};
use crate::trace::{AnytimeTrace, TraceRecord};
use crate::tree::PseudoTree;

/// Extra state held by the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootFootprint {
    pub visited_flags: usize,
    pub fit_entries: usize,
    pub prob_entries: usize,
    /// Per-solution request counters kept for a trial limit.
    pub trial_counters: usize,
}

impl RootFootprint {
    pub fn total(&self) -> usize {
        self.visited_flags + self.fit_entries + self.prob_entries + self.trial_counters
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: AnytimeTrace,
    /// The global-best assignment, gathered from every agent's component.
    pub assignment: Assignment,
    /// Root-held fitness of `assignment`.
    pub utility: f64,
    pub counters: Counters,
    pub rounds: u64,
}

/// Runs the protocol on a [`MailboxNetwork`], one agent per variable.
#[derive(Debug)]
pub struct DistributedSolver {
    inst: Arc<CdcopInstance>,
    tree: Arc<PseudoTree>,
    cfg: SolverConfig,
    timing: Timing,
    agents: Vec<AbcdAgent>,
    net: MailboxNetwork,
    trace: AnytimeTrace,
    started: Instant,
}

impl DistributedSolver {
    /// Builds the pseudo-tree and draws the initial population.
    pub fn new(inst: Arc<CdcopInstance>, cfg: SolverConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let n = inst.n();
        if n < 2 {
            return Err(SolverError::Config("at least two agents are required".into()));
        }
        let tree = Arc::new(PseudoTree::build_with(&inst, cfg.seed, cfg.root)?);
        let timing = Timing { height: tree.height() };
        let shared = Arc::new(Shared {
            inst: inst.clone(),
            timing,
            population: cfg.population_size,
            elite: cfg.elite_size,
            phi_range: cfg.phi_range,
            cap_phi_range: cfg.cap_phi_range,
            variant: cfg.variant,
            trial_limit: cfg.trial_limit.unwrap_or(n) as u64,
        });
        let agents = (0..n)
            .map(|i| {
                AbcdAgent::new(
                    i,
                    tree.depth(i),
                    tree.parent(i),
                    tree.children(i).to_vec(),
                    shared.clone(),
                    agent_stream(cfg.seed, i),
                )
            })
            .collect();
        let hop_tree = tree.clone();
        let mut net = MailboxNetwork::new(n).with_hop_metric(move |a, b| hop_tree.path_len(a, b) as u64);
        if cfg.message_log {
            net = net.with_log();
        }
        Ok(Self { inst, tree, cfg, timing, agents, net, trace: AnytimeTrace::default(), started: Instant::now() })
    }

    /// Convenience: build and run to the configured budget.
    pub fn solve(inst: &CdcopInstance, cfg: SolverConfig) -> Result<RunOutcome, SolverError> {
        Self::new(Arc::new(inst.clone()), cfg)?.run()
    }

    fn run_segment(&mut self, seg: Segment) -> Result<(), SolverError> {
        for offset in 0..self.timing.len(seg) {
            for a in &mut self.agents {
                a.set_clock(seg, offset);
            }
            self.net.run_round(&mut self.agents)?;
        }
        debug_assert!(self.net.is_quiescent(), "{seg:?} left messages in flight");
        Ok(())
    }

    /// Evaluates one population; the root ends up holding every solution's
    /// global utility.
    pub fn evaluate(&mut self, pop: PopLabel) -> Result<(), SolverError> {
        self.run_segment(Segment::Evaluate(pop))
    }

    pub fn build_phase(&mut self) -> Result<(), SolverError> {
        self.run_segment(Segment::Build)
    }

    pub fn employed_phase(&mut self) -> Result<(), SolverError> {
        self.run_segment(Segment::Employed)
    }

    pub fn compute_selection_probabilities(&mut self) -> Result<(), SolverError> {
        self.run_segment(Segment::Selection)
    }

    /// `S` fitness-proportional selections, each with `M` updates.
    pub fn onlooker_phase(&mut self) -> Result<(), SolverError> {
        for _ in 0..self.cfg.population_size {
            self.run_segment(Segment::Onlooker)?;
        }
        Ok(())
    }

    pub fn scout_phase(&mut self) -> Result<(), SolverError> {
        self.run_segment(Segment::Scout)
    }

    /// Runs one full iteration and appends its trace record.
    pub fn iterate(&mut self) -> Result<&TraceRecord, SolverError> {
        let before = self.net.counters().clone();
        self.build_phase()?;
        self.employed_phase()?;
        self.compute_selection_probabilities()?;
        self.onlooker_phase()?;
        self.scout_phase()?;
        let delta = self.net.counters().since(&before);
        let rec = TraceRecord {
            iteration: self.trace.len() as u64 + 1,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
            gbest_utility: self.gbest_fitness(),
            employed_requests: delta.of(MessageKind::EmployedUpdateRequest),
            onlooker_requests: delta.of(MessageKind::OnlookerUpdateRequest),
            total_messages: delta.sent,
        };
        self.trace.push(rec);
        Ok(self.trace.last().unwrap())
    }

    pub fn run(mut self) -> Result<RunOutcome, SolverError> {
        self.started = Instant::now();
        match self.cfg.budget {
            Budget::Iterations(k) => {
                for _ in 0..k {
                    self.iterate()?;
                }
            }
            Budget::WallClock(limit) => loop {
                self.iterate()?;
                if self.started.elapsed() >= limit {
                    break;
                }
            },
        }
        Ok(self.outcome())
    }

    fn outcome(&self) -> RunOutcome {
        RunOutcome {
            trace: self.trace.clone(),
            assignment: self.gbest_assignment(),
            utility: self.gbest_fitness(),
            counters: self.net.counters().clone(),
            rounds: self.net.round(),
        }
    }

    fn root(&self) -> &AbcdAgent {
        &self.agents[self.tree.root()]
    }

    fn root_state(&self) -> &super::agent::RootState {
        self.root().root.as_ref().expect("root agent keeps root state")
    }

    pub fn instance(&self) -> &CdcopInstance {
        &self.inst
    }

    pub fn tree(&self) -> &PseudoTree {
        &self.tree
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn network(&self) -> &MailboxNetwork {
        &self.net
    }

    pub fn trace(&self) -> &AnytimeTrace {
        &self.trace
    }

    /// Rounds one iteration takes; fixed by `S` and the tree height.
    pub fn rounds_per_iteration(&self) -> u64 {
        let t = self.timing;
        (t.len(Segment::Build)
            + t.len(Segment::Employed)
            + t.len(Segment::Selection)
            + self.cfg.population_size * t.len(Segment::Onlooker)
            + t.len(Segment::Scout)) as u64
    }

    pub fn gbest_fitness(&self) -> f64 {
        self.root_state().gbest_fitness
    }

    /// Every agent's global-best component. Components not yet set are NaN.
    pub fn gbest_assignment(&self) -> Assignment {
        Assignment::new(self.agents.iter().map(|a| a.gbest_x.unwrap_or(f64::NAN)).collect())
    }

    /// Every agent's decision variable. Unset values are NaN.
    pub fn decision_values(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.value.unwrap_or(f64::NAN)).collect()
    }

    /// Solution `u` of the main population, assembled from every agent.
    pub fn solution(&self, u: usize) -> Assignment {
        Assignment::new(self.agents.iter().map(|a| a.pop[u].x).collect())
    }

    /// Every stored value of agent `i`: population, employed copy, onlooker
    /// copies and elite.
    pub fn stored_values(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        let a = &self.agents[i];
        a.pop.iter().chain(&a.q).chain(&a.r).chain(&a.elite).map(|o| o.x)
    }

    /// Elite set solution `m`, assembled from every agent.
    pub fn elite_solution(&self, m: usize) -> Assignment {
        Assignment::new(self.agents.iter().map(|a| a.elite[m].x).collect())
    }

    /// Root-held fitness of every main-population solution; `None` where the
    /// solution was re-drawn and not evaluated since.
    pub fn root_fitness(&self) -> Vec<Option<f64>> {
        self.root().pop.iter().map(|o| (!o.stale).then_some(o.fitness)).collect()
    }

    pub fn employed_fitness(&self) -> Vec<f64> {
        self.root().q.iter().map(|o| o.fitness).collect()
    }

    pub fn visited(&self) -> &VisitedMatrix {
        &self.root_state().visited
    }

    /// Update requests per solution since it last changed; empty for
    /// [`Variant::AbcdE`].
    pub fn attempts(&self) -> &[u64] {
        &self.root_state().attempts
    }

    pub fn selection(&self) -> &SelectionState {
        &self.root_state().selection
    }

    /// Evaluations started by the root since construction.
    pub fn evaluations(&self) -> u64 {
        self.root_state().evaluations
    }

    pub fn footprints(&self) -> Vec<AgentFootprint> {
        self.agents.iter().map(AbcdAgent::footprint).collect()
    }

    pub fn root_footprint(&self) -> RootFootprint {
        let r = self.root_state();
        RootFootprint {
            visited_flags: r.visited.entries(),
            fit_entries: r.selection.fit.len(),
            prob_entries: r.selection.prob.len(),
            trial_counters: r.attempts.len(),
        }
    }

    #[cfg(test)]
    pub(crate) fn agents_mut(&mut self) -> &mut [AbcdAgent] {
        &mut self.agents
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{four_agent_example, pair};
    use crate::model::global_utility;
    use crate::solver::Variant;

    fn solver(inst: CdcopInstance, s: usize, m: usize) -> DistributedSolver {
        DistributedSolver::new(Arc::new(inst), SolverConfig::new(s, m, 1, 3)).unwrap()
    }

    fn set_solution(sv: &mut DistributedSolver, u: usize, x: &[f64]) {
        for (a, &v) in sv.agents_mut().iter_mut().zip(x) {
            a.pop[u].x = v;
        }
    }

    #[test]
    fn evaluate_example_at_origin() {
        let mut sv = solver(four_agent_example(), 2, 1);
        set_solution(&mut sv, 0, &[0.0; 4]);
        sv.evaluate(PopLabel::Main).unwrap();
        assert_eq!(sv.root_fitness()[0], Some(49.0));
        // purity
        let first = sv.root_fitness();
        sv.evaluate(PopLabel::Main).unwrap();
        assert_eq!(sv.root_fitness(), first);
    }

    #[test]
    fn evaluate_product_halves_double_count() {
        let mut sv = solver(pair(|x, y| x * y), 1, 1);
        set_solution(&mut sv, 0, &[3.0, 4.0]);
        sv.evaluate(PopLabel::Main).unwrap();
        assert_eq!(sv.agents_mut()[0].pop[0].local_fitness, 12.0);
        assert_eq!(sv.agents_mut()[1].pop[0].local_fitness, 12.0);
        // the raw sum counts the constraint twice; the root halves it
        assert_eq!(sv.root_fitness()[0], Some(12.0));
    }

    #[test]
    fn evaluated_fitness_matches_global_utility() {
        let mut sv = solver(four_agent_example(), 6, 2);
        sv.evaluate(PopLabel::Main).unwrap();
        for (u, f) in sv.root_fitness().into_iter().enumerate() {
            let direct = global_utility(sv.instance(), &sv.solution(u)).unwrap();
            assert!((f.unwrap() - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn build_sets_gbest_elite_and_decision_values() {
        let mut sv = solver(four_agent_example(), 5, 2);
        sv.build_phase().unwrap();
        let fit: Vec<f64> = sv.root_fitness().into_iter().map(Option::unwrap).collect();
        let best = crate::solver::best_strict_improvement(&fit, f64::NEG_INFINITY).unwrap();
        assert_eq!(sv.gbest_fitness(), fit[best]);
        assert_eq!(sv.gbest_assignment(), sv.solution(best));
        assert_eq!(sv.decision_values(), sv.solution(best).into_inner());
        let elite = crate::solver::select_elite(&fit, 2);
        for (m, &k) in elite.iter().enumerate() {
            assert_eq!(sv.elite_solution(m), sv.solution(k));
        }
        // a second build with nothing better keeps gbest
        let g = sv.gbest_fitness();
        sv.build_phase().unwrap();
        assert_eq!(sv.gbest_fitness(), g);
    }

    #[test]
    fn elite_equals_population_when_m_equals_s() {
        let mut sv = solver(four_agent_example(), 3, 3);
        sv.build_phase().unwrap();
        let mut elite: Vec<Vec<f64>> = (0..3).map(|m| sv.elite_solution(m).into_inner()).collect();
        let mut pop: Vec<Vec<f64>> = (0..3).map(|u| sv.solution(u).into_inner()).collect();
        elite.sort_by(|a, b| a.partial_cmp(b).unwrap());
        pop.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(elite, pop);
    }

    #[test]
    fn employed_phase_sends_one_request_per_solution() {
        let mut sv = solver(four_agent_example(), 4, 2);
        sv.build_phase().unwrap();
        let before = sv.network().counters().clone();
        sv.employed_phase().unwrap();
        let d = sv.network().counters().since(&before);
        assert_eq!(d.of(MessageKind::EmployedUpdateRequest), 4);
        assert_eq!(d.of(MessageKind::ValueRequest), 4);
        assert_eq!(d.of(MessageKind::ValueShare), 4);
        // every solution was visited by exactly the agent asked
        for u in 0..4 {
            assert!(sv.visited().row(u).iter().filter(|&&v| v).count() <= 1);
        }
    }

    #[test]
    fn employed_replacement_is_strict_and_updates_gbest() {
        let mut sv = solver(four_agent_example(), 8, 2);
        sv.build_phase().unwrap();
        let p_before = sv.root_fitness();
        let g_before = sv.gbest_fitness();
        sv.employed_phase().unwrap();
        let q = sv.employed_fitness();
        for u in 0..8 {
            let p = p_before[u].unwrap();
            let now = sv.root_fitness()[u].unwrap();
            if q[u] > p {
                assert_eq!(now, q[u]);
            } else {
                assert_eq!(now, p);
            }
        }
        let best_q = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(sv.gbest_fitness(), g_before.max(best_q));
    }

    #[test]
    fn constant_utility_never_replaces() {
        // every candidate ties, so visited rows only ever fill up
        let mut sv = solver(pair(|_, _| 0.0), 4, 2);
        sv.build_phase().unwrap();
        let before: Vec<Assignment> = (0..4).map(|u| sv.solution(u)).collect();
        sv.employed_phase().unwrap();
        sv.compute_selection_probabilities().unwrap();
        sv.onlooker_phase().unwrap();
        let after: Vec<Assignment> = (0..4).map(|u| sv.solution(u)).collect();
        assert_eq!(before, after);
        assert_eq!(sv.gbest_fitness(), 0.0);
    }

    #[test]
    fn onlooker_phase_request_count() {
        let mut sv3 = DistributedSolver::new(Arc::new(four_agent_example()), SolverConfig::new(3, 2, 1, 0)).unwrap();
        sv3.build_phase().unwrap();
        sv3.employed_phase().unwrap();
        sv3.compute_selection_probabilities().unwrap();
        let before = sv3.network().counters().clone();
        sv3.onlooker_phase().unwrap();
        let d = sv3.network().counters().since(&before);
        assert_eq!(d.of(MessageKind::OnlookerUpdateRequest), 6);
        assert_eq!(d.of(MessageKind::SolutionCopyDown), 3 * 3);
    }

    #[test]
    fn degenerate_selection_always_picks_first() {
        let mut cfg = SolverConfig::new(2, 1, 1, 3);
        cfg.message_log = true;
        let mut sv = DistributedSolver::new(Arc::new(four_agent_example()), cfg).unwrap();
        let root = sv.tree().root();
        sv.build_phase().unwrap();
        sv.employed_phase().unwrap();
        sv.compute_selection_probabilities().unwrap();
        sv.agents_mut()[root].root_mut().selection.prob = vec![1.0, 0.0];
        sv.onlooker_phase().unwrap();
        let picks: Vec<usize> = sv
            .network()
            .log()
            .unwrap()
            .iter()
            .filter(|r| r.kind == MessageKind::SolutionCopyDown)
            .map(|r| r.solution_index.unwrap())
            .collect();
        assert_eq!(picks.len(), 2 * 3);
        assert!(picks.iter().all(|&u| u == 0));
    }

    #[test]
    fn scout_redraws_complete_rows_only() {
        let mut sv = solver(four_agent_example(), 3, 1);
        sv.build_phase().unwrap();
        let before: Vec<Assignment> = (0..3).map(|u| sv.solution(u)).collect();
        let r = sv.tree().root();
        {
            let root = sv.agents_mut()[r].root_mut();
            root.visited = VisitedMatrix::new(3, 4);
            root.visited.set_row(1, true);
            for i in 0..3 {
                root.visited.mark(2, i);
            }
        }
        sv.scout_phase().unwrap();
        assert!(sv.visited().row(1).iter().all(|v| !v));
        assert_eq!(sv.visited().row(2), &[true, true, true, false]);
        let after: Vec<Assignment> = (0..3).map(|u| sv.solution(u)).collect();
        assert_eq!(before[0], after[0]);
        assert_eq!(before[2], after[2]);
        for i in 0..4 {
            assert_ne!(before[1].values()[i], after[1].values()[i]);
        }
        assert_eq!(sv.root_fitness()[1], None);
    }

    #[test]
    fn ablation_scout_uses_request_count() {
        let cfg = SolverConfig::new(3, 1, 1, 3).with_variant(Variant::AbcdC);
        let mut sv = DistributedSolver::new(Arc::new(four_agent_example()), cfg).unwrap();
        sv.build_phase().unwrap();
        let before: Vec<Assignment> = (0..3).map(|u| sv.solution(u)).collect();
        let r = sv.tree().root();
        {
            let root = sv.agents_mut()[r].root_mut();
            // a complete row alone does not trigger a re-draw
            root.visited.set_row(0, true);
            root.attempts = vec![3, 4, 9];
        }
        sv.scout_phase().unwrap();
        let after: Vec<Assignment> = (0..3).map(|u| sv.solution(u)).collect();
        assert_eq!(before[0], after[0]);
        assert_ne!(before[1], after[1]);
        assert_ne!(before[2], after[2]);
        assert_eq!(sv.attempts(), &[3, 0, 0]);
        assert!(sv.visited().row_complete(0));
    }

    #[test]
    fn unlimited_trials_never_redraw() {
        let mut cfg = SolverConfig::new(3, 1, 1, 3).with_variant(Variant::AbcdC);
        cfg.trial_limit = Some(usize::MAX);
        let mut sv = DistributedSolver::new(Arc::new(four_agent_example()), cfg).unwrap();
        sv.build_phase().unwrap();
        let before: Vec<Assignment> = (0..3).map(|u| sv.solution(u)).collect();
        let r = sv.tree().root();
        sv.agents_mut()[r].root_mut().attempts = vec![u64::MAX - 1; 3];
        sv.scout_phase().unwrap();
        assert_eq!(before, (0..3).map(|u| sv.solution(u)).collect::<Vec<_>>());
    }

    #[test]
    fn request_counters_track_visits() {
        let cfg = SolverConfig::new(4, 2, 1, 5).with_variant(Variant::AbcdC);
        let mut sv = DistributedSolver::new(Arc::new(four_agent_example()), cfg).unwrap();
        sv.build_phase().unwrap();
        sv.employed_phase().unwrap();
        for u in 0..4 {
            let marks = sv.visited().row(u).iter().filter(|&&v| v).count() as u64;
            assert_eq!(sv.attempts()[u], marks);
        }
    }

    #[test]
    fn rejects_single_agent_and_bad_config() {
        let dom = crate::model::IntervalDomain::new(0.0, 1.0).unwrap();
        let one = CdcopInstance::new(vec![dom], vec![]).unwrap();
        assert!(matches!(DistributedSolver::new(Arc::new(one), SolverConfig::new(2, 1, 1, 0)), Err(SolverError::Config(_))));
        let two = pair(|x, y| x + y);
        assert!(DistributedSolver::new(Arc::new(two), SolverConfig::new(2, 1, 0, 0)).is_err());
    }
}
