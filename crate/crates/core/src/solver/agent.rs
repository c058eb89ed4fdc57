//! Per-agent state machine.
//!
//! Agents share a global round clock and know the tree height, so every
//! phase has a fixed length and each agent knows locally when to start an
//! evaluation or report to its parent. Messages expected by a deadline but
//! not received are protocol violations.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{
    best_strict_improvement, candidate_update, draws, initial_value, roulette, scout_indices, select_elite,
    SelectionState, SolutionObject, Variant, VisitedMatrix,
};
use crate::model::{AgentId, CdcopInstance, IntervalDomain};
use crate::runtime::{Agent, Envelope, Message, Outbox, PopLabel, RuntimeError, ShareSlot, SolutionRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Segment {
    /// A bare evaluation of one population.
    Evaluate(PopLabel),
    Build,
    Employed,
    Selection,
    /// One fitness-proportional selection and its `M` updates.
    Onlooker,
    Scout,
}

/// Segment lengths in rounds, all derived from the tree height.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Timing {
    pub height: usize,
}

impl Timing {
    fn onlooker_eval_start(&self) -> usize {
        self.height.max(3)
    }

    /// Offset at which the segment's evaluation starts.
    pub fn eval_start(&self, seg: Segment) -> Option<usize> {
        match seg {
            Segment::Evaluate(_) | Segment::Build => Some(0),
            // request, value request, value share
            Segment::Employed => Some(3),
            Segment::Onlooker => Some(self.onlooker_eval_start()),
            Segment::Selection | Segment::Scout => None,
        }
    }

    pub fn len(&self, seg: Segment) -> usize {
        let h = self.height;
        // evaluation: values out, local sums, h convergecast rounds
        let eval = h + 2;
        // root decision round is the evaluation's last round; a broadcast
        // then needs h more
        match seg {
            Segment::Evaluate(_) => eval,
            Segment::Build => eval + h,
            Segment::Employed => 3 + eval + h,
            Segment::Selection => 1,
            Segment::Onlooker => self.onlooker_eval_start() + eval + h,
            Segment::Scout => h + 1,
        }
    }
}

/// Read-only parameters every agent knows.
#[derive(Debug)]
pub(crate) struct Shared {
    pub inst: Arc<CdcopInstance>,
    pub timing: Timing,
    pub population: usize,
    pub elite: usize,
    pub phi_range: (f64, f64),
    pub cap_phi_range: (f64, f64),
    pub variant: Variant,
    pub trial_limit: u64,
}

#[derive(Debug, Clone, Copy)]
struct PendingUpdate {
    elite_index: usize,
    phi: f64,
    cap_phi: f64,
}

#[derive(Debug)]
struct EvalState {
    pop: PopLabel,
    neighbor_values: BTreeMap<AgentId, Arc<[f64]>>,
    child_sums: BTreeMap<AgentId, Vec<f64>>,
}

/// State only the root keeps.
#[derive(Debug, Clone)]
pub(crate) struct RootState {
    pub visited: VisitedMatrix,
    /// Update requests per solution since it last changed; empty unless the
    /// variant uses a trial limit.
    pub attempts: Vec<u64>,
    pub selection: SelectionState,
    pub gbest_fitness: f64,
    pub current_u: Option<usize>,
    pub evaluations: u64,
}

impl RootState {
    fn note_request(&mut self, u: usize, agent: AgentId) {
        self.visited.mark(u, agent);
        if let Some(a) = self.attempts.get_mut(u) {
            *a += 1;
        }
    }

    /// Solution `u` was replaced or re-drawn.
    fn changed(&mut self, u: usize) {
        self.visited.clear_row(u);
        if let Some(a) = self.attempts.get_mut(u) {
            *a = 0;
        }
    }
}

/// Objects an agent stores, by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentFootprint {
    pub population: usize,
    pub employed_copy: usize,
    pub elite: usize,
    /// Onlooker work copies, live only during an onlooker selection.
    pub onlooker_copies: usize,
}

impl AgentFootprint {
    /// Objects held across phases: population, employed copy and elite.
    pub fn resident(&self) -> usize {
        self.population + self.employed_copy + self.elite
    }
}

#[derive(Debug)]
pub(crate) struct AbcdAgent {
    id: AgentId,
    depth: usize,
    parent: Option<AgentId>,
    children: Vec<AgentId>,
    domain: IntervalDomain,
    shared: Arc<Shared>,
    rng: ChaCha8Rng,
    clock: (Segment, usize),
    pub pop: Vec<SolutionObject>,
    pub q: Vec<SolutionObject>,
    pub r: Vec<SolutionObject>,
    pub elite: Vec<SolutionObject>,
    pub gbest_x: Option<f64>,
    /// The agent's decision variable.
    pub value: Option<f64>,
    pending: BTreeMap<ShareSlot, PendingUpdate>,
    overrides: Vec<(usize, f64)>,
    onlooker_u: Option<usize>,
    eval: Option<EvalState>,
    pub root: Option<RootState>,
}

impl AbcdAgent {
    /// Draws the initial population column from the agent's own stream.
    pub fn new(
        id: AgentId,
        depth: usize,
        parent: Option<AgentId>,
        children: Vec<AgentId>,
        shared: Arc<Shared>,
        mut rng: ChaCha8Rng,
    ) -> Self {
        let domain = shared.inst.domains()[id];
        let pop = (0..shared.population)
            .map(|_| SolutionObject::fresh(initial_value(domain, draws::closed_unit(&mut rng))))
            .collect();
        let root = parent.is_none().then(|| RootState {
            visited: VisitedMatrix::new(shared.population, shared.inst.n()),
            attempts: if shared.variant == Variant::AbcdC { vec![0; shared.population] } else { Vec::new() },
            selection: SelectionState::default(),
            gbest_fitness: f64::NEG_INFINITY,
            current_u: None,
            evaluations: 0,
        });
        Self {
            id,
            depth,
            parent,
            children,
            domain,
            shared,
            rng,
            clock: (Segment::Selection, 0),
            pop,
            q: Vec::new(),
            r: Vec::new(),
            elite: Vec::new(),
            gbest_x: None,
            value: None,
            pending: BTreeMap::new(),
            overrides: Vec::new(),
            onlooker_u: None,
            eval: None,
            root,
        }
    }

    pub fn set_clock(&mut self, seg: Segment, offset: usize) {
        self.clock = (seg, offset);
    }

    pub fn footprint(&self) -> AgentFootprint {
        AgentFootprint {
            population: self.pop.len(),
            employed_copy: self.q.len(),
            elite: self.elite.len(),
            onlooker_copies: self.r.len(),
        }
    }

    /// Testing hook: mutable root state.
    #[cfg(test)]
    pub fn root_mut(&mut self) -> &mut RootState {
        self.root.as_mut().expect("not the root")
    }

    fn violation(&self, round: u64, detail: impl Into<String>) -> RuntimeError {
        RuntimeError::protocol(round, self.id, detail)
    }

    fn work(&self, pop: PopLabel) -> &Vec<SolutionObject> {
        match pop {
            PopLabel::Main => &self.pop,
            PopLabel::Employed => &self.q,
            PopLabel::Onlooker => &self.r,
        }
    }

    fn work_mut(&mut self, pop: PopLabel) -> &mut Vec<SolutionObject> {
        match pop {
            PopLabel::Main => &mut self.pop,
            PopLabel::Employed => &mut self.q,
            PopLabel::Onlooker => &mut self.r,
        }
    }

    fn resolve(&self, round: u64, source: SolutionRef) -> Result<SolutionObject, RuntimeError> {
        self.work(source.pop)
            .get(source.index)
            .copied()
            .ok_or_else(|| self.violation(round, format!("no solution {:?}", source)))
    }

    fn forward(&self, out: &mut Outbox, msg: &Message) {
        for &c in &self.children {
            out.send(c, msg.clone());
        }
    }

    fn handle(&mut self, round: u64, env: Envelope, out: &mut Outbox) -> Result<(), RuntimeError> {
        let from = env.from;
        let msg = env.msg;
        match &msg {
            Message::NeighborValues { pop, values } => {
                let expected_len = self.eval.as_ref().map(|e| self.work(e.pop).len());
                let Some(ev) = self.eval.as_mut() else {
                    return Err(self.violation(round, format!("neighbour values from {from} outside an evaluation")));
                };
                if ev.pop != *pop || Some(values.len()) != expected_len {
                    return Err(RuntimeError::protocol(round, self.id, format!("mismatched neighbour values from {from}")));
                }
                if ev.neighbor_values.insert(from, values.clone()).is_some() {
                    return Err(RuntimeError::protocol(round, self.id, format!("duplicate neighbour values from {from}")));
                }
            }
            Message::FitnessUp { pop, sums } => {
                let is_child = self.children.contains(&from);
                let Some(ev) = self.eval.as_mut() else {
                    return Err(self.violation(round, format!("fitness report from {from} outside an evaluation")));
                };
                if !is_child || ev.pop != *pop || ev.child_sums.insert(from, sums.clone()).is_some() {
                    return Err(RuntimeError::protocol(round, self.id, format!("unexpected fitness report from {from}")));
                }
            }
            Message::GbestDown { source } => {
                self.gbest_x = Some(self.resolve(round, *source)?.x);
                self.forward(out, &msg);
            }
            Message::EliteDown { indices } => {
                self.elite = indices.iter().map(|&k| self.resolve(round, SolutionRef { pop: PopLabel::Main, index: k })).collect::<Result<_, _>>()?;
                self.value = self.gbest_x;
                self.forward(out, &msg);
            }
            Message::SolutionReplaceDown { replacements } => {
                for &(source, target) in replacements {
                    let obj = self.resolve(round, source)?;
                    if target >= self.pop.len() {
                        return Err(self.violation(round, format!("no solution {target}")));
                    }
                    self.pop[target] = obj;
                }
                self.forward(out, &msg);
            }
            Message::SolutionCopyDown { u } => {
                self.note_onlooker_u(round, *u)?;
                self.forward(out, &msg);
            }
            Message::ScoutReinitRequest { indices } => {
                self.reinitialize(indices);
                self.forward(out, &msg);
            }
            Message::EmployedUpdateRequest { u } => {
                if self.clock.0 != Segment::Employed {
                    return Err(self.violation(round, "employed request outside the employed phase"));
                }
                let s = self.shared.clone();
                let elite_index = draws::index(&mut self.rng, s.elite);
                let helper = draws::other_agent(&mut self.rng, s.inst.n(), self.id);
                let phi = draws::in_range(&mut self.rng, s.phi_range);
                let cap_phi = draws::in_range(&mut self.rng, s.cap_phi_range);
                let slot = ShareSlot::Employed { u: *u };
                self.queue_update(round, slot, PendingUpdate { elite_index, phi, cap_phi })?;
                out.send(helper, Message::ValueRequest { slot, u: *u, elite: elite_index });
            }
            Message::OnlookerUpdateRequest { u, m } => {
                if self.clock.0 != Segment::Onlooker {
                    return Err(self.violation(round, "onlooker request outside an onlooker phase"));
                }
                self.note_onlooker_u(round, *u)?;
                let s = self.shared.clone();
                let helper = draws::other_agent(&mut self.rng, s.inst.n(), self.id);
                let elite_index = draws::index(&mut self.rng, s.elite);
                let phi = draws::in_range(&mut self.rng, s.phi_range);
                let cap_phi = draws::in_range(&mut self.rng, s.cap_phi_range);
                let slot = ShareSlot::Onlooker { m: *m };
                self.queue_update(round, slot, PendingUpdate { elite_index, phi, cap_phi })?;
                out.send(helper, Message::ValueRequest { slot, u: *u, elite: *m });
            }
            Message::ValueRequest { slot, u, elite } => {
                let elite_x = self.elite.get(*elite).map(|o| o.x);
                let pop_x = self.pop.get(*u).map(|o| o.x);
                let (Some(elite_x), Some(pop_x)) = (elite_x, pop_x) else {
                    return Err(self.violation(round, format!("cannot share elite {elite} / solution {u}")));
                };
                out.send(from, Message::ValueShare { slot: *slot, elite_x, pop_x });
            }
            Message::ValueShare { slot, elite_x, pop_x } => {
                let Some(p) = self.pending.remove(slot) else {
                    return Err(self.violation(round, format!("unsolicited value share {slot:?} from {from}")));
                };
                let gbest = self.gbest_x.ok_or_else(|| self.violation(round, "update before any global best is known"))?;
                let own_elite = self.elite[p.elite_index].x;
                let x = candidate_update(*elite_x, gbest, *pop_x, own_elite, p.phi, p.cap_phi, self.domain);
                let index = match *slot {
                    ShareSlot::Employed { u } => u,
                    ShareSlot::Onlooker { m } => m,
                };
                self.overrides.push((index, x));
            }
        }
        Ok(())
    }

    fn queue_update(&mut self, round: u64, slot: ShareSlot, p: PendingUpdate) -> Result<(), RuntimeError> {
        if self.pending.insert(slot, p).is_some() {
            return Err(self.violation(round, format!("duplicate update request {slot:?}")));
        }
        Ok(())
    }

    fn note_onlooker_u(&mut self, round: u64, u: usize) -> Result<(), RuntimeError> {
        match self.onlooker_u {
            Some(prev) if prev != u => Err(self.violation(round, format!("onlooker selection changed from {prev} to {u}"))),
            _ => {
                self.onlooker_u = Some(u);
                Ok(())
            }
        }
    }

    fn reinitialize(&mut self, indices: &[usize]) {
        for &t in indices {
            self.pop[t] = SolutionObject::fresh(initial_value(self.domain, draws::closed_unit(&mut self.rng)));
        }
    }

    fn begin_eval(&mut self, round: u64, pop: PopLabel, out: &mut Outbox) -> Result<(), RuntimeError> {
        if !self.pending.is_empty() {
            return Err(self.violation(round, format!("{} value shares missing at evaluation start", self.pending.len())));
        }
        match pop {
            PopLabel::Main => {}
            PopLabel::Employed => {
                self.q.clear();
                self.q.extend_from_slice(&self.pop);
            }
            PopLabel::Onlooker => {
                let u = self.onlooker_u.take().ok_or_else(|| self.violation(round, "no onlooker selection received"))?;
                self.r.clear();
                self.r.resize(self.shared.elite, self.pop[u]);
            }
        }
        let overrides = std::mem::take(&mut self.overrides);
        if pop == PopLabel::Main && !overrides.is_empty() {
            return Err(self.violation(round, "updates pending for the main population"));
        }
        let work = self.work_mut(pop);
        for (k, x) in overrides {
            work[k].x = x;
            work[k].stale = true;
        }
        let values: Arc<[f64]> = work.iter().map(|o| o.x).collect();
        for &j in self.shared.inst.neighbors(self.id) {
            out.send(j, Message::NeighborValues { pop, values: values.clone() });
        }
        self.eval = Some(EvalState { pop, neighbor_values: BTreeMap::new(), child_sums: BTreeMap::new() });
        if let Some(root) = &mut self.root {
            root.evaluations += 1;
        }
        Ok(())
    }

    /// Sums the agent's incident utilities for every solution, in ascending
    /// neighbour order.
    fn compute_local(&mut self, round: u64) -> Result<(), RuntimeError> {
        let ev = self.eval.take().ok_or_else(|| self.violation(round, "no evaluation in progress"))?;
        let inst = self.shared.inst.clone();
        for &j in inst.neighbors(self.id) {
            if !ev.neighbor_values.contains_key(&j) {
                return Err(self.violation(round, format!("missing neighbour values from {j}")));
            }
        }
        let id = self.id;
        let work = self.work_mut(ev.pop);
        for obj in work.iter_mut() {
            obj.local_fitness = 0.0;
        }
        for (j, c) in inst.incident(id) {
            let theirs = &ev.neighbor_values[&j];
            for (obj, &y) in work.iter_mut().zip(theirs.iter()) {
                obj.local_fitness += c.eval_from(id, obj.x, y);
            }
        }
        self.eval = Some(ev);
        Ok(())
    }

    /// Adds the children's subtree sums; the root halves the total, everyone
    /// else reports to its parent.
    fn aggregate(&mut self, round: u64, out: &mut Outbox) -> Result<(), RuntimeError> {
        let ev = self.eval.take().ok_or_else(|| self.violation(round, "no evaluation in progress"))?;
        if let Some(c) = self.children.iter().find(|c| !ev.child_sums.contains_key(c)) {
            return Err(self.violation(round, format!("missing fitness report from child {c}")));
        }
        let children = self.children.clone();
        let is_root = self.root.is_some();
        let work = self.work_mut(ev.pop);
        for (k, obj) in work.iter_mut().enumerate() {
            let mut acc = obj.local_fitness;
            for c in &children {
                acc += ev.child_sums[c][k];
            }
            obj.fitness = if is_root { acc / 2.0 } else { acc };
            obj.stale = false;
        }
        if let Some(parent) = self.parent {
            let sums = self.work(ev.pop).iter().map(|o| o.fitness).collect();
            out.send(parent, Message::FitnessUp { pop: ev.pop, sums });
        }
        Ok(())
    }

    fn root_start(&mut self, round: u64, seg: Segment, out: &mut Outbox) -> Result<(), RuntimeError> {
        let s = self.shared.clone();
        let n = s.inst.n();
        let Some(root) = self.root.as_mut() else { return Ok(()) };
        match seg {
            Segment::Employed => {
                for u in 0..s.population {
                    let j = draws::agent(&mut self.rng, n);
                    out.send(j, Message::EmployedUpdateRequest { u });
                    root.note_request(u, j);
                }
            }
            Segment::Selection => {
                let fitness: Vec<f64> = self.pop.iter().map(|o| o.fitness).collect();
                root.selection = SelectionState::from_fitness(&fitness);
            }
            Segment::Onlooker => {
                if root.selection.prob.len() != s.population {
                    return Err(RuntimeError::protocol(round, self.id, "selection probabilities not computed"));
                }
                let u = roulette(&root.selection.prob, draws::open_unit(&mut self.rng));
                root.current_u = Some(u);
                self.onlooker_u = Some(u);
                for &c in &self.children {
                    out.send(c, Message::SolutionCopyDown { u });
                }
                for m in 0..s.elite {
                    let j = draws::agent(&mut self.rng, n);
                    root.note_request(u, j);
                    out.send(j, Message::OnlookerUpdateRequest { u, m });
                }
            }
            Segment::Scout => {
                let indices = scout_indices(s.variant, &root.visited, &root.attempts, s.trial_limit);
                if indices.is_empty() {
                    return Ok(());
                }
                for &t in &indices {
                    root.changed(t);
                }
                let msg = Message::ScoutReinitRequest { indices };
                self.forward(out, &msg);
                if let Message::ScoutReinitRequest { indices } = msg {
                    self.reinitialize(&indices);
                }
            }
            Segment::Evaluate(_) | Segment::Build => {}
        }
        Ok(())
    }

    /// Root decisions once an evaluation has reached it.
    fn root_complete(&mut self, round: u64, seg: Segment, out: &mut Outbox) -> Result<(), RuntimeError> {
        let m = self.shared.elite;
        let Some(root) = self.root.as_mut() else { return Ok(()) };
        let mut gbest_source = None;
        let mut replacements = Vec::new();
        match seg {
            Segment::Build => {
                let fits: Vec<f64> = self.pop.iter().map(|o| if o.stale { f64::NEG_INFINITY } else { o.fitness }).collect();
                if let Some(best) = best_strict_improvement(&fits, root.gbest_fitness) {
                    root.gbest_fitness = fits[best];
                    gbest_source = Some(SolutionRef { pop: PopLabel::Main, index: best });
                }
            }
            Segment::Employed => {
                for (u, (q, p)) in self.q.iter().zip(self.pop.iter_mut()).enumerate() {
                    if q.fitness > p.fitness {
                        *p = *q;
                        root.changed(u);
                        replacements.push((SolutionRef { pop: PopLabel::Employed, index: u }, u));
                    }
                }
                let fits: Vec<f64> = self.q.iter().map(|o| o.fitness).collect();
                if let Some(best) = best_strict_improvement(&fits, root.gbest_fitness) {
                    root.gbest_fitness = fits[best];
                    gbest_source = Some(SolutionRef { pop: PopLabel::Employed, index: best });
                }
            }
            Segment::Onlooker => {
                let u = root.current_u.take().ok_or_else(|| RuntimeError::protocol(round, self.id, "no onlooker selection"))?;
                let fits: Vec<f64> = self.r.iter().map(|o| o.fitness).collect();
                if let Some(t) = best_strict_improvement(&fits, self.pop[u].fitness) {
                    self.pop[u] = self.r[t];
                    root.changed(u);
                    replacements.push((SolutionRef { pop: PopLabel::Onlooker, index: t }, u));
                }
                if let Some(best) = best_strict_improvement(&fits, root.gbest_fitness) {
                    root.gbest_fitness = fits[best];
                    gbest_source = Some(SolutionRef { pop: PopLabel::Onlooker, index: best });
                }
            }
            Segment::Evaluate(_) | Segment::Selection | Segment::Scout => {}
        }
        if !replacements.is_empty() {
            self.forward(out, &Message::SolutionReplaceDown { replacements });
        }
        if let Some(source) = gbest_source {
            self.gbest_x = Some(self.resolve(round, source)?.x);
            self.forward(out, &Message::GbestDown { source });
        }
        if seg == Segment::Build {
            let fits: Vec<f64> = self.pop.iter().map(|o| o.fitness).collect();
            let indices = select_elite(&fits, m);
            self.elite = indices.iter().map(|&k| self.pop[k]).collect();
            self.value = self.gbest_x;
            self.forward(out, &Message::EliteDown { indices });
        }
        Ok(())
    }
}

impl Agent for AbcdAgent {
    fn id(&self) -> AgentId {
        self.id
    }

    fn step(&mut self, round: u64, inbox: Vec<Envelope>, out: &mut Outbox) -> Result<(), RuntimeError> {
        for env in inbox {
            self.handle(round, env, out)?;
        }
        let (seg, offset) = self.clock;
        if offset == 0 {
            self.root_start(round, seg, out)?;
        }
        let timing = self.shared.timing;
        if let Some(start) = timing.eval_start(seg) {
            if offset >= start {
                let e = offset - start;
                let pop = match seg {
                    Segment::Evaluate(p) => p,
                    Segment::Build => PopLabel::Main,
                    Segment::Employed => PopLabel::Employed,
                    _ => PopLabel::Onlooker,
                };
                if e == 0 {
                    self.begin_eval(round, pop, out)?;
                }
                if e == 1 {
                    self.compute_local(round)?;
                }
                if e == 1 + timing.height - self.depth {
                    self.aggregate(round, out)?;
                    if self.root.is_some() {
                        self.root_complete(round, seg, out)?;
                    }
                }
            }
        }
        Ok(())
    }
}
