//! Deterministic synchronous-round mailbox network.
//!
//! Messages sent during round `r` are delivered at the start of round `r + 1`.
//! Within a round agents step in ascending id order, each seeing only the
//! messages delivered to it. Delivery order into an inbox is send order, so
//! every (sender, receiver) pair is FIFO.

use std::collections::VecDeque;
use std::sync::Arc;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::model::AgentId;

/// Which population a message refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PopLabel {
    /// The main population `P`.
    Main,
    /// Employed-phase work copy `Q`.
    Employed,
    /// Onlooker-phase work copies `R`.
    Onlooker,
}

/// A solution of a given population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolutionRef {
    pub pop: PopLabel,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    NeighborValues,
    FitnessUp,
    GbestDown,
    EliteDown,
    EmployedUpdateRequest,
    OnlookerUpdateRequest,
    ValueRequest,
    ValueShare,
    SolutionReplaceDown,
    ScoutReinitRequest,
    SolutionCopyDown,
}

impl MessageKind {
    pub const ALL: [MessageKind; 11] = [
        MessageKind::NeighborValues,
        MessageKind::FitnessUp,
        MessageKind::GbestDown,
        MessageKind::EliteDown,
        MessageKind::EmployedUpdateRequest,
        MessageKind::OnlookerUpdateRequest,
        MessageKind::ValueRequest,
        MessageKind::ValueShare,
        MessageKind::SolutionReplaceDown,
        MessageKind::ScoutReinitRequest,
        MessageKind::SolutionCopyDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::NeighborValues => "NeighborValues",
            MessageKind::FitnessUp => "FitnessUp",
            MessageKind::GbestDown => "GbestDown",
            MessageKind::EliteDown => "EliteDown",
            MessageKind::EmployedUpdateRequest => "EmployedUpdateRequest",
            MessageKind::OnlookerUpdateRequest => "OnlookerUpdateRequest",
            MessageKind::ValueRequest => "ValueRequest",
            MessageKind::ValueShare => "ValueShare",
            MessageKind::SolutionReplaceDown => "SolutionReplaceDown",
            MessageKind::ScoutReinitRequest => "ScoutReinitRequest",
            MessageKind::SolutionCopyDown => "SolutionCopyDown",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a value request is answered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShareSlot {
    /// Employed update of solution `u`.
    Employed { u: usize },
    /// Onlooker update of work copy `m`.
    Onlooker { m: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// `x` values of every solution of `pop`, in solution order.
    /// Shared between the copies sent to each neighbour.
    NeighborValues { pop: PopLabel, values: Arc<[f64]> },
    /// Subtree fitness sums of every solution of `pop`.
    FitnessUp { pop: PopLabel, sums: Vec<f64> },
    GbestDown { source: SolutionRef },
    EliteDown { indices: Vec<usize> },
    EmployedUpdateRequest { u: usize },
    OnlookerUpdateRequest { u: usize, m: usize },
    /// Ask for `E^elite.x` and `P^u.x` of the receiver.
    ValueRequest { slot: ShareSlot, u: usize, elite: usize },
    ValueShare { slot: ShareSlot, elite_x: f64, pop_x: f64 },
    /// Overwrite `P^target` with `source` on every agent.
    SolutionReplaceDown { replacements: Vec<(SolutionRef, usize)> },
    ScoutReinitRequest { indices: Vec<usize> },
    SolutionCopyDown { u: usize },
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::NeighborValues { .. } => MessageKind::NeighborValues,
            Message::FitnessUp { .. } => MessageKind::FitnessUp,
            Message::GbestDown { .. } => MessageKind::GbestDown,
            Message::EliteDown { .. } => MessageKind::EliteDown,
            Message::EmployedUpdateRequest { .. } => MessageKind::EmployedUpdateRequest,
            Message::OnlookerUpdateRequest { .. } => MessageKind::OnlookerUpdateRequest,
            Message::ValueRequest { .. } => MessageKind::ValueRequest,
            Message::ValueShare { .. } => MessageKind::ValueShare,
            Message::SolutionReplaceDown { .. } => MessageKind::SolutionReplaceDown,
            Message::ScoutReinitRequest { .. } => MessageKind::ScoutReinitRequest,
            Message::SolutionCopyDown { .. } => MessageKind::SolutionCopyDown,
        }
    }

    /// Solution index carried by the message, for the message log.
    pub fn solution_index(&self) -> Option<usize> {
        match self {
            Message::GbestDown { source } => Some(source.index),
            Message::EmployedUpdateRequest { u }
            | Message::OnlookerUpdateRequest { u, .. }
            | Message::ValueRequest { u, .. }
            | Message::SolutionCopyDown { u } => Some(*u),
            Message::ValueShare { slot: ShareSlot::Employed { u }, .. } => Some(*u),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub from: AgentId,
    pub to: AgentId,
    pub round: u64,
    pub msg: Message,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("agent {agent} is not registered (network has {n} agents)")]
    UnknownAgent { agent: AgentId, n: usize },
    #[error("agent {agent} tried to send a {kind} message to itself")]
    SelfSend { agent: AgentId, kind: MessageKind },
    #[error("expected {expected} agents, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("round {round}, agent {agent}: {detail}")]
    Protocol { round: u64, agent: AgentId, detail: String },
}

impl RuntimeError {
    pub fn protocol(round: u64, agent: AgentId, detail: impl Into<String>) -> Self {
        RuntimeError::Protocol { round, agent, detail: detail.into() }
    }
}

/// Message counters, total and by kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub sent: u64,
    pub delivered: u64,
    /// Tree hops of sent messages, when a hop metric is installed.
    pub hops: u64,
    pub by_kind: [u64; MessageKind::ALL.len()],
}

impl Counters {
    pub fn of(&self, kind: MessageKind) -> u64 {
        self.by_kind[kind.index()]
    }

    /// Per-field difference `self - earlier`.
    pub fn since(&self, earlier: &Counters) -> Counters {
        let mut by_kind = [0; MessageKind::ALL.len()];
        for (k, slot) in by_kind.iter_mut().enumerate() {
            *slot = self.by_kind[k] - earlier.by_kind[k];
        }
        Counters {
            sent: self.sent - earlier.sent,
            delivered: self.delivered - earlier.delivered,
            hops: self.hops - earlier.hops,
            by_kind,
        }
    }
}

/// One line of the optional message log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub round: u64,
    pub kind: MessageKind,
    pub from: AgentId,
    pub to: AgentId,
    pub solution_index: Option<usize>,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},", self.round, self.kind, self.from, self.to)?;
        if let Some(u) = self.solution_index {
            write!(f, "{u}")?;
        }
        Ok(())
    }
}

/// Messages an agent emits during one step.
#[derive(Debug, Default)]
pub struct Outbox {
    items: Vec<(AgentId, Message)>,
}

impl Outbox {
    pub fn send(&mut self, to: AgentId, msg: Message) {
        self.items.push((to, msg));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// A participant stepped once per round by [`MailboxNetwork::run_round`].
pub trait Agent {
    fn id(&self) -> AgentId;

    /// Handles the messages delivered this round and queues new ones.
    /// Messages addressed to itself are loopback deliveries (see
    /// [`MailboxNetwork::loopback`]).
    fn step(&mut self, round: u64, inbox: Vec<Envelope>, out: &mut Outbox) -> Result<(), RuntimeError>;
}

type HopMetric = Box<dyn Fn(AgentId, AgentId) -> u64 + Send + Sync>;

pub struct MailboxNetwork {
    inboxes: Vec<VecDeque<Envelope>>,
    pending: Vec<Envelope>,
    round: u64,
    counters: Counters,
    hop_metric: Option<HopMetric>,
    log: Option<Vec<LogRecord>>,
}

impl fmt::Debug for MailboxNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MailboxNetwork")
            .field("agents", &self.inboxes.len())
            .field("round", &self.round)
            .field("pending", &self.pending.len())
            .field("counters", &self.counters)
            .finish()
    }
}

impl MailboxNetwork {
    pub fn new(n: usize) -> Self {
        Self {
            inboxes: vec![VecDeque::new(); n],
            pending: Vec::new(),
            round: 0,
            counters: Counters::default(),
            hop_metric: None,
            log: None,
        }
    }

    /// Counts routed hops for every sent message with `metric(from, to)`.
    pub fn with_hop_metric(mut self, metric: impl Fn(AgentId, AgentId) -> u64 + Send + Sync + 'static) -> Self {
        self.hop_metric = Some(Box::new(metric));
        self
    }

    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn len(&self) -> usize {
        self.inboxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inboxes.is_empty()
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn log(&self) -> Option<&[LogRecord]> {
        self.log.as_deref()
    }

    /// The message log as `round,kind,from,to,solution_index` lines.
    pub fn log_csv(&self) -> Option<String> {
        let log = self.log.as_ref()?;
        let mut out = String::from("round,kind,from,to,solution_index\n");
        for rec in log {
            writeln!(out, "{rec}").unwrap();
        }
        Some(out)
    }

    /// No message in flight and every inbox empty.
    pub fn is_quiescent(&self) -> bool {
        self.pending.is_empty() && self.inboxes.iter().all(VecDeque::is_empty)
    }

    fn check_id(&self, agent: AgentId) -> Result<(), RuntimeError> {
        if agent < self.inboxes.len() {
            Ok(())
        } else {
            Err(RuntimeError::UnknownAgent { agent, n: self.inboxes.len() })
        }
    }

    fn enqueue(&mut self, from: AgentId, to: AgentId, msg: Message) {
        let kind = msg.kind();
        self.counters.sent += 1;
        self.counters.by_kind[kind.index()] += 1;
        if let Some(metric) = &self.hop_metric {
            self.counters.hops += metric(from, to);
        }
        if let Some(log) = &mut self.log {
            log.push(LogRecord { round: self.round, kind, from, to, solution_index: msg.solution_index() });
        }
        self.pending.push(Envelope { from, to, round: self.round, msg });
    }

    /// Queues `msg` for delivery next round.
    pub fn send(&mut self, from: AgentId, to: AgentId, msg: Message) -> Result<(), RuntimeError> {
        self.check_id(from)?;
        self.check_id(to)?;
        if from == to {
            return Err(RuntimeError::SelfSend { agent: from, kind: msg.kind() });
        }
        self.enqueue(from, to, msg);
        Ok(())
    }

    /// Queues a message from an agent to itself. It is counted and logged
    /// like any other message and arrives next round.
    pub fn loopback(&mut self, agent: AgentId, msg: Message) -> Result<(), RuntimeError> {
        self.check_id(agent)?;
        self.enqueue(agent, agent, msg);
        Ok(())
    }

    fn deliver_pending(&mut self) {
        for env in self.pending.drain(..) {
            self.counters.delivered += 1;
            self.inboxes[env.to].push_back(env);
        }
    }

    /// Removes and returns everything queued for `agent`.
    pub fn take_inbox(&mut self, agent: AgentId) -> Vec<Envelope> {
        self.inboxes[agent].drain(..).collect()
    }

    /// Delivers last round's messages, steps every agent once in ascending
    /// id order, and advances the round counter.
    pub fn run_round<A: Agent>(&mut self, agents: &mut [A]) -> Result<(), RuntimeError> {
        if agents.len() != self.inboxes.len() {
            return Err(RuntimeError::AgentCount { expected: self.inboxes.len(), got: agents.len() });
        }
        self.deliver_pending();
        let round = self.round;
        for (id, agent) in agents.iter_mut().enumerate() {
            debug_assert_eq!(agent.id(), id);
            let inbox = self.take_inbox(id);
            let mut out = Outbox::default();
            agent.step(round, inbox, &mut out)?;
            for (to, msg) in out.items {
                if to == id {
                    self.loopback(id, msg)?;
                } else {
                    self.send(id, to, msg)?;
                }
            }
        }
        self.round += 1;
        Ok(())
    }
}
