//! Composition of per-node protocol phases.
//!
//! A [`Phase`] is a node-local state machine that runs from a start round
//! until it reports [`Step::Done`] at some round `E`; the next phase of a
//! composed protocol starts at `E + 1`. Every node derives phase boundaries
//! from values all nodes have learned, so boundaries agree network-wide.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{Action, NodeId, NodeProgram, ProtocolError, Reception, Round};

/// Rounds per transmitted bit in wave phases.
pub const SLOT: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step<T> {
    Running,
    Done(T),
}

pub trait Phase {
    type Output;

    fn act(&mut self, round: Round) -> Action;

    fn observe(&mut self, round: Round, rx: Reception)
        -> Result<Step<Self::Output>, ProtocolError>;
}

impl<P: Phase + ?Sized> Phase for Box<P> {
    type Output = P::Output;

    fn act(&mut self, round: Round) -> Action {
        (**self).act(round)
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<P::Output>, ProtocolError> {
        (**self).observe(round, rx)
    }
}

/// A single phase run as a whole node program.
pub struct Standalone<P: Phase> {
    phase: P,
    output: Option<P::Output>,
}

impl<P: Phase> Standalone<P> {
    pub fn new(phase: P) -> Self {
        Self {
            phase,
            output: None,
        }
    }
}

impl<P: Phase> NodeProgram for Standalone<P>
where
    P::Output: Clone,
{
    type Output = P::Output;

    fn act(&mut self, round: Round) -> Action {
        if self.output.is_some() {
            Action::Listen
        } else {
            self.phase.act(round)
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<(), ProtocolError> {
        if self.output.is_none() {
            if let Step::Done(out) = self.phase.observe(round, rx)? {
                self.output = Some(out);
            }
        }
        Ok(())
    }

    fn output(&self) -> Option<&P::Output> {
        self.output.as_ref()
    }
}

type Continuation<A, B> = Box<dyn FnOnce(&A, Round) -> Result<B, ProtocolError>>;

/// Runs `first`, then builds and runs a second phase from its output.
pub struct Chain<A: Phase, B: Phase> {
    first: A,
    first_output: Option<A::Output>,
    next: Option<Continuation<A::Output, B>>,
    second: Option<B>,
}

impl<A: Phase, B: Phase> Chain<A, B> {
    /// `next` receives the first phase's output and the round it finished.
    pub fn new(
        first: A,
        next: impl FnOnce(&A::Output, Round) -> Result<B, ProtocolError> + 'static,
    ) -> Self {
        Self {
            first,
            first_output: None,
            next: Some(Box::new(next)),
            second: None,
        }
    }
}

impl<A: Phase, B: Phase> Phase for Chain<A, B> {
    type Output = (A::Output, B::Output);

    fn act(&mut self, round: Round) -> Action {
        match &mut self.second {
            Some(b) => b.act(round),
            None => self.first.act(round),
        }
    }

    fn observe(
        &mut self,
        round: Round,
        rx: Reception,
    ) -> Result<Step<Self::Output>, ProtocolError> {
        if let Some(b) = &mut self.second {
            return Ok(match b.observe(round, rx)? {
                Step::Done(out) => Step::Done((self.first_output.take().expect("first done"), out)),
                Step::Running => Step::Running,
            });
        }
        if let Step::Done(out) = self.first.observe(round, rx)? {
            let next = self.next.take().expect("continuation used once");
            self.second = Some(next(&out, round)?);
            self.first_output = Some(out);
        }
        Ok(Step::Running)
    }
}

/// A phase boundary as observed by one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub name: String,
    pub start: Round,
    pub len: u64,
}

impl PhaseRecord {
    pub fn new(name: impl Into<String>, start: Round, end: Round) -> Self {
        Self {
            name: name.into(),
            start,
            len: end + 1 - start,
        }
    }

    pub fn end(&self) -> Round {
        self.start + self.len - 1
    }
}

/// Wraps a phase so its output carries the rounds it spanned.
#[derive(Debug, Clone)]
pub struct Recorded<P> {
    name: &'static str,
    start: Round,
    phase: P,
}

impl<P: Phase> Recorded<P> {
    pub fn new(name: &'static str, start: Round, phase: P) -> Self {
        Self { name, start, phase }
    }
}

impl<P: Phase> Phase for Recorded<P> {
    type Output = (P::Output, PhaseRecord);

    fn act(&mut self, round: Round) -> Action {
        self.phase.act(round)
    }

    fn observe(
        &mut self,
        round: Round,
        rx: Reception,
    ) -> Result<Step<Self::Output>, ProtocolError> {
        Ok(match self.phase.observe(round, rx)? {
            Step::Done(out) => Step::Done((out, PhaseRecord::new(self.name, self.start, round))),
            Step::Running => Step::Running,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("message must be non-empty")]
    EmptyMessage,
    #[error("message of node {node} has {len} bits, more than p = {p}")]
    MessageTooLong { node: NodeId, len: usize, p: usize },
    #[error("at least one source is required")]
    NoSources,
    #[error("every node needs a message; {0} has none")]
    MissingMessage(NodeId),
    #[error("label bound {l_hat} does not exceed max id {max_id}")]
    LabelBound { l_hat: u64, max_id: NodeId },
    #[error("{0}")]
    Invalid(String),
}

/// `⌈log2 x⌉` for `x >= 1`.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Number of id bits searched by election, DFS and prefix rounds. At least
/// one bit so a single-label range still has a well-formed search.
pub fn id_bits(l_hat: u64) -> u32 {
    ceil_log2(l_hat).max(1)
}

/// Smallest power of two exceeding `max_id`.
pub fn default_l_hat(max_id: NodeId) -> u64 {
    (max_id.0 + 1).next_power_of_two()
}

/// The `width`-bit big-endian form of an id.
pub fn id_bit(id: NodeId, width: u32, index: u32) -> bool {
    (id.0 >> (width - 1 - index)) & 1 == 1
}
