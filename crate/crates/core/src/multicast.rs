//! Multi-broadcast: every node learns the messages of an unknown set of
//! sources, either with the source ids attached or as a set of distinct
//! messages.
//!
//! Both variants share a set-up (election, diameter estimate, message
//! length) and then run rounds of concurrent binary searches: sources
//! report the next bit of their id (or message) prefix in an indicator
//! string, the leader collects the OR and broadcasts it back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codec::BitString;
use crate::engine::{Action, Graph, NodeId, ProtocolError, Reception, Round};
use crate::phase::{id_bits, ConfigError, Phase, PhaseRecord, Standalone, Step};
use crate::waves::{
    wave_len, CollectMessages, Election, EstimateDiameter, MessageLength, Tail, WaveNode,
    WaveRelay, WaveSource,
};

/// Sorted, distinct prefixes of a common length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrefixSet(Vec<BitString>);

impl PrefixSet {
    /// The set holding only the empty prefix.
    pub fn root() -> Self {
        Self(vec![BitString::new()])
    }

    pub fn from_strings(strings: impl IntoIterator<Item = BitString>) -> Self {
        let set: BTreeSet<_> = strings.into_iter().collect();
        Self(set.into_iter().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefixes(&self) -> &[BitString] {
        &self.0
    }

    /// Length of every prefix in the set.
    pub fn depth(&self) -> usize {
        self.0.first().map_or(0, BitString::len)
    }

    pub fn position(&self, prefix: &BitString) -> Option<usize> {
        self.0.binary_search(prefix).ok()
    }

    /// The indicator string for a value: one `1` at `2j + b`, where the
    /// value's prefix of the current depth is the `j`-th entry and `b` is its
    /// next bit.
    pub fn indicator(&self, value: &BitString) -> Result<BitString, ProtocolError> {
        let depth = self.depth();
        let j = self
            .position(&value.prefix(depth))
            .ok_or_else(|| ProtocolError::new(format!("prefix of {value} is not known")))?;
        let b = value
            .get(depth)
            .ok_or_else(|| ProtocolError::new(format!("{value} has no bit {depth}")))?;
        let mut z = BitString::zeros(2 * self.len());
        z.set(2 * j + b as usize, true);
        Ok(z)
    }

    /// The prefixes one bit longer that an indicator OR marks as present.
    pub fn extend(&self, z: &BitString) -> Result<Self, ProtocolError> {
        if z.len() != 2 * self.len() {
            return Err(ProtocolError::new(format!(
                "indicator has {} bits for {} prefixes",
                z.len(),
                self.len()
            )));
        }
        let mut next = Vec::new();
        for (j, prefix) in self.0.iter().enumerate() {
            for b in [false, true] {
                if z.get(2 * j + b as usize) == Some(true) {
                    let mut p = prefix.clone();
                    p.push(b);
                    next.push(p);
                }
            }
        }
        if next.is_empty() {
            return Err(ProtocolError::new("indicator names no prefix"));
        }
        Ok(Self(next))
    }
}

impl fmt::Display for PrefixSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| format!("\"{p}\"")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Fixed-width form of a message: `m · 1 · 0^(p - |m|)`, which keeps
/// messages of different lengths distinct.
pub fn pad_message(m: &BitString, p: usize) -> BitString {
    let mut out = m.clone();
    out.push(true);
    out.padded(p + 1)
}

/// Inverse of [`pad_message`].
pub fn unpad_message(block: &BitString) -> Option<BitString> {
    let last = (0..block.len())
        .rev()
        .find(|&i| block.get(i) == Some(true))?;
    Some(block.prefix(last))
}

/// Messages of all sources in id order, one padded block each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageTable {
    pub width: usize,
    pub bits: BitString,
}

impl MessageTable {
    /// The table a single source contributes: its own block filled in.
    pub fn for_source(index: usize, sources: usize, m: &BitString, p: usize) -> Self {
        let width = p + 1;
        let mut bits = BitString::zeros(width * sources);
        for (i, b) in pad_message(m, p).bits().iter().enumerate() {
            bits.set(index * width + i, *b);
        }
        Self { width, bits }
    }

    pub fn blocks(&self) -> impl Iterator<Item = BitString> + '_ {
        (0..self.bits.len() / self.width).map(move |j| {
            (0..self.width)
                .map(|i| self.bits.get(j * self.width + i) == Some(true))
                .collect()
        })
    }
}

/// Everything a node has learned that determines phase boundaries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ScheduleInputs {
    pub d_hat: u64,
    pub l_hat: u64,
    pub d_tilde: Option<u64>,
    pub p: Option<u64>,
    /// Number of known id prefixes at the start of each prefix round run.
    pub prefix_counts: Vec<usize>,
    /// Number of sources, once the message table is collected.
    pub table: Option<usize>,
    /// Number of known message prefixes at the start of each message round.
    pub message_counts: Vec<usize>,
}

fn collect_len(d_tilde: u64, bits: usize) -> u64 {
    CollectMessages::rounds(d_tilde, bits)
}

fn broadcast_len(d_tilde: u64, bits: usize) -> u64 {
    wave_len(bits) + d_tilde
}

/// Phase boundaries implied by the known values. Phases abut, starting
/// at round 1.
pub fn compute_schedule(known: &ScheduleInputs) -> Vec<PhaseRecord> {
    let mut phases = Vec::new();
    let mut start = 1;
    let mut push = |name: &str, len: u64| {
        phases.push(PhaseRecord::new(name, start, start + len - 1));
        start += len;
    };
    push("elect", Election::rounds(known.d_hat, known.l_hat));
    let Some(d) = known.d_tilde else {
        return phases;
    };
    push("estimate", EstimateDiameter::rounds(d));
    let Some(p) = known.p else {
        return phases;
    };
    push("length", MessageLength::rounds(d, p));
    for &k in &known.prefix_counts {
        push("prefix-collect", collect_len(d, 2 * k));
        push("prefix-wave", broadcast_len(d, 2 * k));
    }
    if let Some(k) = known.table {
        let bits = k * (p as usize + 1);
        push("table-collect", collect_len(d, bits));
        push("table-wave", broadcast_len(d, bits));
    }
    for &k in &known.message_counts {
        push("message-collect", collect_len(d, 2 * k));
        push("message-wave", broadcast_len(d, 2 * k));
    }
    phases
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Task {
    Broadcast,
    MultiBroadcastProv,
    MultiBroadcastNoProv,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("multi-broadcast floors need k > 1, got {0}")]
    TooFewSources(u64),
    #[error("the floor without provenance needs M > 1")]
    SingleMessage,
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

/// Round floors below which no algorithm can solve the task.
pub fn lower_bound(task: Task, d: u64, l: u64, m: u64, k: u64) -> Result<u64, DomainError> {
    if m == 0 {
        return Err(DomainError::NonPositive("M"));
    }
    if l == 0 {
        return Err(DomainError::NonPositive("L"));
    }
    let d = d as f64;
    let (l, m, kf) = (l as f64, m as f64, k as f64);
    let floor = match task {
        Task::Broadcast => (d / 2.0).ceil().max(m.log2().ceil()),
        Task::MultiBroadcastProv => {
            if k <= 1 {
                return Err(DomainError::TooFewSources(k));
            }
            ((d + kf * (l * m / kf).log2()) / 8.0).ceil()
        }
        Task::MultiBroadcastNoProv => {
            if k <= 1 {
                return Err(DomainError::TooFewSources(k));
            }
            if m <= 1.0 {
                return Err(DomainError::SingleMessage);
            }
            if m > kf {
                ((d + kf * (m / kf).log2()) / 8.0).ceil()
            } else {
                ((d + m) / 4.0).ceil()
            }
        }
    };
    Ok(floor.max(0.0) as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    WithProvenance,
    WithoutProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Prefix,
    Table,
    Message,
}

impl Target {
    fn names(self) -> (&'static str, &'static str) {
        match self {
            Target::Prefix => ("prefix-collect", "prefix-wave"),
            Target::Table => ("table-collect", "table-wave"),
            Target::Message => ("message-collect", "message-wave"),
        }
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Elect(Election),
    Estimate(EstimateDiameter),
    Length(MessageLength),
    Collect(CollectMessages, Target, usize),
    Wave(WaveNode, Target),
    Finished,
}

/// What a node outputs after multi-broadcast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiOutput {
    pub leader: NodeId,
    pub d_tilde: u64,
    pub p: u64,
    /// Set when the distinct-message search stopped because the number of
    /// id prefixes exceeded the diameter estimate.
    pub aborted: bool,
    /// Source id to message; absent when the id search was abandoned.
    pub pairs: Option<BTreeMap<NodeId, BitString>>,
    pub messages: BTreeSet<BitString>,
    /// Known id prefixes after each prefix round.
    pub prefix_history: Vec<PrefixSet>,
    /// Known message prefixes after each message round.
    pub message_history: Vec<PrefixSet>,
    /// Phase boundaries as this node ran them.
    pub phases: Vec<PhaseRecord>,
    pub inputs: ScheduleInputs,
}

/// One node's multi-broadcast run.
#[derive(Debug, Clone)]
pub struct MultiBroadcast {
    id: NodeId,
    message: Option<BitString>,
    variant: Variant,
    width: usize,
    stage: Stage,
    stage_start: Round,
    leader: Option<NodeId>,
    dist: u64,
    prefixes: PrefixSet,
    messages: PrefixSet,
    out: MultiOutput,
}

impl MultiBroadcast {
    pub fn new(
        id: NodeId,
        message: Option<BitString>,
        variant: Variant,
        d_hat: u64,
        l_hat: u64,
    ) -> Self {
        Self {
            id,
            message,
            variant,
            width: id_bits(l_hat) as usize,
            stage: Stage::Elect(Election::new(id, d_hat, l_hat, 1)),
            stage_start: 1,
            leader: None,
            dist: 0,
            prefixes: PrefixSet::root(),
            messages: PrefixSet::root(),
            out: MultiOutput {
                leader: id,
                d_tilde: 0,
                p: 0,
                aborted: false,
                pairs: None,
                messages: BTreeSet::new(),
                prefix_history: Vec::new(),
                message_history: Vec::new(),
                phases: Vec::new(),
                inputs: ScheduleInputs {
                    d_hat,
                    l_hat,
                    ..ScheduleInputs::default()
                },
            },
        }
    }

    fn is_leader(&self) -> bool {
        self.leader == Some(self.id)
    }

    fn own_id(&self) -> BitString {
        BitString::from_uint_width(self.id.0, self.width)
    }

    fn padded_message(&self) -> Option<BitString> {
        let p = self.out.p as usize;
        self.message.as_ref().map(|m| pad_message(m, p))
    }

    fn record(&mut self, name: &str, end: Round) {
        self.out
            .phases
            .push(PhaseRecord::new(name, self.stage_start, end));
        self.stage_start = end + 1;
    }

    fn collect(
        &mut self,
        target: Target,
        own: Option<BitString>,
        bits: usize,
    ) -> Result<(), ProtocolError> {
        let phase = CollectMessages::new(
            self.is_leader(),
            own,
            self.out.d_tilde,
            bits,
            self.stage_start,
        )?;
        self.stage = Stage::Collect(phase, target, bits);
        Ok(())
    }

    fn start_prefix_round(&mut self) -> Result<(), ProtocolError> {
        self.out.inputs.prefix_counts.push(self.prefixes.len());
        let own = match &self.message {
            Some(_) => Some(self.prefixes.indicator(&self.own_id())?),
            None => None,
        };
        self.collect(Target::Prefix, own, 2 * self.prefixes.len())
    }

    fn start_table(&mut self) -> Result<(), ProtocolError> {
        let k = self.prefixes.len();
        self.out.inputs.table = Some(k);
        let p = self.out.p as usize;
        let own = match &self.message {
            Some(m) => {
                let index = self.prefixes.position(&self.own_id()).ok_or_else(|| {
                    ProtocolError::new("own id missing from the learned source set")
                })?;
                Some(MessageTable::for_source(index, k, m, p).bits)
            }
            None => None,
        };
        self.collect(Target::Table, own, k * (p + 1))
    }

    fn start_message_round(&mut self) -> Result<(), ProtocolError> {
        self.out.inputs.message_counts.push(self.messages.len());
        let own = match self.padded_message() {
            Some(m) => Some(self.messages.indicator(&m)?),
            None => None,
        };
        self.collect(Target::Message, own, 2 * self.messages.len())
    }

    fn start_wave(&mut self, target: Target, collected: Option<BitString>, bits: usize) {
        let d = self.out.d_tilde;
        let node = match collected {
            Some(z) => WaveNode::Source(WaveSource::new(z, self.stage_start, d)),
            None => WaveNode::Relay(
                WaveRelay::scheduled(Some(self.stage_start), Some(self.dist), Tail::Fixed(d))
                    .expecting(bits),
            ),
        };
        self.stage = Stage::Wave(node, target);
    }

    fn finish(&mut self) -> Step<MultiOutput> {
        self.stage = Stage::Finished;
        Step::Done(self.out.clone())
    }

    fn after_wave(
        &mut self,
        target: Target,
        z: BitString,
    ) -> Result<Step<MultiOutput>, ProtocolError> {
        match target {
            Target::Prefix => {
                self.prefixes = self.prefixes.extend(&z)?;
                self.out.prefix_history.push(self.prefixes.clone());
                let depth = self.prefixes.depth();
                if self.message.is_some()
                    && self
                        .prefixes
                        .position(&self.own_id().prefix(depth))
                        .is_none()
                {
                    return Err(ProtocolError::new(
                        "own id prefix missing after prefix round",
                    ));
                }
                if self.variant == Variant::WithoutProvenance
                    && self.prefixes.len() as u64 > self.out.d_tilde
                {
                    self.out.aborted = true;
                    self.start_message_round()?;
                } else if depth < self.width {
                    self.start_prefix_round()?;
                } else {
                    self.start_table()?;
                }
            }
            Target::Table => {
                let table = MessageTable {
                    width: self.out.p as usize + 1,
                    bits: z,
                };
                let mut pairs = BTreeMap::new();
                for (id, block) in self.prefixes.prefixes().iter().zip(table.blocks()) {
                    let id = NodeId(id.to_uint().unwrap_or(0));
                    let m = unpad_message(&block)
                        .ok_or_else(|| ProtocolError::new(format!("empty block for {id}")))?;
                    pairs.insert(id, m);
                }
                self.out.messages = pairs.values().cloned().collect();
                self.out.pairs = Some(pairs);
                return Ok(self.finish());
            }
            Target::Message => {
                self.messages = self.messages.extend(&z)?;
                self.out.message_history.push(self.messages.clone());
                if let Some(m) = self.padded_message() {
                    if self
                        .messages
                        .position(&m.prefix(self.messages.depth()))
                        .is_none()
                    {
                        return Err(ProtocolError::new("own message prefix missing"));
                    }
                }
                if self.messages.depth() < self.out.p as usize + 1 {
                    self.start_message_round()?;
                } else {
                    let set = self
                        .messages
                        .prefixes()
                        .iter()
                        .map(|b| {
                            unpad_message(b)
                                .ok_or_else(|| ProtocolError::new("empty message block"))
                        })
                        .collect::<Result<_, _>>()?;
                    self.out.messages = set;
                    return Ok(self.finish());
                }
            }
        }
        Ok(Step::Running)
    }
}

impl Phase for MultiBroadcast {
    type Output = MultiOutput;

    fn act(&mut self, round: Round) -> Action {
        match &mut self.stage {
            Stage::Elect(p) => p.act(round),
            Stage::Estimate(p) => p.act(round),
            Stage::Length(p) => p.act(round),
            Stage::Collect(p, ..) => p.act(round),
            Stage::Wave(p, _) => p.act(round),
            Stage::Finished => Action::Listen,
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<MultiOutput>, ProtocolError> {
        match &mut self.stage {
            Stage::Elect(p) => {
                if let Step::Done(leader) = p.observe(round, rx)? {
                    self.leader = Some(leader);
                    self.out.leader = leader;
                    self.record("elect", round);
                    self.stage =
                        Stage::Estimate(EstimateDiameter::new(self.is_leader(), round + 1));
                }
            }
            Stage::Estimate(p) => {
                if let Step::Done(est) = p.observe(round, rx)? {
                    self.out.d_tilde = est.d_tilde;
                    self.out.inputs.d_tilde = Some(est.d_tilde);
                    self.record("estimate", round);
                    let own = self.message.as_ref().map(BitString::len);
                    self.stage = Stage::Length(MessageLength::new(
                        self.is_leader(),
                        own,
                        est.d_tilde,
                        round + 1,
                    ));
                }
            }
            Stage::Length(p) => {
                if let Step::Done(learned) = p.observe(round, rx)? {
                    self.out.p = learned.p;
                    self.out.inputs.p = Some(learned.p);
                    self.dist = learned.dist;
                    self.record("length", round);
                    self.start_prefix_round()?;
                }
            }
            Stage::Collect(p, target, bits) => {
                let (target, bits) = (*target, *bits);
                if let Step::Done(collected) = p.observe(round, rx)? {
                    self.record(target.names().0, round);
                    self.start_wave(target, collected.bits, bits);
                }
            }
            Stage::Wave(p, target) => {
                let target = *target;
                if let Step::Done(z) = p.observe(round, rx)? {
                    self.record(target.names().1, round);
                    return self.after_wave(target, z);
                }
            }
            Stage::Finished => {}
        }
        Ok(Step::Running)
    }
}

pub type MultiProgram = Standalone<MultiBroadcast>;

/// Multi-broadcast programs for every node of `graph`; nodes in `msgs` are
/// the sources.
pub fn multi_broadcast(
    graph: &Graph,
    msgs: &BTreeMap<NodeId, BitString>,
    variant: Variant,
    d_hat: u64,
    l_hat: u64,
) -> Result<BTreeMap<NodeId, MultiProgram>, ConfigError> {
    if msgs.is_empty() {
        return Err(ConfigError::NoSources);
    }
    if let Some(s) = msgs.keys().find(|s| !graph.contains(**s)) {
        return Err(ConfigError::UnknownNode(*s));
    }
    if l_hat <= graph.max_id().0 {
        return Err(ConfigError::LabelBound {
            l_hat,
            max_id: graph.max_id(),
        });
    }
    Ok(graph
        .ids()
        .iter()
        .map(|&id| {
            let phase = MultiBroadcast::new(id, msgs.get(&id).cloned(), variant, d_hat, l_hat);
            (id, Standalone::new(phase))
        })
        .collect())
}

/// Multi-broadcast where every node learns each source's id and message.
pub fn multi_broadcast_prov(
    graph: &Graph,
    msgs: &BTreeMap<NodeId, BitString>,
    d_hat: u64,
    l_hat: u64,
) -> Result<BTreeMap<NodeId, MultiProgram>, ConfigError> {
    multi_broadcast(graph, msgs, Variant::WithProvenance, d_hat, l_hat)
}

/// Multi-broadcast where every node learns the set of distinct messages.
pub fn multi_broadcast_noprov(
    graph: &Graph,
    msgs: &BTreeMap<NodeId, BitString>,
    d_hat: u64,
    l_hat: u64,
) -> Result<BTreeMap<NodeId, MultiProgram>, ConfigError> {
    multi_broadcast(graph, msgs, Variant::WithoutProvenance, d_hat, l_hat)
}
