//! Token-based depth-first numbering and pipelined gossip.
//!
//! Token exchanges send one codeword bit per round. Every control word is
//! followed by one slot round in which the token's unvisited neighbors may
//! answer, so the next word from the token always starts two rounds after
//! the previous one ends.

use std::collections::{BTreeMap, VecDeque};

use crate::codec::{codeword_len, decode, encode, BitString, CodewordDecoder};
use crate::engine::{Action, Graph, NodeId, ProtocolError, Reception, Round};
use crate::phase::{id_bit, id_bits, Chain, ConfigError, Phase, Recorded, Standalone, Step};
use crate::waves::{Election, WaveRelay, WaveSource};

const CHILD_ACK: u64 = 0b000;
const CHILD_SEARCH: u64 = 0b001;
const ACK0: u64 = 0b010;
const ACK1: u64 = 0b011;
const HANDOFF: u64 = 0b100;
const RETURN: u64 = 0b101;
const DONE: u64 = 0b110;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ControlWord {
    ChildAck,
    ChildSearch,
    Ack(bool),
    Handoff {
        target: NodeId,
        count: u64,
    },
    /// Token goes back to the parent; `from` is the returning node.
    Return {
        from: NodeId,
        count: u64,
    },
    /// Traversal finished with `n` nodes numbered.
    Done {
        n: u64,
    },
}

impl ControlWord {
    fn opcode(&self) -> u64 {
        match self {
            ControlWord::ChildAck => CHILD_ACK,
            ControlWord::ChildSearch => CHILD_SEARCH,
            ControlWord::Ack(false) => ACK0,
            ControlWord::Ack(true) => ACK1,
            ControlWord::Handoff { .. } => HANDOFF,
            ControlWord::Return { .. } => RETURN,
            ControlWord::Done { .. } => DONE,
        }
    }

    fn numbers(&self) -> Vec<u64> {
        match *self {
            ControlWord::Handoff { target, count } => vec![target.0, count],
            ControlWord::Return { from, count } => vec![from.0, count],
            ControlWord::Done { n } => vec![n],
            _ => Vec::new(),
        }
    }

    /// Opcode followed by the codeword of each numeric field.
    pub fn payload(&self) -> BitString {
        let mut bits = BitString::from_uint_width(self.opcode(), 3);
        for x in self.numbers() {
            bits.extend_from(&encode(&BitString::from_uint(x)));
        }
        bits
    }

    /// The transmitted form.
    pub fn to_bits(&self) -> BitString {
        encode(&self.payload())
    }

    pub fn bit_len(&self) -> usize {
        codeword_len(self.payload().len())
    }

    pub fn from_payload(payload: &BitString) -> Option<Self> {
        if payload.len() < 3 {
            return None;
        }
        let opcode = payload.prefix(3).to_uint()?;
        let mut numbers = Vec::new();
        let mut decoder = CodewordDecoder::new();
        for i in 3..payload.len() {
            if let Some(m) = decoder.push(payload.get(i)?).ok()? {
                let x = m.to_uint()?;
                if BitString::from_uint(x) != m {
                    return None;
                }
                numbers.push(x);
                decoder = CodewordDecoder::new();
            }
        }
        if decoder.consumed() != 0 {
            return None;
        }
        let word = match (opcode, numbers.as_slice()) {
            (CHILD_ACK, []) => ControlWord::ChildAck,
            (CHILD_SEARCH, []) => ControlWord::ChildSearch,
            (ACK0, []) => ControlWord::Ack(false),
            (ACK1, []) => ControlWord::Ack(true),
            (HANDOFF, &[target, count]) => ControlWord::Handoff {
                target: NodeId(target),
                count,
            },
            (RETURN, &[from, count]) => ControlWord::Return {
                from: NodeId(from),
                count,
            },
            (DONE, &[n]) => ControlWord::Done { n },
            _ => return None,
        };
        Some(word)
    }

    pub fn from_bits(bits: &BitString) -> Option<Self> {
        Self::from_payload(&decode(bits).ok()?)
    }
}

/// Finds control words in a stream of heard bits with no known alignment.
///
/// Whenever the stream ends in `10`, every earlier `1` is tried as a word
/// start and the latest start that yields a complete, well-formed word wins.
#[derive(Debug, Clone)]
pub struct WordScanner {
    history: VecDeque<bool>,
    capacity: usize,
}

impl WordScanner {
    /// `capacity` is the longest word that can occur.
    pub fn new(capacity: usize) -> Self {
        Self {
            history: VecDeque::with_capacity(capacity + 1),
            capacity,
        }
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }

    pub fn push(&mut self, bit: bool) -> Option<ControlWord> {
        self.history.push_back(bit);
        if self.history.len() > self.capacity {
            self.history.pop_front();
        }
        let len = self.history.len();
        if bit || len < 2 || !self.history[len - 2] {
            return None;
        }
        let min = ControlWord::ChildAck.bit_len();
        if len < min {
            return None;
        }
        let mut start = len - min;
        loop {
            if self.history[start] && (len - start).is_multiple_of(2) {
                let bits: BitString = self.history.range(start..).copied().collect();
                if let Some(word) = ControlWord::from_bits(&bits) {
                    self.history.clear();
                    return Some(word);
                }
            }
            if start == 0 {
                return None;
            }
            start -= 1;
        }
    }
}

/// Longest control word used in a traversal over labels below `l_hat`.
pub fn max_word_len(l_hat: u64) -> usize {
    let big = l_hat.max(2);
    ControlWord::Handoff {
        target: NodeId(big),
        count: big,
    }
    .bit_len()
}

/// Per-node record of a traversal.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct DfsLog {
    /// Words decoded by this node, with the round each one ended.
    pub heard: Vec<(Round, ControlWord)>,
    /// Inclusive round intervals during which this node held the token.
    pub tenures: Vec<(Round, Round)>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct DfsOutcome {
    pub number: u64,
    /// Total number of nodes visited.
    pub n: u64,
    /// Round in which this node began sending the final count.
    pub flood_start: Round,
    pub log: DfsLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokenStage {
    Response,
    Bit(u32),
    AfterLastAck,
    Handoff,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Unvisited { candidate: bool, acks: u32 },
    Token { count: u64, stage: TokenStage },
    Waiting { child: NodeId },
    Visited,
    Flooding { n: u64, start: Round, until: Round },
}

/// One node of the depth-first traversal, ending once the final count has
/// been flooded past it.
#[derive(Debug, Clone)]
pub struct DfsNode {
    id: NodeId,
    root: bool,
    bits: u32,
    number: Option<u64>,
    role: Role,
    scanner: WordScanner,
    tx: Option<(Round, BitString)>,
    slot_beep: Option<Round>,
    target: u64,
    tenure_start: Round,
    log: DfsLog,
}

impl DfsNode {
    pub fn new(id: NodeId, root: bool, l_hat: u64, start: Round) -> Self {
        let mut node = Self {
            id,
            root,
            bits: id_bits(l_hat),
            number: None,
            role: Role::Unvisited {
                candidate: false,
                acks: 0,
            },
            scanner: WordScanner::new(max_word_len(l_hat)),
            tx: None,
            slot_beep: None,
            target: 0,
            tenure_start: start,
            log: DfsLog::default(),
        };
        if root {
            node.take_token(1, start);
        }
        node
    }

    fn take_token(&mut self, count: u64, start: Round) {
        if self.number.is_none() {
            self.number = Some(count);
        }
        self.tenure_start = start;
        self.role = Role::Token {
            count,
            stage: TokenStage::Response,
        };
        self.send(ControlWord::ChildAck, start);
    }

    fn send(&mut self, word: ControlWord, start: Round) {
        self.tx = Some((start, word.to_bits()));
    }

    /// Round after the current transmission.
    fn slot_round(&self) -> Option<Round> {
        self.tx.as_ref().map(|(s, bits)| s + bits.len() as u64)
    }

    fn my_bit(&self, index: u32) -> bool {
        id_bit(self.id, self.bits, index)
    }

    fn token_slot(&mut self, round: Round, heard: bool) {
        let Role::Token { count, stage } = self.role else {
            return;
        };
        let next = round + 1;
        let stage = match stage {
            TokenStage::Response if heard => {
                self.target = 0;
                self.send(ControlWord::ChildSearch, next);
                TokenStage::Bit(0)
            }
            TokenStage::Response => {
                let word = if self.root {
                    ControlWord::Done { n: count }
                } else {
                    ControlWord::Return {
                        from: self.id,
                        count,
                    }
                };
                self.send(word, next);
                TokenStage::Exit
            }
            TokenStage::Bit(i) => {
                self.target = (self.target << 1) | heard as u64;
                self.send(ControlWord::Ack(heard), next);
                if i + 1 < self.bits {
                    TokenStage::Bit(i + 1)
                } else {
                    TokenStage::AfterLastAck
                }
            }
            TokenStage::AfterLastAck => {
                let word = ControlWord::Handoff {
                    target: NodeId(self.target),
                    count: count + 1,
                };
                self.send(word, next);
                TokenStage::Handoff
            }
            TokenStage::Handoff => {
                self.log.tenures.push((self.tenure_start, round - 1));
                self.role = Role::Waiting {
                    child: NodeId(self.target),
                };
                self.tx = None;
                self.scanner.clear();
                return;
            }
            TokenStage::Exit => {
                self.log.tenures.push((self.tenure_start, round - 1));
                let (start, bits) = self.tx.take().expect("exit word sent");
                self.role = if self.root {
                    Role::Flooding {
                        n: count,
                        start,
                        until: start + 2 * bits.len() as u64,
                    }
                } else {
                    self.scanner.clear();
                    Role::Visited
                };
                return;
            }
        };
        self.role = Role::Token { count, stage };
    }

    fn on_word(&mut self, end: Round, word: ControlWord) -> Result<(), ProtocolError> {
        if let ControlWord::Done { n } = word {
            if self.number.is_none() {
                return Err(ProtocolError::new(
                    "traversal finished before this node was numbered",
                ));
            }
            let start = end + 2;
            self.send(word, start);
            self.role = Role::Flooding {
                n,
                start,
                until: start + 2 * word.bit_len() as u64,
            };
            return Ok(());
        }
        match (self.role, word) {
            (Role::Unvisited { .. }, ControlWord::ChildAck) => self.slot_beep = Some(end + 1),
            (Role::Unvisited { .. }, ControlWord::ChildSearch) => {
                self.role = Role::Unvisited {
                    candidate: true,
                    acks: 0,
                };
                if self.my_bit(0) {
                    self.slot_beep = Some(end + 1);
                }
            }
            (
                Role::Unvisited {
                    candidate: true,
                    acks,
                },
                ControlWord::Ack(b),
            ) => {
                let acks = acks + 1;
                let candidate = !(b && !self.my_bit(acks - 1));
                self.role = Role::Unvisited { candidate, acks };
                if candidate && acks < self.bits && self.my_bit(acks) {
                    self.slot_beep = Some(end + 1);
                }
            }
            (Role::Unvisited { .. }, ControlWord::Handoff { target, count }) => {
                if target == self.id {
                    self.take_token(count, end + 2);
                } else {
                    self.role = Role::Unvisited {
                        candidate: false,
                        acks: 0,
                    };
                }
            }
            (Role::Waiting { child }, ControlWord::Return { from, count }) if from == child => {
                self.take_token(count, end + 2);
            }
            _ => {}
        }
        Ok(())
    }

    pub fn number(&self) -> Option<u64> {
        self.number
    }
}

impl Phase for DfsNode {
    type Output = DfsOutcome;

    fn act(&mut self, round: Round) -> Action {
        if let Some((start, bits)) = &self.tx {
            if round >= *start && round < start + bits.len() as u64 {
                return if bits.get((round - start) as usize) == Some(true) {
                    Action::Beep
                } else {
                    Action::Listen
                };
            }
        }
        if self.slot_beep == Some(round) {
            Action::Beep
        } else {
            Action::Listen
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<DfsOutcome>, ProtocolError> {
        match self.role {
            Role::Token { .. } => {
                if self.slot_round() == Some(round) {
                    self.token_slot(round, rx.heard());
                }
            }
            Role::Flooding { n, start, until } => {
                if round >= until {
                    return Ok(Step::Done(DfsOutcome {
                        number: self.number.expect("numbered"),
                        n,
                        flood_start: start,
                        log: std::mem::take(&mut self.log),
                    }));
                }
            }
            _ => {
                if let Some(word) = self.scanner.push(rx.heard()) {
                    self.log.heard.push((round, word));
                    self.on_word(round, word)?;
                }
            }
        }
        Ok(Step::Running)
    }
}

#[derive(Debug, Clone)]
enum GossipStage {
    Relay(WaveRelay),
    Source(WaveSource),
}

/// What every node learns from gossip.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct GossipOutput {
    pub number: u64,
    /// `(number, message)` in traversal order.
    pub messages: Vec<(u64, BitString)>,
}

/// Broadcasts every node's message in traversal order. Node `k + 1` starts
/// its wave as soon as it has decoded message `k`.
#[derive(Debug, Clone)]
pub struct GossipPhase {
    number: u64,
    n: u64,
    message: BitString,
    received: Vec<(u64, BitString)>,
    stage: GossipStage,
}

impl GossipPhase {
    /// `root_start` is the round the first wave starts; only used by the
    /// node numbered 1.
    pub fn new(number: u64, n: u64, message: BitString, root_start: Round) -> Self {
        let stage = if number == 1 {
            GossipStage::Source(WaveSource::new(message.clone(), root_start, 0))
        } else {
            GossipStage::Relay(WaveRelay::on_decode())
        };
        Self {
            number,
            n,
            message,
            received: Vec::new(),
            stage,
        }
    }

    /// Round at which the root starts the first wave, given the round its
    /// count flood began. Every node at distance up to `d_hat` has finished
    /// the flood by then.
    pub fn root_start(flood_start: Round, n: u64, d_hat: u64) -> Round {
        let w = ControlWord::Done { n }.bit_len() as u64;
        flood_start + (d_hat + 2) * (w + 1)
    }

    fn next_stage(&mut self, round: Round) {
        let next = self.received.len() as u64 + 1;
        self.stage = if next == self.number {
            GossipStage::Source(WaveSource::new(self.message.clone(), round + 1, 0))
        } else {
            GossipStage::Relay(WaveRelay::on_decode())
        };
    }
}

impl Phase for GossipPhase {
    type Output = GossipOutput;

    fn act(&mut self, round: Round) -> Action {
        match &mut self.stage {
            GossipStage::Relay(r) => r.act(round),
            GossipStage::Source(s) => s.act(round),
        }
    }

    fn observe(
        &mut self,
        round: Round,
        rx: Reception,
    ) -> Result<Step<GossipOutput>, ProtocolError> {
        let step = match &mut self.stage {
            GossipStage::Relay(r) => r.observe(round, rx)?,
            GossipStage::Source(s) => s.observe(round, rx)?,
        };
        if let Step::Done(m) = step {
            let index = self.received.len() as u64 + 1;
            self.received.push((index, m));
            if index == self.n {
                return Ok(Step::Done(GossipOutput {
                    number: self.number,
                    messages: std::mem::take(&mut self.received),
                }));
            }
            self.next_stage(round);
        }
        Ok(Step::Running)
    }
}

pub type DfsProgram = Standalone<Recorded<DfsNode>>;

/// Depth-first numbering from `leader`, ending with a flood of the count.
pub fn dfs(
    graph: &Graph,
    leader: NodeId,
    l_hat: u64,
) -> Result<BTreeMap<NodeId, DfsProgram>, ConfigError> {
    if !graph.contains(leader) {
        return Err(ConfigError::UnknownNode(leader));
    }
    check_label_bound(graph, l_hat)?;
    Ok(graph
        .ids()
        .iter()
        .map(|&id| {
            let node = DfsNode::new(id, id == leader, l_hat, 1);
            (id, Standalone::new(Recorded::new("dfs", 1, node)))
        })
        .collect())
}

fn check_label_bound(graph: &Graph, l_hat: u64) -> Result<(), ConfigError> {
    if l_hat <= graph.max_id().0 {
        return Err(ConfigError::LabelBound {
            l_hat,
            max_id: graph.max_id(),
        });
    }
    Ok(())
}

type Traversal = Chain<Recorded<Election>, Recorded<DfsNode>>;
pub type GossipProgram = Standalone<Chain<Traversal, Recorded<GossipPhase>>>;

/// Election, traversal from the leader, then pipelined broadcasts.
pub fn gossip(
    graph: &Graph,
    msgs: &BTreeMap<NodeId, BitString>,
    d_hat: u64,
    l_hat: u64,
) -> Result<BTreeMap<NodeId, GossipProgram>, ConfigError> {
    check_label_bound(graph, l_hat)?;
    if let Some(&id) = graph.ids().iter().find(|id| !msgs.contains_key(id)) {
        return Err(ConfigError::MissingMessage(id));
    }
    if let Some((&id, _)) = msgs.iter().find(|(_, m)| m.is_empty()) {
        return Err(ConfigError::Invalid(format!("message of {id} is empty")));
    }
    let mut programs = BTreeMap::new();
    for &id in graph.ids() {
        let message = msgs[&id].clone();
        let elect = Recorded::new("elect", 1, Election::new(id, d_hat, l_hat, 1));
        let traversal = Chain::new(elect, move |(leader, _): &(NodeId, _), end| {
            let node = DfsNode::new(id, *leader == id, l_hat, end + 1);
            Ok(Recorded::new("dfs", end + 1, node))
        });
        let chain = Chain::new(
            traversal,
            move |(_, (dfs, _)): &(_, (DfsOutcome, _)), end| {
                let root_start = GossipPhase::root_start(dfs.flood_start, dfs.n, d_hat);
                let phase = GossipPhase::new(dfs.number, dfs.n, message, root_start);
                Ok(Recorded::new("gossip", end + 1, phase))
            },
        );
        programs.insert(id, Standalone::new(chain));
    }
    Ok(programs)
}
