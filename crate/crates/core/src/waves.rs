//! Wave primitives: broadcast of a codeword from one node, binary-search
//! leader election, diameter estimation, message collection at the leader
//! and message-length discovery.
//!
//! A wave sends one codeword bit every [`SLOT`] rounds. A node at distance
//! `d` from the source beeps bit `i` at `start - 1 + 3i + d`.

use std::collections::BTreeMap;

use crate::codec::{encode, BitString, CodewordDecoder};
use crate::engine::{
    simulate, Action, Graph, NodeId, ProtocolError, Reception, Round, RunReport, SimError, Trace,
};
use crate::phase::{
    id_bit, id_bits, Chain, ConfigError, Phase, PhaseRecord, Recorded, Standalone, Step, SLOT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WaveConfig {
    pub start_round: Round,
}

impl WaveConfig {
    pub const SLOT_PERIOD: u64 = SLOT;

    pub fn starting_at(start_round: Round) -> Self {
        Self { start_round }
    }
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self { start_round: 1 }
    }
}

/// Rounds a wave of an `len`-bit payload occupies at the source.
pub fn wave_len(payload_len: usize) -> u64 {
    SLOT * crate::codec::codeword_len(payload_len) as u64
}

/// Beeps the codeword of a message, then idles for `tail` rounds.
#[derive(Debug, Clone)]
pub struct WaveSource {
    message: BitString,
    code: BitString,
    start: Round,
    end: Round,
}

impl WaveSource {
    pub fn new(message: BitString, start: Round, tail: u64) -> Self {
        let code = encode(&message);
        let end = start - 1 + SLOT * code.len() as u64 + tail;
        Self {
            message,
            code,
            start,
            end,
        }
    }

    pub fn end(&self) -> Round {
        self.end
    }
}

impl Phase for WaveSource {
    type Output = BitString;

    fn act(&mut self, round: Round) -> Action {
        if round < self.start {
            return Action::Listen;
        }
        let rel = round + 1 - self.start;
        if rel.is_multiple_of(SLOT) {
            let i = (rel / SLOT) as usize;
            if i >= 1 && self.code.get(i - 1) == Some(true) {
                return Action::Beep;
            }
        }
        Action::Listen
    }

    fn observe(&mut self, round: Round, _rx: Reception) -> Result<Step<BitString>, ProtocolError> {
        Ok(if round >= self.end {
            Step::Done(self.message.clone())
        } else {
            Step::Running
        })
    }
}

/// How long a relay keeps running after the codeword completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Fixed(u64),
    /// The decoded payload is a number giving the tail length.
    FromPayload,
}

/// When a relay ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayEnd {
    /// The round after the last codeword bit arrives.
    OnDecode,
    /// Round `start - 1 + 3|C| + tail`, where an unknown `start` is derived
    /// from the first beep and the node's distance to the source.
    Scheduled {
        start: Option<Round>,
        dist: Option<u64>,
        tail: Tail,
    },
}

/// Forwards a wave and decodes the codeword it carries.
#[derive(Debug, Clone)]
pub struct WaveRelay {
    end: RelayEnd,
    decoder: CodewordDecoder,
    first: Option<Round>,
    last_beep: Option<Round>,
    pending: Option<Round>,
    hit: Option<Round>,
    decoded: Option<BitString>,
    finish: Option<Round>,
    expected_len: Option<usize>,
}

impl WaveRelay {
    pub fn new(end: RelayEnd) -> Self {
        Self {
            end,
            decoder: CodewordDecoder::new(),
            first: None,
            last_beep: None,
            pending: None,
            hit: None,
            decoded: None,
            finish: None,
            expected_len: None,
        }
    }

    pub fn on_decode() -> Self {
        Self::new(RelayEnd::OnDecode)
    }

    pub fn scheduled(start: Option<Round>, dist: Option<u64>, tail: Tail) -> Self {
        Self::new(RelayEnd::Scheduled { start, dist, tail })
    }

    /// Rejects payloads of any other length.
    pub fn expecting(mut self, len: usize) -> Self {
        self.expected_len = Some(len);
        self
    }

    /// Round of the first beep heard, if any.
    pub fn first_heard(&self) -> Option<Round> {
        self.first
    }

    fn on_beep(&mut self, round: Round) -> Result<(), ProtocolError> {
        if self.decoded.is_some() {
            return Err(ProtocolError::new(format!(
                "beep at round {round} after the codeword ended"
            )));
        }
        let first = match self.first {
            Some(f) => f,
            None => {
                if let RelayEnd::Scheduled {
                    start: Some(s),
                    dist: Some(d),
                    ..
                } = self.end
                {
                    if round != s + 1 + d {
                        return Err(ProtocolError::new(format!(
                            "wave expected at round {} but first beep came at {round}",
                            s + 1 + d
                        )));
                    }
                }
                self.first = Some(round);
                round
            }
        };
        if !(round - first).is_multiple_of(SLOT) {
            return Err(ProtocolError::new(format!(
                "beep at round {round} is off the wave's slot grid"
            )));
        }
        self.hit = Some(round);
        self.pending = Some(round + 1);
        Ok(())
    }

    fn schedule_finish(
        &mut self,
        round: Round,
        payload: &BitString,
    ) -> Result<Round, ProtocolError> {
        let first = self.first.expect("decoded a wave");
        match self.end {
            RelayEnd::OnDecode => Ok(round + 1),
            RelayEnd::Scheduled { start, dist, tail } => {
                let start = match (start, dist) {
                    (Some(s), _) => s,
                    (None, Some(d)) => first
                        .checked_sub(1 + d)
                        .filter(|s| *s >= 1)
                        .ok_or_else(|| ProtocolError::new("distance exceeds wave arrival"))?,
                    (None, None) => {
                        return Err(ProtocolError::new(
                            "scheduled relay needs a start round or a distance",
                        ))
                    }
                };
                let tail = match tail {
                    Tail::Fixed(t) => t,
                    Tail::FromPayload => payload
                        .to_uint()
                        .ok_or_else(|| ProtocolError::new("tail payload is not a number"))?,
                };
                let end = start - 1 + wave_len(payload.len()) + tail;
                if end <= round {
                    return Err(ProtocolError::new(format!(
                        "scheduled end {end} precedes codeword completion at {round}"
                    )));
                }
                Ok(end)
            }
        }
    }
}

impl Phase for WaveRelay {
    type Output = BitString;

    fn act(&mut self, round: Round) -> Action {
        if self.pending == Some(round) {
            Action::Beep
        } else {
            Action::Listen
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<BitString>, ProtocolError> {
        match rx {
            Reception::Beeped => self.last_beep = Some(round),
            Reception::Heard => {
                if round < 2 || self.last_beep != Some(round - 1) {
                    self.on_beep(round)?;
                }
            }
            Reception::Silent => {}
        }
        if let (Some(first), None) = (self.first, &self.decoded) {
            if round >= first && (round - first).is_multiple_of(SLOT) {
                let bit = self.hit == Some(round);
                if let Some(payload) = self.decoder.push(bit)? {
                    if let Some(len) = self.expected_len {
                        if payload.len() != len {
                            return Err(ProtocolError::new(format!(
                                "expected a {len}-bit payload, decoded {} bits",
                                payload.len()
                            )));
                        }
                    }
                    self.finish = Some(self.schedule_finish(round, &payload)?);
                    self.decoded = Some(payload);
                }
            }
        }
        if self.finish == Some(round) {
            return Ok(Step::Done(self.decoded.clone().expect("decoded")));
        }
        Ok(Step::Running)
    }
}

/// A broadcast participant: the source or a relay.
#[derive(Debug, Clone)]
pub enum WaveNode {
    Source(WaveSource),
    Relay(WaveRelay),
}

impl Phase for WaveNode {
    type Output = BitString;

    fn act(&mut self, round: Round) -> Action {
        match self {
            WaveNode::Source(s) => s.act(round),
            WaveNode::Relay(r) => r.act(round),
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<BitString>, ProtocolError> {
        match self {
            WaveNode::Source(s) => s.observe(round, rx),
            WaveNode::Relay(r) => r.observe(round, rx),
        }
    }
}

/// Node program for one-shot broadcast.
pub type WaveProgram = Standalone<WaveNode>;

/// Program for the broadcasting node. Ends once its last codeword bit is sent.
pub fn beep_wave_source(m: &BitString, cfg: WaveConfig) -> Result<WaveProgram, ConfigError> {
    if m.is_empty() {
        return Err(ConfigError::EmptyMessage);
    }
    if cfg.start_round < 1 {
        return Err(ConfigError::Invalid(
            "start round must be at least 1".into(),
        ));
    }
    Ok(Standalone::new(WaveNode::Source(WaveSource::new(
        m.clone(),
        cfg.start_round,
        0,
    ))))
}

/// Program for every other node. Outputs the decoded message.
pub fn beep_wave_relay(_cfg: WaveConfig) -> WaveProgram {
    Standalone::new(WaveNode::Relay(WaveRelay::on_decode()))
}

pub fn broadcast_programs(
    graph: &Graph,
    source: NodeId,
    m: &BitString,
    cfg: WaveConfig,
) -> Result<BTreeMap<NodeId, WaveProgram>, ConfigError> {
    if !graph.contains(source) {
        return Err(ConfigError::UnknownNode(source));
    }
    let mut programs = BTreeMap::new();
    for &id in graph.ids() {
        let program = if id == source {
            beep_wave_source(m, cfg)?
        } else {
            beep_wave_relay(cfg)
        };
        programs.insert(id, program);
    }
    Ok(programs)
}

/// Binary search for the maximum id, one bit per phase of `d_hat + 1`
/// rounds. Outputs the winning id.
#[derive(Debug, Clone)]
pub struct Election {
    id: NodeId,
    bits: u32,
    phase_len: u64,
    start: Round,
    candidate: bool,
    leader: u64,
    phase_any: bool,
    last_beep: Option<Round>,
    pending: Option<Round>,
}

impl Election {
    pub fn new(id: NodeId, d_hat: u64, l_hat: u64, start: Round) -> Self {
        Self {
            id,
            bits: id_bits(l_hat),
            phase_len: d_hat + 1,
            start,
            candidate: true,
            leader: 0,
            phase_any: false,
            last_beep: None,
            pending: None,
        }
    }

    /// Total rounds used by an election with these bounds.
    pub fn rounds(d_hat: u64, l_hat: u64) -> u64 {
        id_bits(l_hat) as u64 * (d_hat + 1)
    }

    fn position(&self, round: Round) -> (u32, u64) {
        let rel = round - self.start;
        ((rel / self.phase_len) as u32, rel % self.phase_len)
    }
}

impl Phase for Election {
    type Output = NodeId;

    fn act(&mut self, round: Round) -> Action {
        let (phase, offset) = self.position(round);
        let own = offset == 0 && self.candidate && id_bit(self.id, self.bits, phase);
        if own || self.pending == Some(round) {
            Action::Beep
        } else {
            Action::Listen
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<NodeId>, ProtocolError> {
        let (phase, offset) = self.position(round);
        match rx {
            Reception::Beeped => {
                self.last_beep = Some(round);
                self.phase_any = true;
            }
            Reception::Heard => {
                self.phase_any = true;
                let guarded = round >= 1 && self.last_beep == Some(round - 1);
                if !guarded && offset + 1 < self.phase_len {
                    self.pending = Some(round + 1);
                }
            }
            Reception::Silent => {}
        }
        if offset + 1 == self.phase_len {
            let verdict = self.phase_any;
            if verdict && self.candidate && !id_bit(self.id, self.bits, phase) {
                self.candidate = false;
            }
            self.leader = (self.leader << 1) | verdict as u64;
            self.phase_any = false;
            self.pending = None;
            if phase + 1 == self.bits {
                return Ok(Step::Done(NodeId(self.leader)));
            }
        }
        Ok(Step::Running)
    }
}

/// What a node learns from diameter estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Estimate {
    /// The network-wide estimate `D̃`.
    pub d_tilde: u64,
    /// Round of the echo in which this node first heard the leader, which is
    /// its distance from the leader (0 for the leader).
    pub echo_dist: u64,
}

#[derive(Debug, Clone)]
enum EstimateStage {
    Leader {
        quiet: u64,
    },
    Echo {
        first: Option<u64>,
        ack: u64,
        quiet: u64,
        pending: Vec<Round>,
    },
    Source(WaveSource, u64),
    Relay(WaveRelay, u64),
}

/// Echo-based diameter estimate, then broadcast of the estimate.
#[derive(Debug, Clone)]
pub struct EstimateDiameter {
    start: Round,
    stage: EstimateStage,
}

impl EstimateDiameter {
    pub fn new(leader: bool, start: Round) -> Self {
        let stage = if leader {
            EstimateStage::Leader { quiet: 0 }
        } else {
            EstimateStage::Echo {
                first: None,
                ack: 0,
                quiet: 0,
                pending: Vec::new(),
            }
        };
        Self { start, stage }
    }

    /// Total rounds of the phase for a given estimate.
    pub fn rounds(d_tilde: u64) -> u64 {
        d_tilde + wave_len(BitString::from_uint(d_tilde).len()) + d_tilde
    }
}

impl Phase for EstimateDiameter {
    type Output = Estimate;

    fn act(&mut self, round: Round) -> Action {
        let t = round + 1 - self.start;
        let beep = match &mut self.stage {
            EstimateStage::Leader { .. } => t == 1,
            EstimateStage::Echo { pending, .. } => pending.contains(&round),
            EstimateStage::Source(s, _) => return s.act(round),
            EstimateStage::Relay(r, _) => return r.act(round),
        };
        if beep {
            Action::Beep
        } else {
            Action::Listen
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<Estimate>, ProtocolError> {
        let t = round + 1 - self.start;
        let heard = rx.heard();
        match &mut self.stage {
            EstimateStage::Leader { quiet } => {
                *quiet = if heard { 0 } else { *quiet + 1 };
                if t > 2 && *quiet >= 3 {
                    let source = WaveSource::new(BitString::from_uint(t), round + 1, t);
                    self.stage = EstimateStage::Source(source, 0);
                }
            }
            EstimateStage::Echo {
                first,
                ack,
                quiet,
                pending,
            } => {
                pending.retain(|&r| r > round);
                match *first {
                    None => {
                        if heard {
                            *first = Some(t);
                            *ack = (t + 1..=t + 3).find(|a| (a + t).is_multiple_of(3)).expect("residue");
                            pending.push(round + 1);
                            pending.push(round + (*ack - t));
                        }
                    }
                    Some(j) => {
                        if heard {
                            *quiet = 0;
                            if (t + j) % 3 == 2 {
                                pending.push(round + 1);
                            }
                        } else if rx == Reception::Beeped {
                            *quiet = 0;
                        } else {
                            *quiet += 1;
                        }
                        if *quiet >= 3 && pending.is_empty() {
                            let relay = WaveRelay::scheduled(None, Some(j), Tail::FromPayload);
                            self.stage = EstimateStage::Relay(relay, j);
                        }
                    }
                }
            }
            EstimateStage::Source(source, dist) => {
                if let Step::Done(m) = source.observe(round, rx)? {
                    return Ok(Step::Done(Estimate {
                        d_tilde: m.to_uint().expect("own estimate"),
                        echo_dist: *dist,
                    }));
                }
            }
            EstimateStage::Relay(relay, dist) => {
                if let Step::Done(m) = relay.observe(round, rx)? {
                    let d_tilde = m
                        .to_uint()
                        .ok_or_else(|| ProtocolError::new("estimate payload is not a number"))?;
                    return Ok(Step::Done(Estimate {
                        d_tilde,
                        echo_dist: *dist,
                    }));
                }
            }
        }
        Ok(Step::Running)
    }
}

/// Length of the calibration wave that opens collection.
pub fn calibration_len() -> u64 {
    wave_len(1)
}

#[derive(Debug, Clone)]
enum Calibration {
    Source(WaveSource),
    Relay(WaveRelay),
}

/// Calibration wave from the leader, fixing each node's distance.
#[derive(Debug, Clone)]
struct Calibrate {
    start: Round,
    wave: Calibration,
    dist: Option<u64>,
    done: bool,
}

impl Calibrate {
    fn new(leader: bool, start: Round) -> Self {
        let wave = if leader {
            Calibration::Source(WaveSource::new(BitString::ones(1), start, 0))
        } else {
            Calibration::Relay(WaveRelay::on_decode())
        };
        Self {
            start,
            wave,
            dist: leader.then_some(0),
            done: false,
        }
    }

    fn act(&mut self, round: Round) -> Action {
        match &mut self.wave {
            _ if self.done => Action::Listen,
            Calibration::Source(s) => s.act(round),
            Calibration::Relay(r) => r.act(round),
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<(), ProtocolError> {
        if self.done {
            return Ok(());
        }
        let step = match &mut self.wave {
            Calibration::Source(s) => s.observe(round, rx)?,
            Calibration::Relay(r) => {
                let step = r.observe(round, rx)?;
                if self.dist.is_none() {
                    self.dist = r.first_heard().map(|f| f - self.start - 1);
                }
                step
            }
        };
        if let Step::Done(m) = step {
            if m != BitString::ones(1) {
                return Err(ProtocolError::new(format!("calibration decoded {m}")));
            }
            self.done = true;
        }
        Ok(())
    }
}

fn check_reach(d_tilde: u64, dist: u64) -> Result<(), ProtocolError> {
    if 2 * dist >= d_tilde + 3 {
        return Err(ProtocolError::new(format!(
            "distance {dist} is too large for estimate {d_tilde}"
        )));
    }
    Ok(())
}

/// Result of message collection at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collected {
    pub dist: u64,
    /// The OR of all messages, padded to `p`; only at the leader.
    pub bits: Option<BitString>,
}

/// Sends every message towards the leader so that equal positions arrive
/// together and superimpose.
#[derive(Debug, Clone)]
pub struct CollectMessages {
    calibrate: Calibrate,
    base: Round,
    end: Round,
    d_tilde: u64,
    p: usize,
    own: Option<BitString>,
    acc: BitString,
    pending: Option<Round>,
}

impl CollectMessages {
    /// `own` is this node's message if it is a source.
    pub fn new(
        leader: bool,
        own: Option<BitString>,
        d_tilde: u64,
        p: usize,
        start: Round,
    ) -> Result<Self, ProtocolError> {
        if let Some(m) = &own {
            if m.len() > p {
                return Err(ProtocolError::new(format!(
                    "message of {} bits exceeds p = {p}",
                    m.len()
                )));
            }
        }
        let base = start + calibration_len();
        Ok(Self {
            calibrate: Calibrate::new(leader, start),
            base,
            end: base + Self::collection_rounds(d_tilde, p) - 1,
            d_tilde,
            p,
            own,
            acc: BitString::zeros(p),
            pending: None,
        })
    }

    /// Rounds after calibration.
    pub fn collection_rounds(d_tilde: u64, p: usize) -> u64 {
        SLOT * p as u64 + d_tilde
    }

    pub fn rounds(d_tilde: u64, p: usize) -> u64 {
        calibration_len() + Self::collection_rounds(d_tilde, p)
    }

    fn leader(&self) -> bool {
        self.calibrate.dist == Some(0)
    }

    fn own_bit_at(&self, round: Round, dist: u64) -> bool {
        let Some(m) = &self.own else { return false };
        let Some(rel) = round.checked_sub(self.base + self.d_tilde - dist) else {
            return false;
        };
        if rel == 0 || rel % SLOT != 0 {
            return false;
        }
        let i = (rel / SLOT) as usize;
        m.get(i - 1) == Some(true)
    }
}

impl Phase for CollectMessages {
    type Output = Collected;

    fn act(&mut self, round: Round) -> Action {
        if !self.calibrate.done {
            return self.calibrate.act(round);
        }
        let dist = self.calibrate.dist.expect("calibrated");
        if dist > 0 && (self.pending == Some(round) || self.own_bit_at(round, dist)) {
            Action::Beep
        } else {
            Action::Listen
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<Collected>, ProtocolError> {
        if !self.calibrate.done {
            self.calibrate.observe(round, rx)?;
            if self.calibrate.done {
                check_reach(self.d_tilde, self.calibrate.dist.expect("calibrated"))?;
            }
            return Ok(Step::Running);
        }
        let dist = self.calibrate.dist.expect("calibrated");
        if rx == Reception::Heard && round >= self.base {
            let t = round - self.base;
            if self.leader() {
                let arrive = t + 1;
                if arrive > self.d_tilde && (arrive - self.d_tilde).is_multiple_of(SLOT) {
                    let i = ((arrive - self.d_tilde) / SLOT) as usize;
                    if i >= 1 && i <= self.p {
                        self.acc.set(i - 1, true);
                    }
                }
            } else {
                // Only the next layer out beeps in this residue class.
                let lag = t + dist;
                if lag >= 2 + self.d_tilde && (lag - 2 - self.d_tilde).is_multiple_of(SLOT) {
                    self.pending = Some(round + 1);
                }
            }
        }
        if round == self.end {
            let bits = if self.leader() {
                let own = self.own.clone().unwrap_or_default().padded(self.p);
                Some(self.acc.or(&own))
            } else {
                None
            };
            return Ok(Step::Done(Collected { dist, bits }));
        }
        Ok(Step::Running)
    }
}

#[derive(Debug, Clone)]
enum LengthStage {
    Collect { pending: Option<Round> },
    Wait { quiet: u64 },
    Source(WaveSource),
    Relay(WaveRelay),
}

/// What a node learns from message-length discovery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Learned {
    pub dist: u64,
    /// Maximum source message length.
    pub p: u64,
}

/// Collects all-ones strings of each source's message length; the leader
/// finds the first empty slot and broadcasts the longest length.
#[derive(Debug, Clone)]
pub struct MessageLength {
    calibrate: Calibrate,
    base: Round,
    d_tilde: u64,
    own_len: u64,
    stage: LengthStage,
}

impl MessageLength {
    pub fn new(leader: bool, own_len: Option<usize>, d_tilde: u64, start: Round) -> Self {
        Self {
            calibrate: Calibrate::new(leader, start),
            base: start + calibration_len(),
            d_tilde,
            own_len: own_len.unwrap_or(0) as u64,
            stage: LengthStage::Collect { pending: None },
        }
    }

    pub fn rounds(d_tilde: u64, p: u64) -> u64 {
        calibration_len()
            + SLOT * (p + 1)
            + d_tilde
            + wave_len(BitString::from_uint(p).len())
            + d_tilde
    }

    /// Slot index whose send round at this node's distance is `round`.
    fn slot_at(&self, round: Round, dist: u64) -> Option<u64> {
        let rel = round.checked_sub(self.base + self.d_tilde - dist)?;
        (rel > 0 && rel % SLOT == 0).then_some(rel / SLOT)
    }
}

impl Phase for MessageLength {
    type Output = Learned;

    fn act(&mut self, round: Round) -> Action {
        if !self.calibrate.done {
            return self.calibrate.act(round);
        }
        let dist = self.calibrate.dist.expect("calibrated");
        let own = dist > 0 && self.slot_at(round, dist).is_some_and(|i| i <= self.own_len);
        match &mut self.stage {
            LengthStage::Collect { pending } if own || *pending == Some(round) => Action::Beep,
            LengthStage::Source(s) => s.act(round),
            LengthStage::Relay(r) => r.act(round),
            _ => Action::Listen,
        }
    }

    fn observe(&mut self, round: Round, rx: Reception) -> Result<Step<Learned>, ProtocolError> {
        if !self.calibrate.done {
            self.calibrate.observe(round, rx)?;
            if self.calibrate.done {
                check_reach(self.d_tilde, self.calibrate.dist.expect("calibrated"))?;
            }
            return Ok(Step::Running);
        }
        let dist = self.calibrate.dist.expect("calibrated");
        let d_tilde = self.d_tilde;
        let slot = if dist == 0 {
            self.slot_at(round + 1, 0)
        } else {
            self.slot_at(round, dist)
        };
        let own_len = self.own_len;
        let base = self.base;
        match &mut self.stage {
            LengthStage::Collect { pending } => {
                if dist == 0 {
                    if let Some(i) = slot {
                        if !rx.heard() && i > own_len {
                            let p = i - 1;
                            let wave = WaveSource::new(BitString::from_uint(p), round + 1, d_tilde);
                            self.stage = LengthStage::Source(wave);
                        }
                    }
                } else if slot.is_some() && rx != Reception::Beeped {
                    let quiet = if rx.heard() { 0 } else { 1 };
                    self.stage = LengthStage::Wait { quiet };
                } else if rx == Reception::Heard && round >= base {
                    let lag = round - base + dist;
                    if lag >= 2 + d_tilde && (lag - 2 - d_tilde).is_multiple_of(SLOT) {
                        *pending = Some(round + 1);
                    }
                }
            }
            LengthStage::Wait { quiet } => {
                if rx.heard() {
                    if *quiet >= 3 {
                        let mut relay =
                            WaveRelay::scheduled(None, Some(dist), Tail::Fixed(d_tilde));
                        relay.observe(round, rx)?;
                        self.stage = LengthStage::Relay(relay);
                    } else {
                        *quiet = 0;
                    }
                } else {
                    *quiet += 1;
                }
            }
            LengthStage::Source(s) => {
                if let Step::Done(m) = s.observe(round, rx)? {
                    let p = m.to_uint().expect("own length");
                    return Ok(Step::Done(Learned { dist, p }));
                }
            }
            LengthStage::Relay(r) => {
                if let Step::Done(m) = r.observe(round, rx)? {
                    let p = m
                        .to_uint()
                        .ok_or_else(|| ProtocolError::new("length payload is not a number"))?;
                    return Ok(Step::Done(Learned { dist, p }));
                }
            }
        }
        Ok(Step::Running)
    }
}

pub type ElectProgram = Standalone<Election>;
pub type DiameterProgram = Standalone<Recorded<EstimateDiameter>>;
pub type CollectProgram = Standalone<Chain<Recorded<EstimateDiameter>, Recorded<CollectMessages>>>;
pub type LengthProgram = Standalone<Chain<Recorded<EstimateDiameter>, Recorded<MessageLength>>>;

fn check_bounds(graph: &Graph, l_hat: u64) -> Result<(), ConfigError> {
    if l_hat <= graph.max_id().0 {
        return Err(ConfigError::LabelBound {
            l_hat,
            max_id: graph.max_id(),
        });
    }
    Ok(())
}

fn check_leader(graph: &Graph, leader: NodeId) -> Result<(), ConfigError> {
    if graph.contains(leader) {
        Ok(())
    } else {
        Err(ConfigError::UnknownNode(leader))
    }
}

fn check_sources(graph: &Graph, msgs: &BTreeMap<NodeId, BitString>) -> Result<(), ConfigError> {
    if msgs.is_empty() {
        return Err(ConfigError::NoSources);
    }
    match msgs.keys().find(|s| !graph.contains(**s)) {
        Some(s) => Err(ConfigError::UnknownNode(*s)),
        None => Ok(()),
    }
}

/// Every node runs the binary search; all output the maximum id when
/// `d_hat >= D`.
pub fn elect_leader(
    graph: &Graph,
    d_hat: u64,
    l_hat: u64,
) -> Result<BTreeMap<NodeId, ElectProgram>, ConfigError> {
    check_bounds(graph, l_hat)?;
    Ok(graph
        .ids()
        .iter()
        .map(|&id| (id, Standalone::new(Election::new(id, d_hat, l_hat, 1))))
        .collect())
}

pub fn estimate_diameter(
    graph: &Graph,
    leader: NodeId,
) -> Result<BTreeMap<NodeId, DiameterProgram>, ConfigError> {
    check_leader(graph, leader)?;
    Ok(graph
        .ids()
        .iter()
        .map(|&id| {
            let phase = EstimateDiameter::new(id == leader, 1);
            (id, Standalone::new(Recorded::new("estimate", 1, phase)))
        })
        .collect())
}

/// Diameter estimation followed by collection of `msgs` at the leader.
pub fn collect_messages(
    graph: &Graph,
    leader: NodeId,
    msgs: &BTreeMap<NodeId, BitString>,
    p: usize,
) -> Result<BTreeMap<NodeId, CollectProgram>, ConfigError> {
    check_leader(graph, leader)?;
    check_sources(graph, msgs)?;
    if let Some((&node, m)) = msgs.iter().find(|(_, m)| m.len() > p) {
        return Err(ConfigError::MessageTooLong {
            node,
            len: m.len(),
            p,
        });
    }
    Ok(graph
        .ids()
        .iter()
        .map(|&id| {
            let is_leader = id == leader;
            let own = msgs.get(&id).cloned();
            let estimate = Recorded::new("estimate", 1, EstimateDiameter::new(is_leader, 1));
            let chain = Chain::new(estimate, move |(est, _): &(Estimate, PhaseRecord), end| {
                let phase = CollectMessages::new(is_leader, own, est.d_tilde, p, end + 1)?;
                Ok(Recorded::new("collect", end + 1, phase))
            });
            (id, Standalone::new(chain))
        })
        .collect())
}

/// Diameter estimation followed by discovery of the longest message length.
pub fn get_message_length(
    graph: &Graph,
    leader: NodeId,
    msgs: &BTreeMap<NodeId, BitString>,
) -> Result<BTreeMap<NodeId, LengthProgram>, ConfigError> {
    check_leader(graph, leader)?;
    check_sources(graph, msgs)?;
    Ok(graph
        .ids()
        .iter()
        .map(|&id| {
            let is_leader = id == leader;
            let own = msgs.get(&id).map(|m| m.len());
            let estimate = Recorded::new("estimate", 1, EstimateDiameter::new(is_leader, 1));
            let chain = Chain::new(estimate, move |(est, _): &(Estimate, PhaseRecord), end| {
                let phase = MessageLength::new(is_leader, own, est.d_tilde, end + 1);
                Ok(Recorded::new("length", end + 1, phase))
            });
            (id, Standalone::new(chain))
        })
        .collect())
}

/// Runs a one-shot broadcast from `source` starting at round 1.
pub fn run_broadcast(
    graph: &Graph,
    source: NodeId,
    m: &BitString,
    max_rounds: Round,
) -> Result<(Trace, RunReport<BitString>), SimError> {
    let programs = broadcast_programs(graph, source, m, WaveConfig::default())?;
    simulate(graph, programs, max_rounds)
}
