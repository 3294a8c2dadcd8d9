//! Round-synchronous beep-model kernel.
//!
//! Every round each node either beeps or listens. A listening node hears a
//! beep iff at least one neighbour beeped in that round; it cannot tell how
//! many did. A beeping node learns nothing in that round. Rounds are numbered
//! from 1.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Round = u64;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Beep,
    Listen,
}

/// What a node experienced in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// The node beeped and so heard nothing.
    Beeped,
    Heard,
    Silent,
}

impl Reception {
    pub fn heard(self) -> bool {
        self == Reception::Heard
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("self-loop at {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("edge endpoint {0} is not a node")]
    UnknownNode(NodeId),
    #[error("graph is not connected")]
    Disconnected,
    #[error("id {id} is outside the label range {range}")]
    LabelRange { id: NodeId, range: u64 },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
}

/// Undirected connected graph with unique node labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    ids: Vec<NodeId>,
    index: BTreeMap<NodeId, usize>,
    adjacency: Vec<Vec<usize>>,
    label_range: u64,
}

impl Graph {
    /// Builds a graph with the default label range `max id + 1`.
    pub fn new(ids: Vec<NodeId>, edges: &[(NodeId, NodeId)]) -> Result<Self, GraphError> {
        let range = ids.iter().map(|id| id.0 + 1).max().unwrap_or(0);
        Self::with_label_range(ids, edges, range)
    }

    pub fn with_label_range(
        ids: Vec<NodeId>,
        edges: &[(NodeId, NodeId)],
        label_range: u64,
    ) -> Result<Self, GraphError> {
        if ids.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut index = BTreeMap::new();
        for (i, &id) in ids.iter().enumerate() {
            if id.0 >= label_range {
                return Err(GraphError::LabelRange {
                    id,
                    range: label_range,
                });
            }
            if index.insert(id, i).is_some() {
                return Err(GraphError::DuplicateId(id));
            }
        }
        let mut adjacency = vec![Vec::new(); ids.len()];
        let mut seen = BTreeSet::new();
        for &(a, b) in edges {
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            let ia = *index.get(&a).ok_or(GraphError::UnknownNode(a))?;
            let ib = *index.get(&b).ok_or(GraphError::UnknownNode(b))?;
            if !seen.insert((ia.min(ib), ia.max(ib))) {
                return Err(GraphError::DuplicateEdge(a, b));
            }
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let graph = Self {
            ids,
            index,
            adjacency,
            label_range,
        };
        if graph.bfs(0).iter().any(Option::is_none) {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Node ids in increasing order.
    pub fn sorted_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.index.keys().copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn label_range(&self) -> u64 {
        self.label_range
    }

    pub fn max_id(&self) -> NodeId {
        *self.index.keys().next_back().expect("graph is non-empty")
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[self.index[&id]]
            .iter()
            .map(move |&j| self.ids[j])
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        let (ia, ib) = (self.index[&a], self.index[&b]);
        self.adjacency[ia].binary_search(&ib).is_ok()
    }

    pub fn degree(&self, id: NodeId) -> usize {
        self.adjacency[self.index[&id]].len()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for &j in list {
                if i < j {
                    let (a, b) = (self.ids[i], self.ids[j]);
                    out.push((a.min(b), a.max(b)));
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn bfs(&self, start: usize) -> Vec<Option<u64>> {
        let mut dist = vec![None; self.ids.len()];
        let mut queue = VecDeque::from([start]);
        dist[start] = Some(0);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap();
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop distances from `from` to every node.
    pub fn distances(&self, from: NodeId) -> BTreeMap<NodeId, u64> {
        self.bfs(self.index[&from])
            .into_iter()
            .enumerate()
            .map(|(i, d)| (self.ids[i], d.expect("graph is connected")))
            .collect()
    }

    pub fn eccentricity(&self, from: NodeId) -> u64 {
        self.distances(from).into_values().max().unwrap_or(0)
    }

    pub fn diameter(&self) -> u64 {
        self.ids
            .iter()
            .map(|&id| self.eccentricity(id))
            .max()
            .unwrap_or(0)
    }

    /// Reads the edge-list format: a header `n <count>` followed by one
    /// `u v` pair per line. A line holding a single id declares a node, which
    /// is only needed for graphs without edges.
    pub fn read_edge_list(reader: impl BufRead) -> Result<Self, GraphError> {
        let mut count = None;
        let mut ids = BTreeSet::new();
        let mut edges = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| GraphError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: &str| GraphError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if count.is_none() {
                match fields.as_slice() {
                    ["n", c] => {
                        count = Some(c.parse::<usize>().map_err(|_| parse_err("bad count"))?)
                    }
                    _ => return Err(parse_err("expected header `n <count>`")),
                }
                continue;
            }
            let nums = fields
                .iter()
                .map(|f| f.parse::<u64>().map(NodeId))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| parse_err("bad node id"))?;
            match nums.as_slice() {
                [a] => {
                    ids.insert(*a);
                }
                [a, b] => {
                    ids.insert(*a);
                    ids.insert(*b);
                    edges.push((*a, *b));
                }
                _ => return Err(parse_err("expected `u v`")),
            }
        }
        let count = count.ok_or(GraphError::Parse {
            line: 0,
            reason: "missing header".into(),
        })?;
        if ids.len() != count {
            return Err(GraphError::Parse {
                line: 0,
                reason: format!("header says {count} nodes, found {}", ids.len()),
            });
        }
        Self::new(ids.into_iter().collect(), &edges)
    }

    pub fn write_edge_list(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "n {}", self.len())?;
        for id in self.sorted_ids() {
            if self.degree(id) == 0 {
                writeln!(w, "{id}")?;
            }
        }
        for (a, b) in self.edges() {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }
}

/// One round of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: Round,
    /// Sorted ids of nodes that beeped.
    pub beepers: Vec<NodeId>,
    /// Sorted ids of listening nodes that heard a beep.
    pub heard: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub rounds: Vec<RoundRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn record(&self, round: Round) -> Option<&RoundRecord> {
        round
            .checked_sub(1)
            .and_then(|i| self.rounds.get(i as usize))
    }

    pub fn beeped(&self, node: NodeId, round: Round) -> bool {
        self.record(round)
            .is_some_and(|r| r.beepers.binary_search(&node).is_ok())
    }

    pub fn heard(&self, node: NodeId, round: Round) -> bool {
        self.record(round)
            .is_some_and(|r| r.heard.binary_search(&node).is_ok())
    }

    /// Rounds at which `node` beeped.
    pub fn beep_rounds(&self, node: NodeId) -> Vec<Round> {
        self.rounds
            .iter()
            .filter(|r| r.beepers.binary_search(&node).is_ok())
            .map(|r| r.round)
            .collect()
    }

    pub fn heard_rounds(&self, node: NodeId) -> Vec<Round> {
        self.rounds
            .iter()
            .filter(|r| r.heard.binary_search(&node).is_ok())
            .map(|r| r.round)
            .collect()
    }

    /// Re-derives every heard flag from beepers and adjacency.
    pub fn check_reception(&self, graph: &Graph) -> Result<(), String> {
        for rec in &self.rounds {
            let beepers: BTreeSet<_> = rec.beepers.iter().copied().collect();
            for id in graph.sorted_ids() {
                let expect =
                    !beepers.contains(&id) && graph.neighbors(id).any(|v| beepers.contains(&v));
                let got = rec.heard.binary_search(&id).is_ok();
                if expect != got {
                    return Err(format!(
                        "round {}: node {id} heard={got}, expected {expect}",
                        rec.round
                    ));
                }
            }
        }
        Ok(())
    }

    /// Writes one JSON object per round: `{"round":..,"beepers":[..],"heard":[..]}`.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for rec in &self.rounds {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, String> {
        let mut rounds = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            rounds.push(serde_json::from_str(&line).map_err(|e| e.to_string())?);
        }
        Ok(Self { rounds })
    }
}

/// A protocol-level failure raised by a node program.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ProtocolError(pub String);

impl ProtocolError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl From<crate::codec::DecodeError> for ProtocolError {
    fn from(e: crate::codec::DecodeError) -> Self {
        Self(format!("decode: {e}"))
    }
}

/// Per-node deterministic state machine driven by the kernel.
///
/// Each round the kernel first asks every program for its action, then
/// reports what the node experienced. A program is finished once `output`
/// returns a value; the kernel keeps calling it (it should listen) until all
/// programs are finished.
pub trait NodeProgram {
    type Output: Clone;

    fn act(&mut self, round: Round) -> Action;

    fn observe(&mut self, round: Round, reception: Reception) -> Result<(), ProtocolError>;

    fn output(&self) -> Option<&Self::Output>;
}

impl<P: NodeProgram + ?Sized> NodeProgram for Box<P> {
    type Output = P::Output;

    fn act(&mut self, round: Round) -> Action {
        (**self).act(round)
    }

    fn observe(&mut self, round: Round, reception: Reception) -> Result<(), ProtocolError> {
        (**self).observe(round, reception)
    }

    fn output(&self) -> Option<&Self::Output> {
        (**self).output()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

impl BoundCheck {
    /// Passes when `measured <= bound`.
    pub fn upper(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            pass: measured <= bound,
        }
    }

    /// Passes when `measured >= bound`.
    pub fn lower(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            pass: measured >= bound,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport<O> {
    pub outputs: BTreeMap<NodeId, O>,
    /// Round at which each node first produced its output.
    pub completion: BTreeMap<NodeId, Round>,
    pub total_rounds: Round,
    pub bound_checks: Vec<BoundCheck>,
}

impl<O> RunReport<O> {
    pub fn all_bounds_pass(&self) -> bool {
        self.bound_checks.iter().all(|b| b.pass)
    }
}

#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("node {0} has no program")]
    MissingProgram(NodeId),
    #[error("program given for unknown node {0}")]
    UnknownProgram(NodeId),
    #[error("max_rounds must be positive")]
    ZeroRounds,
    #[error("invalid configuration: {0}")]
    Config(#[from] crate::phase::ConfigError),
    #[error("timed out after {} rounds", trace.len())]
    Timeout { trace: Trace },
    #[error("node {node} failed at round {round}: {error}")]
    Protocol {
        node: NodeId,
        round: Round,
        error: ProtocolError,
        trace: Trace,
    },
}

impl SimError {
    pub fn partial_trace(&self) -> Option<&Trace> {
        match self {
            SimError::Timeout { trace } | SimError::Protocol { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// Runs `programs` on `graph` until every program has an output or
/// `max_rounds` rounds have elapsed.
pub fn simulate<P: NodeProgram>(
    graph: &Graph,
    programs: BTreeMap<NodeId, P>,
    max_rounds: Round,
) -> Result<(Trace, RunReport<P::Output>), SimError> {
    if max_rounds == 0 {
        return Err(SimError::ZeroRounds);
    }
    if let Some(&id) = programs.keys().find(|id| !graph.contains(**id)) {
        return Err(SimError::UnknownProgram(id));
    }
    // Work in graph index order.
    let mut progs: Vec<P> = Vec::with_capacity(graph.len());
    let mut programs = programs;
    for &id in graph.ids() {
        progs.push(programs.remove(&id).ok_or(SimError::MissingProgram(id))?);
    }
    let n = graph.len();
    let mut completion: Vec<Option<Round>> = vec![None; n];
    let mut trace = Trace::default();
    let mut beeping = vec![false; n];
    let mut hears = vec![false; n];
    // Programs may be finished before the first round (degenerate cases).
    let mut remaining = n;
    for (i, p) in progs.iter().enumerate() {
        if p.output().is_some() {
            completion[i] = Some(0);
            remaining -= 1;
        }
    }
    let mut round = 0;
    while remaining > 0 {
        round += 1;
        if round > max_rounds {
            return Err(SimError::Timeout { trace });
        }
        for (i, p) in progs.iter_mut().enumerate() {
            beeping[i] = p.act(round) == Action::Beep;
        }
        hears.iter_mut().for_each(|h| *h = false);
        for i in (0..n).filter(|&i| beeping[i]) {
            for &j in &graph.adjacency[i] {
                hears[j] = true;
            }
        }
        let mut beepers = Vec::new();
        let mut heard = Vec::new();
        for i in 0..n {
            let rx = if beeping[i] {
                beepers.push(graph.ids[i]);
                Reception::Beeped
            } else if hears[i] {
                heard.push(graph.ids[i]);
                Reception::Heard
            } else {
                Reception::Silent
            };
            if let Err(error) = progs[i].observe(round, rx) {
                beepers.sort_unstable();
                heard.sort_unstable();
                trace.rounds.push(RoundRecord {
                    round,
                    beepers,
                    heard,
                });
                return Err(SimError::Protocol {
                    node: graph.ids[i],
                    round,
                    error,
                    trace,
                });
            }
            if completion[i].is_none() && progs[i].output().is_some() {
                completion[i] = Some(round);
                remaining -= 1;
            }
        }
        beepers.sort_unstable();
        heard.sort_unstable();
        trace.rounds.push(RoundRecord {
            round,
            beepers,
            heard,
        });
    }
    let outputs = graph
        .ids
        .iter()
        .zip(&progs)
        .map(|(&id, p)| (id, p.output().cloned().expect("finished")))
        .collect();
    let completion = graph
        .ids
        .iter()
        .zip(&completion)
        .map(|(&id, c)| (id, c.expect("finished")))
        .collect();
    Ok((
        trace,
        RunReport {
            outputs,
            completion,
            total_rounds: round,
            bound_checks: Vec::new(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Beeps at the listed rounds, halts after `halt`.
    #[derive(Clone)]
    struct Script {
        beeps: Vec<Round>,
        halt: Round,
        heard: Vec<Round>,
        done: Option<Vec<Round>>,
    }

    impl Script {
        fn new(beeps: &[Round], halt: Round) -> Self {
            Self {
                beeps: beeps.to_vec(),
                halt,
                heard: Vec::new(),
                done: None,
            }
        }
    }

    impl NodeProgram for Script {
        type Output = Vec<Round>;

        fn act(&mut self, round: Round) -> Action {
            if self.done.is_none() && self.beeps.contains(&round) {
                Action::Beep
            } else {
                Action::Listen
            }
        }

        fn observe(&mut self, round: Round, rx: Reception) -> Result<(), ProtocolError> {
            if rx.heard() {
                self.heard.push(round);
            }
            if round >= self.halt && self.done.is_none() {
                self.done = Some(self.heard.clone());
            }
            Ok(())
        }

        fn output(&self) -> Option<&Vec<Round>> {
            self.done.as_ref()
        }
    }

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    fn path(n: u64) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (NodeId(i - 1), NodeId(i))).collect();
        Graph::new(ids(&(0..n).collect::<Vec<_>>()), &edges).unwrap()
    }

    #[test]
    fn single_edge_reception() {
        let g = Graph::new(ids(&[0, 1]), &[(NodeId(0), NodeId(1))]).unwrap();
        let progs = BTreeMap::from([
            (NodeId(0), Script::new(&[1], 1)),
            (NodeId(1), Script::new(&[], 1)),
        ]);
        let (trace, report) = simulate(&g, progs, 10).unwrap();
        assert_eq!(report.outputs[&NodeId(1)], vec![1]);
        assert_eq!(report.total_rounds, 1);
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn lone_node_never_hears() {
        let g = Graph::new(ids(&[3]), &[]).unwrap();
        let progs = BTreeMap::from([(NodeId(3), Script::new(&[1, 2, 3, 4], 4))]);
        let (trace, report) = simulate(&g, progs, 10).unwrap();
        assert!(report.outputs[&NodeId(3)].is_empty());
        assert!(trace.rounds.iter().all(|r| r.heard.is_empty()));
        assert_eq!(trace.beep_rounds(NodeId(3)), vec![1, 2, 3, 4]);
    }

    #[test]
    fn path_reception_is_one_hop() {
        let g = path(3);
        let progs = BTreeMap::from([
            (NodeId(0), Script::new(&[1], 3)),
            (NodeId(1), Script::new(&[], 3)),
            (NodeId(2), Script::new(&[], 3)),
        ]);
        let (trace, report) = simulate(&g, progs, 10).unwrap();
        assert_eq!(report.outputs[&NodeId(1)], vec![1]);
        assert!(report.outputs[&NodeId(2)].is_empty());
        trace.check_reception(&g).unwrap();
    }

    #[test]
    fn beeper_hears_nothing() {
        let g = Graph::new(ids(&[0, 1]), &[(NodeId(0), NodeId(1))]).unwrap();
        let progs = BTreeMap::from([
            (NodeId(0), Script::new(&[1], 1)),
            (NodeId(1), Script::new(&[1], 1)),
        ]);
        let (trace, report) = simulate(&g, progs, 10).unwrap();
        assert!(report.outputs.values().all(Vec::is_empty));
        assert!(trace.rounds[0].heard.is_empty());
    }

    #[test]
    fn timeout_carries_partial_trace() {
        let g = path(2);
        let progs = BTreeMap::from([
            (NodeId(0), Script::new(&[1], 100)),
            (NodeId(1), Script::new(&[], 1)),
        ]);
        match simulate(&g, progs, 5) {
            Err(SimError::Timeout { trace }) => assert_eq!(trace.len(), 5),
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn missing_program_is_rejected() {
        let g = path(2);
        let progs = BTreeMap::from([(NodeId(0), Script::new(&[], 1))]);
        assert!(matches!(
            simulate(&g, progs, 5),
            Err(SimError::MissingProgram(NodeId(1)))
        ));
    }

    #[test]
    fn graph_validation() {
        assert_eq!(
            Graph::new(ids(&[0, 1, 2]), &[(NodeId(0), NodeId(1))]),
            Err(GraphError::Disconnected)
        );
        assert_eq!(
            Graph::new(ids(&[0, 0]), &[]),
            Err(GraphError::DuplicateId(NodeId(0)))
        );
        assert_eq!(
            Graph::new(ids(&[0]), &[(NodeId(0), NodeId(0))]),
            Err(GraphError::SelfLoop(NodeId(0)))
        );
        assert!(matches!(
            Graph::new(
                ids(&[0, 1]),
                &[(NodeId(0), NodeId(1)), (NodeId(1), NodeId(0))]
            ),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(matches!(
            Graph::with_label_range(ids(&[0, 9]), &[(NodeId(0), NodeId(9))], 8),
            Err(GraphError::LabelRange { .. })
        ));
    }

    #[test]
    fn distances_on_path_and_star() {
        let g = path(5);
        let d: Vec<_> = g.distances(NodeId(0)).into_values().collect();
        assert_eq!(d, vec![0, 1, 2, 3, 4]);
        assert_eq!(g.diameter(), 4);

        let star = Graph::new(
            ids(&[9, 1, 2, 3, 4]),
            &[
                (NodeId(9), NodeId(1)),
                (NodeId(9), NodeId(2)),
                (NodeId(9), NodeId(3)),
                (NodeId(9), NodeId(4)),
            ],
        )
        .unwrap();
        let d = star.distances(NodeId(9));
        assert_eq!(d[&NodeId(9)], 0);
        assert!(star.neighbors(NodeId(9)).all(|v| d[&v] == 1));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = path(4);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "n 4\n0 1\n1 2\n2 3\n"
        );
        assert_eq!(Graph::read_edge_list(&buf[..]).unwrap(), g);

        let lone = Graph::new(ids(&[7]), &[]).unwrap();
        let mut buf = Vec::new();
        lone.write_edge_list(&mut buf).unwrap();
        assert_eq!(Graph::read_edge_list(&buf[..]).unwrap(), lone);

        assert!(matches!(
            Graph::read_edge_list(&b"0 1\n"[..]),
            Err(GraphError::Parse { .. })
        ));
        assert!(matches!(
            Graph::read_edge_list(&b"n 3\n0 1\n"[..]),
            Err(GraphError::Parse { .. })
        ));
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let trace = Trace {
            rounds: vec![RoundRecord {
                round: 1,
                beepers: vec![NodeId(2)],
                heard: vec![NodeId(1), NodeId(3)],
            }],
        };
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"round\":1,\"beepers\":[2],\"heard\":[1,3]}\n"
        );
        assert_eq!(Trace::read_jsonl(&buf[..]).unwrap(), trace);
    }
}
