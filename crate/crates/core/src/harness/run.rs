use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::codec::{encode, BitString};
use crate::engine::{
    simulate, BoundCheck, Graph, NodeId, NodeProgram, Round, RunReport, SimError, Trace,
};
use crate::graphs::{or_oracle, reference_dfs};
use crate::multicast::{lower_bound, multi_broadcast, MultiOutput, Task, Variant};
use crate::phase::{default_l_hat, id_bits, ConfigError};
use crate::traversal::{dfs, gossip};
use crate::waves::{
    broadcast_programs, calibration_len, collect_messages, elect_leader, estimate_diameter,
    get_message_length, WaveConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Broadcast,
    Elect,
    Diameter,
    Collect,
    Msglen,
    Dfs,
    Gossip,
    MbProv,
    MbNoProv,
}

impl Protocol {
    pub const ALL: [Protocol; 9] = [
        Protocol::Broadcast,
        Protocol::Elect,
        Protocol::Diameter,
        Protocol::Collect,
        Protocol::Msglen,
        Protocol::Dfs,
        Protocol::Gossip,
        Protocol::MbProv,
        Protocol::MbNoProv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Broadcast => "broadcast",
            Protocol::Elect => "elect",
            Protocol::Diameter => "diameter",
            Protocol::Collect => "collect",
            Protocol::Msglen => "msglen",
            Protocol::Dfs => "dfs",
            Protocol::Gossip => "gossip",
            Protocol::MbProv => "mb-prov",
            Protocol::MbNoProv => "mb-noprov",
        }
    }

    /// Frozen multiplier on [`upper_expr`], fitted on graphs with n <= 30.
    pub fn constant(self) -> f64 {
        match self {
            Protocol::Broadcast => 1.1,
            Protocol::Elect => 1.0,
            Protocol::Diameter => 45.0,
            Protocol::Collect => 37.0,
            Protocol::Msglen => 98.0,
            Protocol::Dfs => 62.0,
            Protocol::Gossip => 56.0,
            Protocol::MbProv => 97.0,
            Protocol::MbNoProv => 116.0,
        }
    }

    fn needs_sources(self) -> bool {
        matches!(
            self,
            Protocol::Broadcast
                | Protocol::Collect
                | Protocol::Msglen
                | Protocol::Gossip
                | Protocol::MbProv
                | Protocol::MbNoProv
        )
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

/// Inputs of a single run. Unset bounds default to the true diameter and
/// the smallest power of two above the largest id.
#[derive(Debug, Clone, Default)]
pub struct Params {
    pub messages: BTreeMap<NodeId, BitString>,
    pub leader: Option<NodeId>,
    pub d_hat: Option<u64>,
    pub l_hat: Option<u64>,
    pub p: Option<usize>,
    pub max_rounds: Option<Round>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(SimError),
}

impl RunError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, RunError::Sim(SimError::Timeout { .. }))
    }

    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            RunError::Usage(_) | RunError::Config(_) | RunError::Sim(SimError::Config(_))
        )
    }

    pub fn partial_trace(&self) -> Option<&Trace> {
        match self {
            RunError::Sim(e) => e.partial_trace(),
            _ => None,
        }
    }
}

impl From<SimError> for RunError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => RunError::Config(c),
            e => RunError::Sim(e),
        }
    }
}

/// Measured and derived quantities of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub protocol: Protocol,
    pub n: usize,
    pub d: u64,
    pub l: u64,
    pub m: u64,
    pub k: usize,
    pub p: usize,
    pub measured_rounds: Round,
    pub upper_expr: f64,
    pub lower_floor: Option<u64>,
    pub outputs: BTreeMap<NodeId, String>,
    /// Oracle mismatches; empty on a correct run.
    pub failures: Vec<String>,
    pub bound_checks: Vec<BoundCheck>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.bound_checks.iter().all(|b| b.pass)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub trace: Trace,
}

/// Number of bit strings of length at most `p`.
pub fn message_space(p: usize) -> u64 {
    (1u64 << (p as u32 + 1).min(63)) - 1
}

fn lg(x: f64) -> f64 {
    x.max(1.0).log2()
}

/// Growth expression of each protocol's round count, without constants.
pub fn upper_expr(protocol: Protocol, n: usize, d: u64, l: u64, m: u64, k: usize, p: usize) -> f64 {
    let d = d.max(1) as f64;
    let log_l = id_bits(l) as f64;
    let (n, m, k, p) = (n as f64, m as f64, k.max(1) as f64, p as f64);
    match protocol {
        Protocol::Broadcast => 3.0 * (2.0 * p + 4.0) + d,
        Protocol::Elect => log_l * (d + 1.0),
        Protocol::Diameter => d,
        Protocol::Collect | Protocol::Msglen => d + p,
        Protocol::Dfs => n * (log_l + lg(n).ceil()).max(1.0),
        Protocol::Gossip => n * (log_l + p) + d,
        Protocol::MbProv => k * lg(2.0 * l as f64 * m / k) + d * log_l,
        Protocol::MbNoProv => {
            if m > k {
                k * lg(m / k) + d * log_l
            } else {
                m + d * log_l
            }
        }
    }
}

/// Round cap used when none is given: ten times the scaled bound, with the
/// scale at least 8.
pub fn default_max_rounds(protocol: Protocol, expr: f64) -> Round {
    (10.0 * protocol.constant().max(8.0) * expr.max(1.0)).ceil() as Round
}

struct Context<'a> {
    graph: &'a Graph,
    params: &'a Params,
    leader: NodeId,
    d: u64,
    d_hat: u64,
    l_hat: u64,
    p: usize,
    max_rounds: Round,
    failures: Vec<String>,
    outputs: BTreeMap<NodeId, String>,
}

impl Context<'_> {
    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    fn simulate<P: NodeProgram>(
        &self,
        programs: BTreeMap<NodeId, P>,
    ) -> Result<(Trace, RunReport<P::Output>), RunError> {
        Ok(simulate(self.graph, programs, self.max_rounds)?)
    }

    fn expect_all<T: PartialEq + fmt::Debug>(
        &mut self,
        what: &str,
        values: impl IntoIterator<Item = (NodeId, T)>,
        want: &T,
    ) {
        for (id, v) in values {
            if v != *want {
                self.fail(format!("node {id}: {what} {v:?}, expected {want:?}"));
            }
        }
    }
}

fn check_sources(protocol: Protocol, graph: &Graph, params: &Params) -> Result<(), RunError> {
    let msgs = &params.messages;
    if protocol.needs_sources() && protocol != Protocol::Gossip && msgs.is_empty() {
        return Err(RunError::Usage(format!(
            "{protocol} needs at least one source"
        )));
    }
    if protocol == Protocol::Broadcast && msgs.len() != 1 {
        return Err(RunError::Usage("broadcast takes exactly one source".into()));
    }
    if !protocol.needs_sources() && !msgs.is_empty() {
        return Err(RunError::Usage(format!("{protocol} takes no messages")));
    }
    if let Some(id) = msgs.keys().find(|id| !graph.contains(**id)) {
        return Err(ConfigError::UnknownNode(*id).into());
    }
    Ok(())
}

/// Runs one protocol and compares every node's output with an oracle.
pub fn run(protocol: Protocol, graph: &Graph, params: &Params) -> Result<RunResult, RunError> {
    check_sources(protocol, graph, params)?;
    let msgs = &params.messages;
    let d = graph.diameter();
    let d_hat = params.d_hat.unwrap_or(d);
    let l_hat = params.l_hat.unwrap_or_else(|| {
        default_l_hat(graph.max_id()).max(graph.label_range().next_power_of_two())
    });
    let max_len = msgs.values().map(BitString::len).max().unwrap_or(0);
    let p = params.p.unwrap_or(max_len);
    let m = message_space(p);
    let k = msgs.len();
    let leader = params.leader.unwrap_or(graph.max_id());
    let expr_d = if protocol == Protocol::Elect {
        d_hat
    } else {
        d
    };
    let expr = upper_expr(protocol, graph.len(), expr_d, l_hat, m, k, p);
    let mut cx = Context {
        graph,
        params,
        leader,
        d,
        d_hat,
        l_hat,
        p,
        max_rounds: params
            .max_rounds
            .unwrap_or_else(|| default_max_rounds(protocol, expr)),
        failures: Vec::new(),
        outputs: BTreeMap::new(),
    };
    let (trace, rounds) = match protocol {
        Protocol::Broadcast => run_broadcast(&mut cx)?,
        Protocol::Elect => run_elect(&mut cx)?,
        Protocol::Diameter => run_diameter(&mut cx)?,
        Protocol::Collect => run_collect(&mut cx)?,
        Protocol::Msglen => run_msglen(&mut cx)?,
        Protocol::Dfs => run_dfs(&mut cx)?,
        Protocol::Gossip => run_gossip(&mut cx)?,
        Protocol::MbProv => run_multi(&mut cx, Variant::WithProvenance)?,
        Protocol::MbNoProv => run_multi(&mut cx, Variant::WithoutProvenance)?,
    };
    let task = match protocol {
        Protocol::Broadcast => Some(Task::Broadcast),
        Protocol::MbProv => Some(Task::MultiBroadcastProv),
        Protocol::MbNoProv => Some(Task::MultiBroadcastNoProv),
        _ => None,
    };
    let lower_floor = task.and_then(|t| lower_bound(t, d, l_hat, m, k as u64).ok());
    let mut bound_checks = vec![BoundCheck::upper(
        "upper",
        rounds as f64,
        protocol.constant() * expr,
    )];
    if let Some(floor) = lower_floor {
        bound_checks.push(BoundCheck::lower("lower", rounds as f64, floor as f64));
    }
    Ok(RunResult {
        summary: RunSummary {
            protocol,
            n: graph.len(),
            d,
            l: l_hat,
            m,
            k,
            p,
            measured_rounds: rounds,
            upper_expr: expr,
            lower_floor,
            outputs: cx.outputs,
            failures: cx.failures,
            bound_checks,
        },
        trace,
    })
}

fn run_broadcast(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let (&source, m) = cx.params.messages.iter().next().expect("checked");
    let programs = broadcast_programs(cx.graph, source, m, WaveConfig::default())?;
    let (trace, report) = cx.simulate(programs)?;
    let dist = cx.graph.distances(source);
    let code = 3 * encode(m).len() as u64;
    let mut offsets = BTreeSet::new();
    for (id, out) in &report.outputs {
        cx.outputs.insert(*id, out.to_string());
        offsets.insert(report.completion[id] as i64 - (code + dist[id]) as i64);
    }
    cx.expect_all("decoded", report.outputs.clone(), m);
    if offsets.len() != 1 || !offsets.iter().all(|c| (0..=2).contains(c)) {
        cx.fail(format!(
            "completion offsets {offsets:?} are not one constant in 0..=2"
        ));
    }
    Ok((trace, report.total_rounds))
}

fn run_elect(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let programs = elect_leader(cx.graph, cx.d_hat, cx.l_hat)?;
    let (trace, report) = cx.simulate(programs)?;
    for (id, out) in &report.outputs {
        cx.outputs.insert(*id, out.to_string());
    }
    if cx.d_hat >= cx.d {
        let want = cx.graph.max_id();
        cx.expect_all("leader", report.outputs.clone(), &want);
    }
    Ok((trace, report.total_rounds))
}

fn run_diameter(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let programs = estimate_diameter(cx.graph, cx.leader)?;
    let (trace, report) = cx.simulate(programs)?;
    let dist = cx.graph.distances(cx.leader);
    let first = report.outputs[&cx.leader].0.d_tilde;
    for (id, (est, _)) in &report.outputs {
        cx.outputs.insert(
            *id,
            format!("d_tilde={} dist={}", est.d_tilde, est.echo_dist),
        );
        if est.echo_dist != dist[id] {
            cx.failures.push(format!(
                "node {id}: distance {} expected {}",
                est.echo_dist, dist[id]
            ));
        }
    }
    cx.expect_all(
        "estimate",
        report.outputs.iter().map(|(id, o)| (*id, o.0.d_tilde)),
        &first,
    );
    if !(cx.d <= first && first <= 2 * cx.d + 7) {
        cx.fail(format!(
            "estimate {first} outside [{}, {}]",
            cx.d,
            2 * cx.d + 7
        ));
    }
    Ok((trace, report.total_rounds))
}

fn run_collect(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let msgs = &cx.params.messages;
    let programs = collect_messages(cx.graph, cx.leader, msgs, cx.p)?;
    let (trace, report) = cx.simulate(programs)?;
    let want = or_oracle(msgs.values(), cx.p);
    let ((est, _), (collected, rec)) = &report.outputs[&cx.leader];
    if collected.bits.as_ref() != Some(&want) {
        cx.fail(format!(
            "leader collected {:?}, expected {want}",
            collected.bits
        ));
    }
    let limit = est.d_tilde + 3 * cx.p as u64 + 12;
    if rec.len - calibration_len() > limit {
        cx.fail(format!(
            "collection took {} rounds, limit {limit}",
            rec.len - calibration_len()
        ));
    }
    for (id, (_, (c, _))) in &report.outputs {
        let shown = match &c.bits {
            Some(b) => b.to_string(),
            None => format!("dist={}", c.dist),
        };
        cx.outputs.insert(*id, shown);
    }
    Ok((trace, report.total_rounds))
}

fn run_msglen(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let programs = get_message_length(cx.graph, cx.leader, &cx.params.messages)?;
    let (trace, report) = cx.simulate(programs)?;
    let want = cx
        .params
        .messages
        .values()
        .map(BitString::len)
        .max()
        .unwrap_or(0) as u64;
    for (id, (_, (learned, _))) in &report.outputs {
        cx.outputs.insert(*id, format!("p={}", learned.p));
    }
    cx.expect_all(
        "length",
        report.outputs.iter().map(|(id, o)| (*id, o.1 .0.p)),
        &want,
    );
    Ok((trace, report.total_rounds))
}

fn run_dfs(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let programs = dfs(cx.graph, cx.leader, cx.l_hat)?;
    let (trace, report) = cx.simulate(programs)?;
    let want = reference_dfs(cx.graph, cx.leader);
    let n = cx.graph.len() as u64;
    for (id, (out, _)) in &report.outputs {
        cx.outputs
            .insert(*id, format!("number={} n={}", out.number, out.n));
        if out.number != want[id] || out.n != n {
            cx.failures.push(format!(
                "node {id}: number {} of {}, expected {} of {n}",
                out.number, out.n, want[id]
            ));
        }
    }
    Ok((trace, report.total_rounds))
}

fn run_gossip(cx: &mut Context) -> Result<(Trace, Round), RunError> {
    let msgs = &cx.params.messages;
    let programs = gossip(cx.graph, msgs, cx.d_hat, cx.l_hat)?;
    let (trace, report) = cx.simulate(programs)?;
    let order = reference_dfs(cx.graph, cx.graph.max_id());
    let mut want: Vec<(u64, BitString)> =
        order.iter().map(|(id, k)| (*k, msgs[id].clone())).collect();
    want.sort();
    for (id, (_, (out, _))) in &report.outputs {
        let shown: Vec<String> = out
            .messages
            .iter()
            .map(|(k, m)| format!("{k}:{m}"))
            .collect();
        cx.outputs.insert(*id, shown.join(" "));
    }
    cx.expect_all(
        "messages",
        report
            .outputs
            .iter()
            .map(|(id, o)| (*id, o.1 .0.messages.clone())),
        &want,
    );
    Ok((trace, report.total_rounds))
}

fn show_multi(out: &MultiOutput, variant: Variant) -> String {
    match (&out.pairs, variant) {
        (Some(pairs), Variant::WithProvenance) => {
            let parts: Vec<String> = pairs.iter().map(|(id, m)| format!("{id}:{m}")).collect();
            parts.join(" ")
        }
        _ => {
            let parts: Vec<String> = out.messages.iter().map(|m| format!("\"{m}\"")).collect();
            parts.join(" ")
        }
    }
}

fn run_multi(cx: &mut Context, variant: Variant) -> Result<(Trace, Round), RunError> {
    let msgs = &cx.params.messages;
    let programs = multi_broadcast(cx.graph, msgs, variant, cx.d_hat, cx.l_hat)?;
    let (trace, report) = cx.simulate(programs)?;
    let distinct: BTreeSet<BitString> = msgs.values().cloned().collect();
    for (id, out) in &report.outputs {
        cx.outputs.insert(*id, show_multi(out, variant));
        if out.messages != distinct {
            cx.failures
                .push(format!("node {id}: messages {:?}", out.messages));
        }
        if variant == Variant::WithProvenance && out.pairs.as_ref() != Some(msgs) {
            cx.failures
                .push(format!("node {id}: pairs {:?}", out.pairs));
        }
    }
    Ok((trace, report.total_rounds))
}

/// Random inputs for `protocol`: `k` sources (all nodes for gossip, one for
/// broadcast, a random count when `None`) with messages of at most `p`
/// bits, and a random leader.
pub fn random_params(
    protocol: Protocol,
    graph: &Graph,
    k: Option<usize>,
    p: usize,
    rng: &mut impl Rng,
) -> Params {
    let mut ids = graph.ids().to_vec();
    ids.shuffle(rng);
    let k = match protocol {
        Protocol::Broadcast => 1,
        Protocol::Gossip => graph.len(),
        _ if !protocol.needs_sources() => 0,
        _ => k
            .unwrap_or_else(|| rng.gen_range(1..=graph.len()))
            .min(graph.len()),
    };
    let min_len = usize::from(matches!(protocol, Protocol::Broadcast | Protocol::Gossip));
    let messages = ids
        .iter()
        .take(k)
        .map(|&id| {
            let len = rng.gen_range(min_len..=p.max(min_len));
            (id, (0..len).map(|_| rng.gen_bool(0.5)).collect())
        })
        .collect();
    let leader = matches!(
        protocol,
        Protocol::Diameter | Protocol::Collect | Protocol::Msglen | Protocol::Dfs
    )
    .then(|| ids[rng.gen_range(0..ids.len())]);
    Params {
        messages,
        leader,
        p: (protocol == Protocol::Collect).then_some(p),
        ..Params::default()
    }
}

/// [`random_params`] driven by a seed.
pub fn seeded_params(
    protocol: Protocol,
    graph: &Graph,
    k: Option<usize>,
    p: usize,
    seed: u64,
) -> Params {
    random_params(protocol, graph, k, p, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Random non-empty messages of at most `max_len` bits for `ids`.
pub fn seeded_messages(ids: &[NodeId], max_len: usize, seed: u64) -> BTreeMap<NodeId, BitString> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.iter()
        .map(|&id| {
            let len = rng.gen_range(1..=max_len.max(1));
            (id, (0..len).map(|_| rng.gen_bool(0.5)).collect())
        })
        .collect()
}
