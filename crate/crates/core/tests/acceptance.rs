//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use beepnet::graphs::{generate, or_oracle, prefix_oracle, reference_dfs, Family, GraphSpec};
use beepnet::harness::{bench, message_space, upper_expr, write_csv, BenchConfig, Protocol};
use beepnet::multicast::{lower_bound, multi_broadcast, Task, Variant};
use beepnet::phase::{default_l_hat, id_bits};
use beepnet::traversal::{dfs, gossip, ControlWord};
use beepnet::waves::{calibration_len, collect_messages, estimate_diameter, run_broadcast};
use beepnet::{decode, encode, simulate, BitString, Graph, NodeId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CODEC_MAX_LEN: usize = 14;
const CODEC_TIME_LIMIT: Duration = Duration::from_secs(5);
const BROADCAST_GRAPHS: usize = 200;
const BROADCAST_MAX_N: usize = 200;
const BROADCAST_MAX_BITS: usize = 16;
const BROADCAST_OFFSETS: std::ops::RangeInclusive<u64> = 0..=2;
const ESTIMATE_MAX_N: usize = 100;
const ESTIMATE_SLACK: u64 = 7;
const COLLECT_INSTANCES: usize = 500;
const COLLECT_SLACK: u64 = 12;
const DFS_GRAPHS: usize = 200;
const DFS_MAX_N: usize = 100;
const GOSSIP_INSTANCES: usize = 100;
const GOSSIP_MAX_N: usize = 40;
const MB_SOURCE_COUNTS: [usize; 4] = [2, 4, 8, 16];
const MB_MAX_N: usize = 150;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn random_graph(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> (GraphSpec, Graph) {
    let family = *Family::ALL.choose(rng).unwrap();
    let n = rng.gen_range(min_n..=max_n);
    let spec = GraphSpec::new(family, n, rng.gen());
    let g = generate(&spec).expect("generated graph");
    (spec, g)
}

fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitString {
    (0..len).map(|_| rng.gen_bool(0.5)).collect()
}

fn l_hat(g: &Graph) -> u64 {
    default_l_hat(g.max_id()).max(g.label_range().next_power_of_two())
}

fn codec() -> Outcome {
    let start = Instant::now();
    let mut count = 0usize;
    for len in 0..=CODEC_MAX_LEN {
        for v in 0..1u64 << len {
            let m = BitString::from_uint_width(v, len);
            let c = encode(&m);
            if c.len() != 2 * len + 4 {
                return Err(format!("|C({m})| = {}", c.len()));
            }
            if decode(&c).as_ref() != Ok(&m) {
                return Err(format!("{m} does not survive a round trip"));
            }
            count += 1;
        }
    }
    let took = start.elapsed();
    if took > CODEC_TIME_LIMIT {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("{count} messages in {:.2}s", took.as_secs_f64()))
}

fn broadcast() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut c0 = None;
    for _ in 0..BROADCAST_GRAPHS {
        let (spec, g) = random_graph(&mut rng, 1, BROADCAST_MAX_N);
        let source = *g.ids().choose(&mut rng).unwrap();
        let len = rng.gen_range(1..=BROADCAST_MAX_BITS);
        let m = random_bits(&mut rng, len);
        let (_, report) =
            run_broadcast(&g, source, &m, 100_000).map_err(|e| format!("{spec}: {e}"))?;
        let dist = g.distances(source);
        let code = 3 * encode(&m).len() as u64;
        for &u in g.ids() {
            if report.outputs[&u] != m {
                return Err(format!("{spec}: node {u} decoded {}", report.outputs[&u]));
            }
            let offset = report.completion[&u] as i64 - (code + dist[&u]) as i64;
            let fixed = *c0.get_or_insert(offset);
            if offset != fixed || !BROADCAST_OFFSETS.contains(&(fixed as u64)) {
                return Err(format!(
                    "{spec}: node {u} completes with offset {offset}, c0 = {fixed}"
                ));
            }
        }
    }
    Ok(format!("{BROADCAST_GRAPHS} graphs, c0 = {}", c0.unwrap()))
}

fn diameter() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut runs = 0;
    for family in Family::ALL {
        for n in [1, 2, 3, 5, 8, 13, 21, 34, 55, 89, ESTIMATE_MAX_N] {
            let spec = GraphSpec::new(family, n, n as u64);
            let g = generate(&spec).map_err(|e| e.to_string())?;
            for leader in [g.max_id(), *g.ids().choose(&mut rng).unwrap()] {
                let programs = estimate_diameter(&g, leader).map_err(|e| e.to_string())?;
                let (_, report) =
                    simulate(&g, programs, 100_000).map_err(|e| format!("{spec}: {e}"))?;
                let d = g.diameter();
                let agreed: BTreeSet<u64> =
                    report.outputs.values().map(|(e, _)| e.d_tilde).collect();
                let est = *agreed.first().unwrap();
                if agreed.len() != 1 || est < d || est > 2 * d + ESTIMATE_SLACK {
                    return Err(format!(
                        "{spec} leader {leader}: estimates {agreed:?} with D = {d}"
                    ));
                }
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs"))
}

fn collect() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0;
    for _ in 0..COLLECT_INSTANCES {
        let (spec, g) = random_graph(&mut rng, 1, 40);
        let leader = *g.ids().choose(&mut rng).unwrap();
        let p = rng.gen_range(1..=8);
        let k = rng.gen_range(1..=g.len());
        let mut ids = g.ids().to_vec();
        ids.shuffle(&mut rng);
        let msgs: BTreeMap<NodeId, BitString> = ids[..k]
            .iter()
            .map(|&id| {
                let len = rng.gen_range(0..=p);
                (id, random_bits(&mut rng, len))
            })
            .collect();
        let programs = collect_messages(&g, leader, &msgs, p).map_err(|e| e.to_string())?;
        let (_, report) = simulate(&g, programs, 100_000).map_err(|e| format!("{spec}: {e}"))?;
        let ((est, _), (collected, rec)) = &report.outputs[&leader];
        let want = or_oracle(msgs.values(), p);
        if collected.bits.as_ref() != Some(&want) {
            return Err(format!(
                "{spec}: collected {:?}, expected {want}",
                collected.bits
            ));
        }
        let len = rec.len - calibration_len();
        let limit = est.d_tilde + 3 * p as u64 + COLLECT_SLACK;
        if len > limit {
            return Err(format!(
                "{spec}: collection took {len} rounds, limit {limit}"
            ));
        }
        worst = worst.max(len as i64 - (est.d_tilde + 3 * p as u64) as i64);
    }
    Ok(format!(
        "{COLLECT_INSTANCES} instances, length at most D̃+3p+{worst}"
    ))
}

fn holder(
    outputs: &BTreeMap<NodeId, beepnet::traversal::DfsOutcome>,
    round: u64,
) -> Option<NodeId> {
    outputs.iter().find_map(|(id, o)| {
        o.log
            .tenures
            .iter()
            .any(|&(a, b)| a <= round && round <= b)
            .then_some(*id)
    })
}

fn traversal() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = Protocol::Dfs.constant();
    let mut worst: f64 = 0.0;
    for _ in 0..DFS_GRAPHS {
        let (spec, g) = random_graph(&mut rng, 1, DFS_MAX_N);
        let root = *g.ids().choose(&mut rng).unwrap();
        let programs = dfs(&g, root, l_hat(&g)).map_err(|e| e.to_string())?;
        let (_, report) = simulate(&g, programs, 10_000_000).map_err(|e| format!("{spec}: {e}"))?;
        let outputs: BTreeMap<NodeId, _> = report
            .outputs
            .into_iter()
            .map(|(id, (o, _))| (id, o))
            .collect();
        let want = reference_dfs(&g, root);
        for (id, o) in &outputs {
            if o.number != want[id] {
                return Err(format!(
                    "{spec}: node {id} numbered {}, expected {}",
                    o.number, want[id]
                ));
            }
            for (end, word) in &o.log.heard {
                if matches!(word, ControlWord::Done { .. }) {
                    continue;
                }
                match holder(&outputs, *end) {
                    Some(t) if g.are_adjacent(*id, t) => {}
                    t => {
                        return Err(format!(
                            "{spec}: {id} decoded {word:?} at {end}, holder {t:?}"
                        ))
                    }
                }
            }
        }
        let expr = upper_expr(Protocol::Dfs, g.len(), g.diameter(), l_hat(&g), 1, 0, 0);
        let ratio = report.total_rounds as f64 / expr;
        if ratio > c {
            return Err(format!(
                "{spec}: {} rounds is {ratio:.2} x the expression",
                report.total_rounds
            ));
        }
        worst = worst.max(ratio);
    }
    Ok(format!(
        "{DFS_GRAPHS} graphs, worst ratio {worst:.2} <= {c}"
    ))
}

fn gossiping() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = Protocol::Gossip.constant();
    let mut worst: f64 = 0.0;
    for _ in 0..GOSSIP_INSTANCES {
        let (spec, g) = random_graph(&mut rng, 1, GOSSIP_MAX_N);
        let p = rng.gen_range(1..=6);
        let msgs: BTreeMap<NodeId, BitString> = g
            .ids()
            .iter()
            .map(|&id| {
                let len = rng.gen_range(1..=p);
                (id, random_bits(&mut rng, len))
            })
            .collect();
        let programs = gossip(&g, &msgs, g.diameter(), l_hat(&g)).map_err(|e| e.to_string())?;
        let (_, report) = simulate(&g, programs, 10_000_000).map_err(|e| format!("{spec}: {e}"))?;
        let order = reference_dfs(&g, g.max_id());
        let mut want: Vec<(u64, BitString)> =
            order.iter().map(|(id, k)| (*k, msgs[id].clone())).collect();
        want.sort();
        for (id, (_, (out, _))) in &report.outputs {
            if out.messages != want {
                return Err(format!(
                    "{spec}: node {id} holds {} messages, not the expected {}",
                    out.messages.len(),
                    want.len()
                ));
            }
        }
        let max_len = msgs.values().map(BitString::len).max().unwrap();
        let expr = upper_expr(
            Protocol::Gossip,
            g.len(),
            g.diameter(),
            l_hat(&g),
            message_space(max_len),
            g.len(),
            max_len,
        );
        let ratio = report.total_rounds as f64 / expr;
        if ratio > c {
            return Err(format!(
                "{spec}: {} rounds is {ratio:.2} x the expression",
                report.total_rounds
            ));
        }
        worst = worst.max(ratio);
    }
    Ok(format!(
        "{GOSSIP_INSTANCES} instances, worst ratio {worst:.2} <= {c}"
    ))
}

struct MultiRun {
    rounds: u64,
    aborted: bool,
}

fn run_multi(
    g: &Graph,
    msgs: &BTreeMap<NodeId, BitString>,
    variant: Variant,
    spec: &GraphSpec,
) -> Result<MultiRun, String> {
    let l = l_hat(g);
    let width = id_bits(l) as usize;
    let programs = multi_broadcast(g, msgs, variant, g.diameter(), l).map_err(|e| e.to_string())?;
    let (_, report) = simulate(g, programs, 10_000_000).map_err(|e| format!("{spec}: {e}"))?;
    let ids: Vec<BitString> = msgs
        .keys()
        .map(|id| BitString::from_uint_width(id.0, width))
        .collect();
    let distinct: BTreeSet<BitString> = msgs.values().cloned().collect();
    let mut aborted = BTreeSet::new();
    for (id, out) in &report.outputs {
        if out.messages != distinct {
            return Err(format!("{spec}: node {id} output {:?}", out.messages));
        }
        if variant == Variant::WithProvenance && out.pairs.as_ref() != Some(msgs) {
            return Err(format!("{spec}: node {id} pairs {:?}", out.pairs));
        }
        for (i, set) in out.prefix_history.iter().enumerate() {
            if set.prefixes() != prefix_oracle(&ids, i + 1).as_slice() {
                return Err(format!(
                    "{spec}: node {id} holds {set} after prefix round {}",
                    i + 1
                ));
            }
        }
        aborted.insert(out.aborted);
    }
    if aborted.len() != 1 {
        return Err(format!("{spec}: nodes disagree on aborting"));
    }
    Ok(MultiRun {
        rounds: report.total_rounds,
        aborted: aborted.contains(&true),
    })
}

fn sources(
    rng: &mut ChaCha8Rng,
    g: &Graph,
    k: usize,
    max_len: usize,
) -> BTreeMap<NodeId, BitString> {
    let mut ids = g.ids().to_vec();
    ids.shuffle(rng);
    ids[..k]
        .iter()
        .map(|&id| {
            let len = rng.gen_range(0..=max_len);
            (id, random_bits(rng, len))
        })
        .collect()
}

fn ratio_of(protocol: Protocol, g: &Graph, msgs: &BTreeMap<NodeId, BitString>, rounds: u64) -> f64 {
    let p = msgs.values().map(BitString::len).max().unwrap();
    let expr = upper_expr(
        protocol,
        g.len(),
        g.diameter(),
        l_hat(g),
        message_space(p),
        msgs.len(),
        p,
    );
    rounds as f64 / expr
}

fn with_provenance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = Protocol::MbProv.constant();
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for k in MB_SOURCE_COUNTS {
        for n in [k, 40, 90, MB_MAX_N] {
            let family = *Family::ALL.choose(&mut rng).unwrap();
            let spec = GraphSpec::new(family, n, rng.gen());
            let g = generate(&spec).map_err(|e| e.to_string())?;
            let msgs = sources(&mut rng, &g, k, 6);
            let r = run_multi(&g, &msgs, Variant::WithProvenance, &spec)?;
            let ratio = ratio_of(Protocol::MbProv, &g, &msgs, r.rounds);
            if ratio > c {
                return Err(format!(
                    "{spec} k={k}: {} rounds is {ratio:.2} x the expression",
                    r.rounds
                ));
            }
            worst = worst.max(ratio);
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, worst ratio {worst:.2} <= {c}"))
}

fn without_provenance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let c = Protocol::MbNoProv.constant();
    // (label, family, n, k, longest message, expect abort)
    let cases = [
        ("k small, M > k", Family::Path, 40, 3, 4, false),
        ("k small, M <= k", Family::Path, 40, 8, 1, false),
        ("k large, M > k", Family::Complete, 30, 20, 6, true),
        ("k large, M <= k", Family::Star, 30, 20, 2, true),
    ];
    let mut worst: f64 = 0.0;
    for (label, family, n, k, max_len, abort) in cases {
        for seed in 0..3 {
            let spec = GraphSpec::new(family, n, seed);
            let g = generate(&spec).map_err(|e| e.to_string())?;
            let msgs = sources(&mut rng, &g, k, max_len);
            let m = message_space(max_len) as usize;
            if (m > k) != label.ends_with("M > k") {
                return Err(format!("{label}: instance has M = {m}, k = {k}"));
            }
            let r = run_multi(&g, &msgs, Variant::WithoutProvenance, &spec)?;
            if r.aborted != abort {
                return Err(format!("{label} on {spec}: aborted = {}", r.aborted));
            }
            let ratio = ratio_of(Protocol::MbNoProv, &g, &msgs, r.rounds);
            if ratio > c {
                return Err(format!(
                    "{label} on {spec}: {} rounds is {ratio:.2} x the expression",
                    r.rounds
                ));
            }
            worst = worst.max(ratio);
        }
    }
    Ok(format!(
        "4 cases x 3 instances, worst ratio {worst:.2} <= {c}"
    ))
}

fn sweep() -> Vec<BenchConfig> {
    let mut specs = Vec::new();
    for family in Family::ALL {
        for n in [2, 10, 40, 100] {
            specs.push(GraphSpec::new(family, n, n as u64));
        }
    }
    let stars_and_er = vec![
        GraphSpec::new(Family::Star, 12, 1),
        GraphSpec::new(Family::Star, 40, 2),
        GraphSpec::er(30, 0.15, 3),
        GraphSpec::new(Family::Path, 25, 4),
    ];
    vec![
        BenchConfig {
            protocol: Protocol::Broadcast,
            specs,
            trials: 2,
            ks: Vec::new(),
            p: 12,
            seed: 1,
        },
        BenchConfig {
            protocol: Protocol::MbProv,
            specs: stars_and_er.clone(),
            trials: 2,
            ks: vec![2, 4, 8],
            p: 4,
            seed: 2,
        },
        BenchConfig {
            protocol: Protocol::MbNoProv,
            specs: stars_and_er,
            trials: 2,
            ks: vec![2, 4, 8],
            p: 3,
            seed: 3,
        },
    ]
}

fn csv_bytes(cfg: &BenchConfig) -> Result<Vec<u8>, String> {
    let (rows, err) = bench(cfg);
    if let Some(e) = err {
        return Err(format!("{} sweep failed: {e}", cfg.protocol));
    }
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(|e| e.to_string())?;
    Ok(buf)
}

fn floors() -> Outcome {
    let mut rows_checked = 0;
    for cfg in sweep() {
        let task = match cfg.protocol {
            Protocol::Broadcast => Task::Broadcast,
            Protocol::MbProv => Task::MultiBroadcastProv,
            _ => Task::MultiBroadcastNoProv,
        };
        let (rows, err) = bench(&cfg);
        if let Some(e) = err {
            return Err(format!("{} sweep failed: {e}", cfg.protocol));
        }
        for row in rows {
            let Ok(floor) = lower_bound(task, row.d, row.l, row.m, row.k as u64) else {
                continue;
            };
            if floor > row.measured_rounds {
                return Err(format!("{row:?}: floor {floor} above measured"));
            }
            rows_checked += 1;
        }
    }
    Ok(format!("{rows_checked} rows, no violations"))
}

fn determinism() -> Outcome {
    let mut bytes = 0;
    for cfg in sweep() {
        let first = csv_bytes(&cfg)?;
        if first != csv_bytes(&cfg)? {
            return Err(format!("{} sweep differs between runs", cfg.protocol));
        }
        bytes += first.len();
    }
    Ok(format!("{bytes} CSV bytes reproduced"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("codec round trip and length law", codec),
        ("broadcast exactness", broadcast),
        ("diameter estimate bounds", diameter),
        ("message collection", collect),
        ("depth-first traversal", traversal),
        ("gossip", gossiping),
        ("multi-broadcast with provenance", with_provenance),
        ("multi-broadcast without provenance", without_provenance),
        ("lower-bound sandwich", floors),
        ("benchmark determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
