use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::run::{random_params, run, Protocol};
use crate::codec::{decode, decode_stream, encode, BitString};
use crate::engine::{simulate, Graph, NodeId};
use crate::graphs::{generate, prefix_oracle, Family, GraphSpec};
use crate::multicast::{compute_schedule, multi_broadcast, Variant};
use crate::phase::{default_l_hat, id_bits};
use crate::traversal::{dfs, ControlWord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Codec,
    Waves,
    Traversal,
    Multicast,
    All,
}

impl Suite {
    pub const EACH: [Suite; 4] = [
        Suite::Codec,
        Suite::Waves,
        Suite::Traversal,
        Suite::Multicast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Codec => "codec",
            Suite::Waves => "waves",
            Suite::Traversal => "traversal",
            Suite::Multicast => "multicast",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "codec" => Ok(Suite::Codec),
            "waves" => Ok(Suite::Waves),
            "traversal" => Ok(Suite::Traversal),
            "multicast" => Ok(Suite::Multicast),
            "all" => Ok(Suite::All),
            _ => Err(format!("unknown suite {s:?}")),
        }
    }
}

/// Outcome of one named check over all of its cases.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub name: String,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Recorder {
    suite: Suite,
    results: Vec<CheckResult>,
}

impl Recorder {
    fn check(&mut self, name: &str, case: impl fmt::Display, ok: Result<(), String>) {
        let pos = match self.results.iter().position(|r| r.name == name) {
            Some(i) => i,
            None => {
                self.results.push(CheckResult {
                    suite: self.suite,
                    name: name.to_string(),
                    cases: 0,
                    failures: Vec::new(),
                });
                self.results.len() - 1
            }
        };
        let r = &mut self.results[pos];
        r.cases += 1;
        if let Err(e) = ok {
            r.failures.push(format!("{case}: {e}"));
        }
    }
}

fn corpus(sizes: &[usize]) -> Vec<(GraphSpec, Graph)> {
    let mut out = Vec::new();
    for family in Family::ALL {
        for (i, &n) in sizes.iter().enumerate() {
            let spec = GraphSpec::new(family, n, 100 + i as u64);
            let g = generate(&spec).expect("corpus graph");
            out.push((spec, g));
        }
    }
    out
}

fn all_strings(max_len: usize) -> impl Iterator<Item = BitString> {
    (0..=max_len).flat_map(|len| (0..1u64 << len).map(move |v| BitString::from_uint_width(v, len)))
}

fn codec_suite(r: &mut Recorder) {
    for m in all_strings(10) {
        let c = encode(&m);
        let ok = if decode(&c).as_ref() != Ok(&m) {
            Err(format!("decoded {:?}", decode(&c)))
        } else if c.len() != 2 * m.len() + 4 {
            Err(format!("codeword has {} bits", c.len()))
        } else {
            Ok(())
        };
        r.check("round trip and length law", &m, ok);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let msgs: Vec<BitString> = (0..rng.gen_range(1..6))
            .map(|_| {
                (0..rng.gen_range(0..8))
                    .map(|_| rng.gen_bool(0.5))
                    .collect()
            })
            .collect();
        let mut stream = BitString::new();
        for m in &msgs {
            stream.extend_from(&encode(m));
        }
        let ok = match decode_stream(&stream) {
            Ok(got) if got == msgs => Ok(()),
            other => Err(format!("{other:?}")),
        };
        r.check("stream splitting", case, ok);
        let cut = stream.prefix(stream.len() - 1);
        let ok = match decode_stream(&cut) {
            Err(_) => Ok(()),
            Ok(got) => Err(format!("truncated stream decoded to {got:?}")),
        };
        r.check("truncated stream rejected", case, ok);
    }
}

fn protocol_checks(r: &mut Recorder, protocols: &[Protocol], sizes: &[usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (spec, g) in corpus(sizes) {
        for &protocol in protocols {
            let params = random_params(protocol, &g, None, 5, &mut rng);
            let ok = match run(protocol, &g, &params) {
                Ok(res) => {
                    let s = res.summary;
                    let reception = res.trace.check_reception(&g);
                    if let Err(e) = reception {
                        Err(e)
                    } else if !s.failures.is_empty() {
                        Err(s.failures.join("; "))
                    } else if let Some(b) = s.bound_checks.iter().find(|b| !b.pass) {
                        Err(format!(
                            "{} bound: measured {} vs {}",
                            b.name, b.measured, b.bound
                        ))
                    } else {
                        Ok(())
                    }
                }
                Err(e) => Err(e.to_string()),
            };
            r.check(&format!("{protocol} matches oracle and bounds"), &spec, ok);
        }
    }
}

fn token_adjacency(g: &Graph) -> Result<(), String> {
    let root = g.max_id();
    let l_hat = default_l_hat(root).max(g.label_range().next_power_of_two());
    let programs = dfs(g, root, l_hat).map_err(|e| e.to_string())?;
    let (_, report) = simulate(g, programs, 10_000_000).map_err(|e| e.to_string())?;
    let outputs: BTreeMap<NodeId, _> = report
        .outputs
        .into_iter()
        .map(|(id, (o, _))| (id, o))
        .collect();
    let holder = |round| {
        outputs.iter().find_map(|(id, o)| {
            o.log
                .tenures
                .iter()
                .any(|&(a, b)| a <= round && round <= b)
                .then_some(*id)
        })
    };
    for (id, o) in &outputs {
        for (end, word) in &o.log.heard {
            if matches!(word, ControlWord::Done { .. }) {
                continue;
            }
            match holder(*end) {
                Some(t) if g.are_adjacent(*id, t) => {}
                t => return Err(format!("{id} decoded {word:?} at {end} with holder {t:?}")),
            }
        }
    }
    Ok(())
}

fn multicast_structure(r: &mut Recorder, sizes: &[usize]) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (spec, g) in corpus(sizes) {
        for variant in [Variant::WithProvenance, Variant::WithoutProvenance] {
            let params = random_params(Protocol::MbProv, &g, None, 3, &mut rng);
            let l_hat = default_l_hat(g.max_id()).max(g.label_range().next_power_of_two());
            let width = id_bits(l_hat) as usize;
            let ids: Vec<BitString> = params
                .messages
                .keys()
                .map(|id| BitString::from_uint_width(id.0, width))
                .collect();
            let outputs = multi_broadcast(&g, &params.messages, variant, g.diameter(), l_hat)
                .map_err(|e| e.to_string())
                .and_then(|p| simulate(&g, p, 10_000_000).map_err(|e| e.to_string()));
            let (schedule, prefixes) = match outputs {
                Ok((_, report)) => {
                    let first = report.outputs.values().next().map(|o| o.phases.clone());
                    let schedule = report
                        .outputs
                        .iter()
                        .find(|(_, o)| {
                            o.phases != compute_schedule(&o.inputs)
                                || Some(&o.phases) != first.as_ref()
                        })
                        .map_or(Ok(()), |(id, _)| {
                            Err(format!("node {id} logged a different schedule"))
                        });
                    let prefixes = report
                        .outputs
                        .iter()
                        .find(|(_, o)| {
                            o.prefix_history.iter().enumerate().any(|(i, set)| {
                                set.prefixes() != prefix_oracle(&ids, i + 1).as_slice()
                            })
                        })
                        .map_or(Ok(()), |(id, _)| {
                            Err(format!("node {id} holds wrong id prefixes"))
                        });
                    (schedule, prefixes)
                }
                Err(e) => (Err(e.clone()), Err(e)),
            };
            r.check(
                "schedules agree with the computed schedule",
                &spec,
                schedule,
            );
            r.check("id prefixes match the prefix oracle", &spec, prefixes);
        }
    }
}

fn run_suite(suite: Suite) -> Vec<CheckResult> {
    let mut r = Recorder {
        suite,
        results: Vec::new(),
    };
    match suite {
        Suite::Codec => codec_suite(&mut r),
        Suite::Waves => protocol_checks(
            &mut r,
            &[
                Protocol::Broadcast,
                Protocol::Elect,
                Protocol::Diameter,
                Protocol::Collect,
                Protocol::Msglen,
            ],
            &[1, 6, 15, 27],
            2,
        ),
        Suite::Traversal => {
            protocol_checks(&mut r, &[Protocol::Dfs, Protocol::Gossip], &[1, 6, 14], 3);
            for (spec, g) in corpus(&[2, 9, 20]) {
                r.check(
                    "words decoded only next to the token",
                    &spec,
                    token_adjacency(&g),
                );
            }
        }
        Suite::Multicast => {
            protocol_checks(
                &mut r,
                &[Protocol::MbProv, Protocol::MbNoProv],
                &[1, 7, 18],
                4,
            );
            multicast_structure(&mut r, &[3, 12]);
        }
        Suite::All => unreachable!(),
    }
    r.results
}

/// Runs the invariant checks of one suite, or of every suite for `All`.
pub fn verify(suite: Suite) -> Vec<CheckResult> {
    match suite {
        Suite::All => Suite::EACH.into_iter().flat_map(run_suite).collect(),
        s => run_suite(s),
    }
}
