use std::collections::BTreeMap;

use beepnet::graphs::{generate, reference_dfs, Family, GraphSpec};
use beepnet::traversal::{dfs, gossip, ControlWord, DfsOutcome};
use beepnet::{simulate, BitString, Graph, NodeId, Round, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<Graph> {
    let mut graphs = Vec::new();
    for family in Family::ALL {
        for (n, seed) in [(1, 0), (2, 1), (6, 2), (13, 3), (24, 4)] {
            graphs.push(generate(&GraphSpec::new(family, n, seed)).unwrap());
        }
    }
    graphs
        .push(generate(&GraphSpec::new(Family::RandomTree, 15, 9).with_label_range(500)).unwrap());
    graphs
}

fn l_hat(g: &Graph) -> u64 {
    (g.max_id().0 + 1).next_power_of_two()
}

fn run_dfs(g: &Graph, root: NodeId) -> (Trace, BTreeMap<NodeId, DfsOutcome>) {
    let (trace, report) = simulate(g, dfs(g, root, l_hat(g)).unwrap(), 1_000_000).unwrap();
    let outputs = report
        .outputs
        .into_iter()
        .map(|(id, (o, _))| (id, o))
        .collect();
    (trace, outputs)
}

fn holder(outputs: &BTreeMap<NodeId, DfsOutcome>, round: Round) -> Option<NodeId> {
    outputs.iter().find_map(|(id, o)| {
        o.log
            .tenures
            .iter()
            .any(|&(a, b)| a <= round && round <= b)
            .then_some(*id)
    })
}

#[test]
fn numbering_matches_reference() {
    for g in corpus() {
        for root in [g.max_id(), g.ids()[0]] {
            let (_, outputs) = run_dfs(&g, root);
            let want = reference_dfs(&g, root);
            for (id, o) in &outputs {
                assert_eq!(o.number, want[id], "node {id} root {root}");
                assert_eq!(o.n, g.len() as u64);
            }
        }
    }
}

#[test]
fn only_token_neighborhood_beeps() {
    for g in corpus() {
        let root = g.max_id();
        let (trace, outputs) = run_dfs(&g, root);
        let flood = outputs[&root].flood_start;
        let active = trace
            .rounds
            .iter()
            .filter(|r| r.round < flood && !r.beepers.is_empty());
        for record in active {
            let token = holder(&outputs, record.round).expect("token somewhere");
            for b in &record.beepers {
                assert!(
                    *b == token || g.are_adjacent(*b, token),
                    "round {}",
                    record.round
                );
            }
        }
    }
}

#[test]
fn words_are_only_decoded_next_to_the_token() {
    for g in corpus() {
        let root = g.max_id();
        let (_, outputs) = run_dfs(&g, root);
        for (id, o) in &outputs {
            for (end, word) in &o.log.heard {
                if matches!(word, ControlWord::Done { .. }) {
                    continue;
                }
                let token = holder(&outputs, *end).expect("token somewhere");
                assert!(g.are_adjacent(*id, token), "{id} decoded {word:?} at {end}");
            }
        }
    }
}

#[test]
fn gossip_delivers_in_traversal_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for g in corpus() {
        let msgs: BTreeMap<NodeId, BitString> = g
            .ids()
            .iter()
            .map(|&id| {
                let len = rng.gen_range(1..5);
                (id, (0..len).map(|_| rng.gen_bool(0.5)).collect())
            })
            .collect();
        let programs = gossip(&g, &msgs, g.diameter(), l_hat(&g)).unwrap();
        let (_, report) = simulate(&g, programs, 1_000_000).unwrap();
        let order = reference_dfs(&g, g.max_id());
        let mut want: Vec<(u64, BitString)> =
            order.iter().map(|(id, k)| (*k, msgs[id].clone())).collect();
        want.sort();
        for (id, (_, (out, _))) in &report.outputs {
            assert_eq!(out.number, order[id]);
            assert_eq!(out.messages, want, "node {id}");
        }
    }
}
