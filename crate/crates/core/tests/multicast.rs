use std::collections::{BTreeMap, BTreeSet};

use beepnet::graphs::{generate, prefix_oracle, Family, GraphSpec};
use beepnet::multicast::{
    compute_schedule, lower_bound, multi_broadcast_noprov, multi_broadcast_prov, MultiOutput, Task,
};
use beepnet::phase::id_bits;
use beepnet::{simulate, BitString, Graph, NodeId, Round};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<Graph> {
    let mut graphs = Vec::new();
    for family in Family::ALL {
        for (n, seed) in [(1, 0), (2, 1), (7, 2), (16, 3), (25, 4)] {
            graphs.push(generate(&GraphSpec::new(family, n, seed)).unwrap());
        }
    }
    graphs
        .push(generate(&GraphSpec::new(Family::RandomTree, 20, 8).with_label_range(300)).unwrap());
    graphs
}

fn l_hat(g: &Graph) -> u64 {
    (g.max_id().0 + 1).next_power_of_two()
}

fn random_sources(
    rng: &mut ChaCha8Rng,
    g: &Graph,
    k: usize,
    max_len: usize,
) -> BTreeMap<NodeId, BitString> {
    let mut ids = g.ids().to_vec();
    ids.shuffle(rng);
    ids.into_iter()
        .take(k)
        .map(|id| {
            let len = rng.gen_range(0..=max_len);
            (id, (0..len).map(|_| rng.gen_bool(0.5)).collect())
        })
        .collect()
}

fn id_string(id: NodeId, width: usize) -> BitString {
    BitString::from_uint_width(id.0, width)
}

fn check_common(
    g: &Graph,
    msgs: &BTreeMap<NodeId, BitString>,
    outputs: &BTreeMap<NodeId, MultiOutput>,
) {
    let width = id_bits(l_hat(g)) as usize;
    let ids: Vec<BitString> = msgs.keys().map(|id| id_string(*id, width)).collect();
    let first = outputs.values().next().unwrap();
    for out in outputs.values() {
        assert_eq!(out.phases, compute_schedule(&out.inputs));
        assert_eq!(out.phases, first.phases);
        let mut previous = 1;
        for (i, set) in out.prefix_history.iter().enumerate() {
            assert_eq!(set.prefixes(), prefix_oracle(&ids, i + 1).as_slice());
            assert!(set.len() <= 2 * previous && set.len() <= msgs.len());
            previous = set.len();
        }
    }
}

#[test]
fn with_provenance_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for g in corpus() {
        let k = rng.gen_range(1..=g.len().min(5));
        let msgs = random_sources(&mut rng, &g, k, 4);
        let programs = multi_broadcast_prov(&g, &msgs, g.diameter(), l_hat(&g)).unwrap();
        let (_, report) = simulate(&g, programs, 1_000_000).unwrap();
        check_common(&g, &msgs, &report.outputs);
        for out in report.outputs.values() {
            assert_eq!(out.pairs.as_ref(), Some(&msgs));
            assert_eq!(out.prefix_history.len(), id_bits(l_hat(&g)) as usize);
        }
    }
}

#[test]
fn without_provenance_matches_set_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for g in corpus() {
        let k = rng.gen_range(1..=g.len());
        let msgs = random_sources(&mut rng, &g, k, 3);
        let want: BTreeSet<BitString> = msgs.values().cloned().collect();
        let programs = multi_broadcast_noprov(&g, &msgs, g.diameter(), l_hat(&g)).unwrap();
        let (_, report) = simulate(&g, programs, 1_000_000).unwrap();
        check_common(&g, &msgs, &report.outputs);
        for out in report.outputs.values() {
            assert_eq!(out.messages, want);
            let crowded = out
                .prefix_history
                .iter()
                .any(|p| p.len() as u64 > out.d_tilde);
            assert_eq!(out.aborted, crowded);
            let padded: Vec<BitString> = msgs
                .values()
                .map(|m| beepnet::multicast::pad_message(m, out.p as usize))
                .collect();
            for (i, set) in out.message_history.iter().enumerate() {
                assert_eq!(set.prefixes(), prefix_oracle(&padded, i + 1).as_slice());
            }
        }
    }
}

fn rounds_used(outputs: &BTreeMap<NodeId, MultiOutput>) -> Round {
    outputs
        .values()
        .map(|o| o.phases.last().unwrap().end())
        .max()
        .unwrap()
}

#[test]
fn measured_rounds_respect_floors() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for g in corpus().into_iter().filter(|g| g.len() >= 2) {
        let msgs = random_sources(&mut rng, &g, 2.max(g.len() / 3), 3);
        let k = msgs.len() as u64;
        let p = msgs.values().map(BitString::len).max().unwrap() as u32;
        let m = 1u64 << (p + 1);
        let programs = multi_broadcast_prov(&g, &msgs, g.diameter(), l_hat(&g)).unwrap();
        let (_, report) = simulate(&g, programs, 1_000_000).unwrap();
        let floor = lower_bound(Task::MultiBroadcastProv, g.diameter(), l_hat(&g), m, k).unwrap();
        assert!(floor <= rounds_used(&report.outputs));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn distinct_messages_on_random_graphs(
        seed in 0u64..1000,
        n in 2usize..14,
        k in 1usize..6,
    ) {
        let g = generate(&GraphSpec::er(n, 0.35, seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let msgs = random_sources(&mut rng, &g, k, 3);
        let want: BTreeSet<BitString> = msgs.values().cloned().collect();
        let programs = multi_broadcast_noprov(&g, &msgs, g.diameter(), l_hat(&g)).unwrap();
        let (_, report) = simulate(&g, programs, 1_000_000).unwrap();
        for out in report.outputs.values() {
            prop_assert_eq!(&out.messages, &want);
        }
    }
}
