use std::collections::BTreeMap;

use beepnet::graphs::{generate, or_oracle, Family, GraphSpec};
use beepnet::waves::{
    collect_messages, elect_leader, estimate_diameter, get_message_length, run_broadcast, wave_len,
    CollectMessages,
};
use beepnet::{encode, simulate, BitString, Graph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn corpus() -> Vec<Graph> {
    let mut graphs = Vec::new();
    for family in Family::ALL {
        for (n, seed) in [(1, 0), (2, 1), (7, 2), (16, 3), (31, 4)] {
            graphs.push(generate(&GraphSpec::new(family, n, seed)).unwrap());
        }
    }
    graphs
}

fn random_bits(rng: &mut ChaCha8Rng, len: usize) -> BitString {
    (0..len).map(|_| rng.gen_bool(0.5)).collect()
}

#[test]
fn broadcast_layer_discipline_and_completion() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for g in corpus() {
        let source = g.ids()[rng.gen_range(0..g.len())];
        let len = rng.gen_range(1..6);
        let m = random_bits(&mut rng, len);
        let code = encode(&m);
        let (trace, report) = run_broadcast(&g, source, &m, 1000).unwrap();
        trace.check_reception(&g).unwrap();
        let dist = g.distances(source);
        for &u in g.ids() {
            let d = dist[&u];
            let expected: Vec<u64> = (1..=code.len() as u64)
                .filter(|i| code.get(*i as usize - 1) == Some(true))
                .map(|i| 3 * i + d)
                .collect();
            assert_eq!(trace.beep_rounds(u), expected, "node {u}");
            assert_eq!(report.outputs[&u], m);
            assert!(report.completion[&u] <= wave_len(m.len()) + d + 2);
        }
    }
}

#[test]
fn election_finds_max_id() {
    for g in corpus() {
        let d = g.diameter();
        let l_hat = (g.max_id().0 + 1).next_power_of_two();
        let (_, report) = simulate(&g, elect_leader(&g, d, l_hat).unwrap(), 10_000).unwrap();
        assert!(report.outputs.values().all(|l| *l == g.max_id()));
        let bits = u64::from(l_hat.trailing_zeros().max(1));
        assert_eq!(report.total_rounds, bits * (d + 1));
    }
}

#[test]
fn election_with_wide_labels() {
    let g = generate(&GraphSpec::new(Family::RandomTree, 20, 5).with_label_range(1 << 12)).unwrap();
    let (_, report) = simulate(&g, elect_leader(&g, 20, 1 << 12).unwrap(), 10_000).unwrap();
    assert!(report.outputs.values().all(|l| *l == g.max_id()));
}

#[test]
fn estimate_is_agreed_and_bounded() {
    for g in corpus() {
        for leader in [g.ids()[0], g.max_id()] {
            let programs = estimate_diameter(&g, leader).unwrap();
            let (_, report) = simulate(&g, programs, 10_000).unwrap();
            let d = g.diameter();
            let dist = g.distances(leader);
            let first = report.outputs[&leader].0.d_tilde;
            for (u, (est, _)) in &report.outputs {
                assert_eq!(est.d_tilde, first);
                assert_eq!(est.echo_dist, dist[u]);
            }
            assert!(d <= first && first <= 2 * d + 7, "D={d} estimate={first}");
        }
    }
}

#[test]
fn collection_matches_or_and_keeps_residues() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for g in corpus() {
        let leader = g.ids()[rng.gen_range(0..g.len())];
        let p = rng.gen_range(1..7);
        let k = rng.gen_range(1..=g.len());
        let mut msgs = BTreeMap::new();
        for &s in g.ids().iter().take(k) {
            let len = rng.gen_range(0..=p);
            msgs.insert(s, random_bits(&mut rng, len));
        }
        let programs = collect_messages(&g, leader, &msgs, p).unwrap();
        let (trace, report) = simulate(&g, programs, 10_000).unwrap();
        let ((est, _), (collected, rec)) = &report.outputs[&leader];
        assert_eq!(collected.bits.clone().unwrap(), or_oracle(msgs.values(), p));
        assert!(rec.len <= CollectMessages::rounds(est.d_tilde, p) + 2);
        let base = rec.start + wave_len(1);
        let dist = g.distances(leader);
        for (u, (_, (c, _))) in &report.outputs {
            assert_eq!(c.dist, dist[u]);
            let calibrated = base + dist[u];
            for r in trace
                .beep_rounds(*u)
                .into_iter()
                .filter(|r| *r >= calibrated)
            {
                assert_eq!(
                    (r - base + dist[u]) % 3,
                    est.d_tilde % 3,
                    "node {u} round {r}"
                );
            }
        }
    }
}

#[test]
fn message_length_is_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for g in corpus() {
        let leader = g.ids()[rng.gen_range(0..g.len())];
        let mut msgs = BTreeMap::new();
        for &s in g.ids() {
            if rng.gen_bool(0.4) || msgs.is_empty() {
                let len = rng.gen_range(1..9);
                msgs.insert(s, random_bits(&mut rng, len));
            }
        }
        let want = msgs.values().map(BitString::len).max().unwrap() as u64;
        let programs = get_message_length(&g, leader, &msgs).unwrap();
        let (_, report) = simulate(&g, programs, 10_000).unwrap();
        for (_, (learned, _)) in report.outputs.values() {
            assert_eq!(learned.p, want);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn broadcast_decodes_any_message(
        bits in proptest::collection::vec(any::<bool>(), 1..12),
        seed in 0u64..1000,
        n in 2usize..20,
    ) {
        let g = generate(&GraphSpec::er(n, 0.3, seed)).unwrap();
        let m: BitString = bits.into_iter().collect();
        let (_, report) = run_broadcast(&g, g.ids()[0], &m, 2000).unwrap();
        prop_assert!(report.outputs.values().all(|o| *o == m));
    }
}
