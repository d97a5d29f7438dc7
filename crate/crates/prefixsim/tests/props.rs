//! Property tests: structural invariants that must hold for arbitrary
//! inputs, checked on randomized cases beyond the fixed acceptance seeds.

mod common;

use common::FlatCache;
use prefixsim::cost_model::ModelConfig;
use prefixsim::radix_cache::{RadixTree, TokenId};
use prefixsim::workload::{load_trace, save_trace, Request, Trace};
use proptest::collection::vec;
use proptest::prelude::*;
use std::collections::BTreeSet;

/// A short token sequence over a tiny alphabet, so sequences share prefixes
/// often enough to exercise splits and checkpoint-boundary cuts.
fn seq_strategy() -> impl Strategy<Value = Vec<TokenId>> {
    vec(0u32..4, 1..40)
}

/// A sequence plus a checkpoint set drawn from its valid positions
/// (always includes the end, sometimes interior cuts).
fn insert_strategy() -> impl Strategy<Value = (Vec<TokenId>, Vec<usize>)> {
    seq_strategy().prop_flat_map(|seq| {
        let len = seq.len();
        (Just(seq), vec(1..=len, 0..3))
    })
}

fn checkpoint_set(len: usize, extra: &[usize]) -> BTreeSet<usize> {
    let mut s: BTreeSet<usize> = extra.iter().copied().collect();
    s.insert(len);
    s
}

fn micro_tree() -> RadixTree {
    RadixTree::new(ModelConfig::hybrid(1, 2, 2, 64, 16))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // Byte accounting stays exact and invariants hold through arbitrary
    // insert / lookup / evict interleavings, with and without block padding.
    #[test]
    fn accounting_survives_random_ops(
        inserts in vec(insert_strategy(), 1..20),
        evict_picks in vec(any::<prop::sample::Index>(), 0..10),
        pad in prop::option::of(2usize..8),
    ) {
        let mut tree = match pad {
            Some(b) => micro_tree().with_kv_block_pad(b),
            None => micro_tree(),
        };
        for (seq, extra) in &inserts {
            tree.insert(seq, &checkpoint_set(seq.len(), extra)).unwrap();
            prop_assert_eq!(tree.total_bytes(), tree.recompute_total_bytes());
            tree.check_invariants().map_err(TestCaseError::fail)?;
        }
        for idx in evict_picks {
            let cands = tree.evict_candidates();
            if cands.is_empty() {
                break;
            }
            tree.remove_node(cands[idx.index(cands.len())]).unwrap();
            prop_assert_eq!(tree.total_bytes(), tree.recompute_total_bytes());
            tree.check_invariants().map_err(TestCaseError::fail)?;
        }
    }

    // The dry-run price equals the realized insert delta on a quiescent tree.
    #[test]
    fn plan_matches_insert_delta(
        prefill in vec(insert_strategy(), 0..12),
        target in insert_strategy(),
        pad in prop::option::of(2usize..8),
    ) {
        let mut tree = match pad {
            Some(b) => micro_tree().with_kv_block_pad(b),
            None => micro_tree(),
        };
        for (seq, extra) in &prefill {
            tree.insert(seq, &checkpoint_set(seq.len(), extra)).unwrap();
        }
        let (seq, extra) = target;
        let ckpts = checkpoint_set(seq.len(), &extra);
        let planned = tree.plan_insert_bytes(&seq, &ckpts).unwrap();
        let before = tree.total_bytes().0;
        let delta = tree.insert(&seq, &ckpts).unwrap();
        prop_assert_eq!(planned, delta);
        prop_assert_eq!(before + delta, tree.total_bytes().0);
    }

    // Without SSM layers every cached byte is sliceable, so reuse is the
    // longest common prefix against everything ever inserted.
    #[test]
    fn transformer_lookup_is_longest_common_prefix(
        inserts in vec(seq_strategy(), 1..15),
        probe in seq_strategy(),
    ) {
        let mut tree = RadixTree::new(ModelConfig::pure_transformer(2, 2, 64));
        let mut oracle = FlatCache::new(false);
        for seq in &inserts {
            tree.insert(seq, &BTreeSet::from([seq.len()])).unwrap();
            oracle.admit(seq.clone(), BTreeSet::new());
            let r = tree.lookup(seq);
            prop_assert_eq!(r.matched_len, seq.len());
        }
        let r = tree.lookup(&probe);
        prop_assert_eq!(r.reuse_len, oracle.reuse(&probe));
        prop_assert_eq!(r.matched_len, r.reuse_len);
    }

    // With SSM layers, reuse never exceeds the raw match and always lands on
    // a checkpoint recorded for a sequence sharing that prefix.
    #[test]
    fn hybrid_reuse_matches_flat_oracle(
        inserts in vec(insert_strategy(), 1..15),
        probe in seq_strategy(),
    ) {
        let mut tree = micro_tree();
        let mut oracle = FlatCache::new(true);
        for (seq, extra) in &inserts {
            let ckpts = checkpoint_set(seq.len(), extra);
            tree.insert(seq, &ckpts).unwrap();
            oracle.admit(seq.clone(), ckpts);
        }
        let r = tree.lookup(&probe);
        prop_assert!(r.reuse_len <= r.matched_len);
        prop_assert_eq!(r.matched_len, oracle.matched(&probe));
        prop_assert_eq!(r.reuse_len, oracle.reuse(&probe));
    }

    // Traces survive a JSONL write/read round trip bit-for-bit, including
    // fractional arrival timestamps.
    #[test]
    fn trace_roundtrips_through_jsonl(
        raw in vec((any::<u64>(), 0.0f64..1e9, seq_strategy(), vec(0u32..4, 0..10)), 1..20),
    ) {
        let mut arrivals: Vec<f64> = raw.iter().map(|r| r.1).collect();
        arrivals.sort_by(f64::total_cmp);
        // one request per session: loader validation constrains ids and
        // arrival order only within a session
        let requests: Vec<Request> = raw
            .into_iter()
            .zip(arrivals)
            .enumerate()
            .map(|(i, ((rid, _, input, output), at))| Request {
                session_id: i as u64,
                request_id: rid,
                arrival_ms: at,
                input_tokens: input,
                output_tokens: output,
            })
            .collect();
        let trace = Trace { requests };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        save_trace(&trace, &path).unwrap();
        let back = load_trace(&path).unwrap();
        prop_assert_eq!(back.len(), trace.len());
        for (a, b) in trace.iter().zip(back.iter()) {
            prop_assert_eq!(a.session_id, b.session_id);
            prop_assert_eq!(a.request_id, b.request_id);
            prop_assert_eq!(a.arrival_ms.to_bits(), b.arrival_ms.to_bits());
            prop_assert_eq!(&a.input_tokens, &b.input_tokens);
            prop_assert_eq!(&a.output_tokens, &b.output_tokens);
        }
    }
}
