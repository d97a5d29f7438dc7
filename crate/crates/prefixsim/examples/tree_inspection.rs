//! Poke at the radix cache directly: insert sequences with checkpoints,
//! watch how lookups resume from checkpointed boundaries, probe an incoming
//! request for branch points, and score eviction candidates.
//!
//! Uses a deliberately tiny model so the byte numbers stay readable.
//!
//! Run with: `cargo run --example tree_inspection`

use prefixsim::cost_model::ModelConfig;
use prefixsim::policies::{plan_admission_marconi, score_candidates};
use prefixsim::radix_cache::RadixTree;
use std::collections::BTreeSet;

fn main() {
    let model = ModelConfig::hybrid(1, 2, 2, 64, 16);
    let mut tree = RadixTree::new(model.clone());

    // Session A, round 1: tokens 0..12, checkpoint only at the end.
    let a1: Vec<u32> = (0..12).collect();
    let grew = tree.insert(&a1, &BTreeSet::from([12])).unwrap();
    println!("inserted A1 (12 tokens, checkpoint at 12): +{grew} bytes");

    // Session B shares the first 8 tokens, then diverges. A speculative
    // probe of its input detects the branch before anything is mutated.
    let b1: Vec<u32> = (0..8).chain(100..104).collect();
    let spec = tree.speculative_insert(&b1);
    println!(
        "speculative probe of B1: branch at {}, splits an edge: {}, bare boundary without state: {}",
        spec.branch_pos, spec.creates_intermediate_node, spec.existing_node_missing_ssm
    );

    // The judicious admission plan turns that probe into checkpoint
    // positions (branch point aligned down to the 4-token chunk, plus the
    // end of input+output).
    let mut chunked = model.clone();
    chunked.chunk_size = 4;
    let lookup = tree.lookup(&b1);
    let plan = plan_admission_marconi(&b1, 3, lookup.reuse_len, &tree, chunked.chunk_size, true);
    println!(
        "B1 admission: reuse {} tokens, checkpoints at {:?}",
        lookup.reuse_len,
        plan.checkpoint_set()
    );
    let full: Vec<u32> = b1.iter().copied().chain(1000..1003).collect();
    tree.insert(&full, &plan.checkpoint_set()).unwrap();

    println!("\ntree after both inserts:\n{}", tree.dump_text());
    let stats = tree.stats();
    println!(
        "{} nodes, {} checkpoints, {} B KV + {} B SSM = {} B",
        stats.nodes, stats.checkpoints, stats.kv_bytes, stats.ssm_bytes, stats.total_bytes
    );

    // A later lookup that shares 10 tokens with A1 can only resume from the
    // checkpointed boundary at 8 — SSM states are all-or-nothing, so the
    // extra 2 matched tokens do not help.
    let probe: Vec<u32> = (0..10).chain(555..557).collect();
    let hit = tree.lookup(&probe);
    println!(
        "\nlookup sharing 10 tokens: matched {}, reusable {}",
        hit.matched_len, hit.reuse_len
    );

    // Eviction candidates, scored by recency + alpha x FLOP-efficiency.
    println!("\neviction scores (alpha = 1):");
    for s in score_candidates(&tree, 1.0) {
        println!(
            "  node {:?}: recency {:.2}, flop_eff {:.2}, utility {:.2}",
            s.node, s.recency_norm, s.flop_eff_norm, s.utility
        );
    }
    let victim = score_candidates(&tree, 1.0)
        .into_iter()
        .min_by(|a, b| a.utility.total_cmp(&b.utility))
        .unwrap();
    let freed = tree.remove_node(victim.node).unwrap();
    println!("evicting node {:?} frees {freed} bytes", victim.node);
    tree.check_invariants().expect("tree stays well-formed");
}
