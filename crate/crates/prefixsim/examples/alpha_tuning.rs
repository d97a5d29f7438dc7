//! Online alpha tuning: the eviction utility is `recency + alpha x
//! flop_efficiency`, and the best alpha depends on the workload. With the
//! tuner enabled, a marconi replay starts at alpha = 0 (plain LRU), and at
//! the first eviction it snapshots the cache and starts collecting a
//! bootstrap window of requests. When the window is full it replays the
//! window from the snapshot once per candidate alpha and adopts the
//! hit-rate argmax for the rest of the trace.
//!
//! Run with: `cargo run --example alpha_tuning`

use prefixsim::cost_model::ModelConfig;
use prefixsim::engine::{replay, PerfModel};
use prefixsim::policies::{PolicyConfig, PolicyKind};
use prefixsim::workload::{generate, GeneratorConfig, LengthDist};

fn main() {
    let trace = generate(&GeneratorConfig {
        seed: 19,
        n_sessions: 300,
        prompt_pool_size: 6,
        prompt_len: LengthDist::LogNormal {
            mean: 900.0,
            sigma: 1.0,
        },
        rounds_per_session: LengthDist::Uniform { lo: 1, hi: 4 },
        ..GeneratorConfig::default()
    })
    .unwrap();
    let model = ModelConfig::hybrid_7b();

    let mut policy = PolicyConfig::new(PolicyKind::Marconi);
    policy.tuner.enabled = true;
    policy.tuner.bootstrap_multiplier = 5.0;
    policy.tuner.parallel_replays = 4;
    println!("alpha grid: {:?}\n", policy.tuner.alpha_grid);

    let capacity = 2_000_000_000;
    let metrics = replay(&trace, &policy, &model, capacity, &PerfModel::default()).unwrap();

    for up in &metrics.alpha_updates {
        println!(
            "after request {}: alpha {} -> {}",
            up.at_request, up.old_alpha, up.new_alpha
        );
        println!("  bootstrap hit rate per candidate:");
        for (alpha, rate) in &up.grid_hit_rates {
            let mark = if *alpha == up.new_alpha {
                "  <- chosen"
            } else {
                ""
            };
            println!("    alpha {:>6}: {:>6.2}%{}", alpha, rate * 100.0, mark);
        }
    }
    if metrics.alpha_updates.is_empty() {
        println!("no eviction pressure: the tuner never needed to fire");
    }

    println!(
        "\nfinal alpha {}, overall token hit rate {:.2}%",
        metrics.alpha_final,
        metrics.token_hit_rate * 100.0
    );

    // Reference points: the same trace under fixed alphas.
    for alpha in [0.0, 1.0] {
        let fixed = PolicyConfig {
            alpha,
            ..PolicyConfig::new(PolicyKind::Marconi)
        };
        let m = replay(&trace, &fixed, &model, capacity, &PerfModel::default()).unwrap();
        println!(
            "fixed alpha {:>3}: token hit rate {:.2}%",
            alpha,
            m.token_hit_rate * 100.0
        );
    }
}
