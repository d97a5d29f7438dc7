//! How the model architecture shifts the value of judicious checkpointing.
//!
//! Two knobs move the SSM-state tax on block-granular caching: more SSM
//! layers per attention layer mean more state per checkpoint, and a larger
//! d_state makes each SSM state bigger. Both raise the cost of
//! vllm_plus-style checkpoint-every-block admission, so marconi's relative
//! hit-rate gain grows. With no SSM layers at all the caches degrade to
//! plain sliceable KV and the policies nearly agree.
//!
//! Run with: `cargo run --example arch_sensitivity`

use prefixsim::cost_model::ModelConfig;
use prefixsim::engine::{replay, PerfModel};
use prefixsim::policies::{PolicyConfig, PolicyKind};
use prefixsim::workload::{generate, GeneratorConfig, LengthDist, Trace};

fn hit_rate(trace: &Trace, kind: PolicyKind, model: &ModelConfig, capacity: u64) -> f64 {
    let policy = PolicyConfig {
        alpha: 1.0,
        ..PolicyConfig::new(kind)
    };
    replay(trace, &policy, model, capacity, &PerfModel::default())
        .unwrap()
        .token_hit_rate
}

fn main() {
    let trace = generate(&GeneratorConfig {
        seed: 23,
        n_sessions: 120,
        prompt_pool_size: 8,
        prompt_len: LengthDist::LogNormal {
            mean: 900.0,
            sigma: 1.0,
        },
        rounds_per_session: LengthDist::Uniform { lo: 1, hi: 4 },
        ..GeneratorConfig::default()
    })
    .unwrap();
    let capacity = 3_000_000_000;

    println!("attention:SSM ratio (36 mixer layers total, d_state = 128):");
    println!(
        "{:>8} {:>12} {:>12} {:>8}",
        "ratio", "marconi", "vllm_plus", "gain"
    );
    for (label, n_attn, n_ssm) in [("1:2", 12, 24), ("1:5", 6, 30), ("1:8", 4, 32)] {
        let model = ModelConfig::hybrid(n_attn, n_ssm, 28, 4096, 128);
        let m = hit_rate(&trace, PolicyKind::Marconi, &model, capacity);
        let v = hit_rate(&trace, PolicyKind::VllmPlus, &model, capacity);
        println!(
            "{label:>8} {:>11.2}% {:>11.2}% {:>7.2}x",
            m * 100.0,
            v * 100.0,
            m / v.max(1e-12)
        );
    }

    println!("\nSSM state width (4 attention + 24 SSM layers):");
    println!(
        "{:>8} {:>12} {:>12} {:>8}",
        "d_state", "marconi", "vllm_plus", "gain"
    );
    for d_state in [16, 32, 64, 128] {
        let model = ModelConfig::hybrid(4, 24, 28, 4096, d_state);
        let m = hit_rate(&trace, PolicyKind::Marconi, &model, capacity);
        let v = hit_rate(&trace, PolicyKind::VllmPlus, &model, capacity);
        println!(
            "{d_state:>8} {:>11.2}% {:>11.2}% {:>7.2}x",
            m * 100.0,
            v * 100.0,
            m / v.max(1e-12)
        );
    }

    println!("\nno SSM layers at all (pure transformer, generous capacity):");
    let model = ModelConfig::pure_transformer(28, 28, 4096);
    for kind in [
        PolicyKind::Marconi,
        PolicyKind::SglangPlus,
        PolicyKind::VllmPlus,
    ] {
        let r = hit_rate(&trace, kind, &model, 200_000_000_000);
        println!("  {:<12} {:.2}%", kind.as_str(), r * 100.0);
    }
}
