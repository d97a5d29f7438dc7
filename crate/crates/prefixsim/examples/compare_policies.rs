//! Run all four policies over one trace at the same capacity and compare
//! hit rates, saved FLOPs, and the TTFT proxy.
//!
//! * `marconi`     — judicious checkpoint admission + FLOP-aware eviction
//! * `sglang_plus` — judicious admission + plain LRU eviction
//! * `vllm_plus`   — checkpoint every token block + LRU eviction
//! * `no_cache`    — prefill everything, cache nothing
//!
//! Run with: `cargo run --example compare_policies`

use prefixsim::cost_model::ModelConfig;
use prefixsim::engine::{sweep, PerfModel, SweepConfig};
use prefixsim::policies::{PolicyConfig, PolicyKind};
use prefixsim::workload::{generate, GeneratorConfig, LengthDist};

fn main() {
    let trace = generate(&GeneratorConfig {
        seed: 11,
        n_sessions: 120,
        prompt_pool_size: 8,
        prompt_len: LengthDist::LogNormal {
            mean: 1200.0,
            sigma: 1.0,
        },
        rounds_per_session: LengthDist::Uniform { lo: 1, hi: 5 },
        ..GeneratorConfig::default()
    })
    .unwrap();
    let model = ModelConfig::hybrid_7b();
    let capacity = 6_000_000_000;

    let configs: Vec<SweepConfig> = [
        PolicyKind::Marconi,
        PolicyKind::SglangPlus,
        PolicyKind::VllmPlus,
        PolicyKind::NoCache,
    ]
    .into_iter()
    .map(|kind| SweepConfig {
        label: kind.as_str().to_string(),
        policy: PolicyConfig {
            alpha: 1.0,
            ..PolicyConfig::new(kind)
        },
        model: model.clone(),
        capacity_bytes: capacity,
        perf: PerfModel::default(),
    })
    .collect();

    let results = sweep(&trace, &configs, 4);

    println!(
        "{} requests, capacity {:.1} GB\n",
        trace.len(),
        capacity as f64 / 1e9
    );
    println!(
        "{:<12} {:>10} {:>14} {:>12} {:>12} {:>10}",
        "policy", "hit_rate", "flops_saved", "ttft_p50", "ttft_p95", "evictions"
    );
    for (label, result) in &results {
        let m = result.as_ref().expect("replay succeeds");
        println!(
            "{:<12} {:>9.2}% {:>14.3e} {:>10.1}ms {:>10.1}ms {:>10}",
            label,
            m.token_hit_rate * 100.0,
            m.flops_saved_total,
            m.ttft_p50_ms,
            m.ttft_p95_ms,
            m.eviction_log.len(),
        );
    }

    let get = |k: PolicyKind| {
        results
            .iter()
            .find(|(l, _)| l == k.as_str())
            .and_then(|(_, r)| r.as_ref().ok())
            .unwrap()
    };
    let marconi = get(PolicyKind::Marconi);
    let vllm = get(PolicyKind::VllmPlus);
    if vllm.token_hit_rate > 0.0 {
        println!(
            "\nmarconi / vllm_plus hit-rate ratio: {:.2}x",
            marconi.token_hit_rate / vllm.token_hit_rate
        );
    }
}
