//! Sweep cache capacity and watch where FLOP-aware eviction pays off.
//!
//! At tiny capacities every policy thrashes; at huge ones nothing is ever
//! evicted and all cache-keeping policies converge. The interesting regime
//! is in between, where choosing *what* to evict matters — the relative
//! gain of marconi over sglang_plus peaks at an interior capacity.
//!
//! Run with: `cargo run --example capacity_sweep`

use prefixsim::cost_model::ModelConfig;
use prefixsim::engine::{sweep, PerfModel, SweepConfig};
use prefixsim::policies::{PolicyConfig, PolicyKind};
use prefixsim::workload::{generate, GeneratorConfig, LengthDist};

fn main() {
    let trace = generate(&GeneratorConfig {
        seed: 5,
        n_sessions: 150,
        prompt_pool_size: 8,
        prompt_len: LengthDist::LogNormal {
            mean: 1000.0,
            sigma: 1.1,
        },
        rounds_per_session: LengthDist::Uniform { lo: 1, hi: 5 },
        ..GeneratorConfig::default()
    })
    .unwrap();
    let model = ModelConfig::hybrid_7b();
    let capacities: [u64; 5] = [
        500_000_000,
        1_500_000_000,
        4_000_000_000,
        12_000_000_000,
        36_000_000_000,
    ];

    let mut configs = Vec::new();
    for kind in [PolicyKind::Marconi, PolicyKind::SglangPlus] {
        for &capacity in &capacities {
            configs.push(SweepConfig {
                label: format!("{}_{:.1}gb", kind.as_str(), capacity as f64 / 1e9),
                policy: PolicyConfig {
                    alpha: 1.0,
                    ..PolicyConfig::new(kind)
                },
                model: model.clone(),
                capacity_bytes: capacity,
                perf: PerfModel::default(),
            });
        }
    }
    let results = sweep(&trace, &configs, 4);
    let rate = |label: &str| {
        results
            .iter()
            .find(|(l, _)| l == label)
            .and_then(|(_, r)| r.as_ref().ok())
            .map(|m| m.token_hit_rate)
            .unwrap()
    };

    println!(
        "{:>10} {:>12} {:>14} {:>12}",
        "capacity", "marconi", "sglang_plus", "gain"
    );
    for &capacity in &capacities {
        let gb = capacity as f64 / 1e9;
        let m = rate(&format!("marconi_{gb:.1}gb"));
        let s = rate(&format!("sglang_plus_{gb:.1}gb"));
        let gain = if s > 0.0 { m / s } else { f64::NAN };
        println!(
            "{:>8.1}gb {:>11.2}% {:>13.2}% {:>11.3}x",
            gb,
            m * 100.0,
            s * 100.0,
            gain
        );
    }
}
