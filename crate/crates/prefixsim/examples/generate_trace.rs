//! Generate a synthetic multi-round chat workload and write it as JSONL.
//!
//! Sessions arrive as a Poisson process; each session runs several rounds
//! over a shared system prompt, and every round's input is the full
//! conversation so far (prompt + prior turns + new user tokens).
//!
//! Run with: `cargo run --example generate_trace`

use prefixsim::workload::{generate, load_trace, save_trace, GeneratorConfig, LengthDist};

fn main() {
    let cfg = GeneratorConfig {
        seed: 42,
        n_sessions: 50,
        session_rate_per_s: 2.0,
        inter_request_delay_s: 4.0,
        rounds_per_session: LengthDist::Uniform { lo: 2, hi: 6 },
        prompt_pool_size: 4,
        prompt_len: LengthDist::LogNormal {
            mean: 1200.0,
            sigma: 1.0,
        },
        user_len: LengthDist::LogNormal {
            mean: 100.0,
            sigma: 0.8,
        },
        output_len: LengthDist::LogNormal {
            mean: 200.0,
            sigma: 0.8,
        },
    };
    let trace = generate(&cfg).expect("valid generator config");

    let stats = trace.stats();
    println!(
        "generated {} requests across {} sessions",
        stats.requests, stats.sessions
    );
    println!("  mean input length : {:.0} tokens", stats.mean_input_len);
    println!("  max input length  : {} tokens", stats.max_input_len);
    println!("  trace span        : {:.1} s", stats.duration_ms / 1000.0);

    let path = std::env::temp_dir().join("prefixsim_example_trace.jsonl");
    save_trace(&trace, &path).expect("writable temp dir");
    println!("\nwrote {}", path.display());

    // Round-trips exactly: one JSON object per line, sorted by arrival time.
    let reloaded = load_trace(&path).expect("file just written");
    assert_eq!(trace, reloaded);
    let first = &reloaded.requests[0];
    println!(
        "first request: session {} round {} at t={:.0} ms, {} input tokens, {} output tokens",
        first.session_id,
        first.request_id,
        first.arrival_ms,
        first.input_len(),
        first.output_len(),
    );
}
