//! Trace-driven simulator and policy library for prefix caching in hybrid
//! Attention/SSM language-model serving.
//!
//! Hybrid models interleave attention layers (per-token KV entries that can be
//! sliced at any boundary) with SSM layers whose recurrent states are
//! fixed-size, updated in place, and only reusable for the *exact* token
//! prefix they were captured at. That asymmetry makes classic token-granular
//! prefix caching ineffective: checkpointing SSM states at every block
//! boundary explodes memory, while naive insertion caches states that can
//! never be reused.
//!
//! This crate models that trade-off analytically and lets you replay request
//! traces under different cache policies:
//!
//! * `marconi` — judicious admission (checkpoint only at likely-reusable
//!   boundaries discovered through speculative radix-tree insertion) plus
//!   FLOP-aware eviction that scores nodes by a blend of recency and
//!   compute-saved-per-byte.
//! * `sglang_plus` — the same judicious admission with plain LRU eviction.
//! * `vllm_plus` — fine-grained checkpointing at fixed block boundaries with
//!   LRU eviction.
//! * `no_cache` — lower-bound baseline.
//!
//! Modules:
//!
//! * [`cost_model`] — closed-form per-layer FLOP and state-size formulas.
//! * [`radix_cache`] — token-level radix tree with exact byte accounting.
//! * [`policies`] — admission planning, eviction scoring, and the online
//!   alpha tuner.
//! * [`workload`] — multi-round session trace generator and JSONL trace I/O.
//! * [`engine`] — deterministic replay, metrics, CSV/JSON reporting, sweeps.
//! * [`cli`] — command-line front end (`gen-trace`, `run`, `compare`,
//!   `sweep`).
//!
//! The `examples/` directory demonstrates each capability end to end; start
//! with `cost_model_basics` and `single_replay`.

pub mod cli;
pub mod cost_model;
pub mod engine;
pub mod policies;
pub mod radix_cache;
pub mod workload;

pub use cost_model::{ByteCount, FlopCount, ModelConfig};
pub use engine::{replay, sweep, PerfModel, ReplayMetrics, RequestOutcome};
pub use policies::{AdmissionPlan, PolicyConfig, PolicyKind, TunerConfig};
pub use radix_cache::{LookupResult, NodeId, RadixTree, SpeculationOutcome};
pub use workload::{GeneratorConfig, LengthDist, Request, Trace};
