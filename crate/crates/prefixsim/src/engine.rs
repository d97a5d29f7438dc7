//! Deterministic trace replay: drives the cache through a request stream
//! under one policy and produces per-request and aggregate metrics.
//!
//! Per request, in strict arrival order:
//!
//! 1. look up the input (longest reusable prefix; refreshes the one node
//!    whose state is reused),
//! 2. plan admission (which checkpoint positions this request may leave),
//! 3. price the insertion exactly (dry run), pin the matched path, and
//!    evict until the new bytes fit — or bypass caching for this request
//!    when they cannot,
//! 4. insert the full sequence with its checkpoints.
//!
//! Time-to-first-token is an analytical proxy: a fixed scheduling overhead
//! plus remaining prefill FLOPs divided by sustained device throughput. It
//! is labeled as such in every output.
//!
//! The `marconi` alpha tuner runs inline: the replay starts at alpha 0,
//! snapshots the tree at the first eviction, records a bootstrap window of
//! subsequent requests, grid-searches alpha by replaying that window from
//! the snapshot, then switches the live alpha to the winner.

use crate::cost_model::{delta_prefill_flops, model_prefill_flops, CostModelError, ModelConfig};
use crate::policies::{
    evict_until, plan_admission_marconi, plan_admission_vllm_plus, tune_alpha, EvictionEvent,
    EvictionResult, PolicyConfig, PolicyError, PolicyKind, UtilityPicker,
};
use crate::radix_cache::{RadixError, RadixTree, TokenId};
use crate::workload::{Request, Trace};
use serde::Serialize;
use serde_json::json;
use std::io::Write;
use thiserror::Error;

/// Device-level constants for the TTFT proxy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerfModel {
    /// Sustained prefill throughput (FLOPs per second).
    pub device_flops_per_s: f64,
    /// Scheduling/launch overhead added to every request (milliseconds).
    pub fixed_overhead_ms: f64,
}

impl Default for PerfModel {
    fn default() -> Self {
        PerfModel {
            device_flops_per_s: 300e12,
            fixed_overhead_ms: 10.0,
        }
    }
}

impl PerfModel {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.device_flops_per_s > 0.0 && self.device_flops_per_s.is_finite()) {
            return Err(EngineError::Perf(
                "device_flops_per_s must be positive".into(),
            ));
        }
        if !(self.fixed_overhead_ms >= 0.0 && self.fixed_overhead_ms.is_finite()) {
            return Err(EngineError::Perf(
                "fixed_overhead_ms must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("model config: {0}")]
    Model(#[from] CostModelError),
    #[error("policy config: {0}")]
    Policy(#[from] PolicyError),
    #[error("perf model: {0}")]
    Perf(String),
    #[error("trace must be sorted by arrival time (violated at index {0})")]
    UnsortedTrace(usize),
    #[error("request {index}: cache operation failed: {source}")]
    Cache { index: usize, source: RadixError },
    #[error("writing results failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything observed while serving one request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestOutcome {
    /// Position in the replayed trace.
    pub index: usize,
    pub session_id: u64,
    pub request_id: u64,
    pub arrival_ms: f64,
    pub input_len: usize,
    pub output_len: usize,
    /// Prefill tokens skipped thanks to cached state.
    pub reuse_len: usize,
    /// FLOPs avoided (full-model prefill cost of the reused prefix).
    pub flops_saved: f64,
    /// FLOPs actually spent prefilling the rest of the input.
    pub flops_prefilled: f64,
    /// Analytical TTFT proxy (not a wall-clock measurement).
    pub ttft_est_ms: f64,
    /// Bytes evicted to make room for this request's state.
    pub evicted_bytes: u64,
    /// The request's state was not cached (it could not fit).
    pub admission_bypassed: bool,
    pub cache_bytes_after: u64,
}

/// One live alpha change made by the tuner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaUpdate {
    /// Trace index after which the new alpha took effect.
    pub at_request: usize,
    pub old_alpha: f64,
    pub new_alpha: f64,
    /// (alpha, bootstrap token hit rate) for every grid candidate.
    pub grid_hit_rates: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayMetrics {
    pub policy: PolicyKind,
    pub capacity_bytes: u64,
    pub outcomes: Vec<RequestOutcome>,
    /// (trace index, eviction) in the exact order evictions happened.
    pub eviction_log: Vec<(usize, EvictionEvent)>,
    pub alpha_updates: Vec<AlphaUpdate>,
    pub token_hit_rate: f64,
    pub flops_saved_total: f64,
    pub flops_prefilled_total: f64,
    pub ttft_p5_ms: f64,
    pub ttft_p50_ms: f64,
    pub ttft_p95_ms: f64,
    pub bypassed_requests: usize,
    pub alpha_final: f64,
    pub final_cache_bytes: u64,
    pub peak_cache_bytes: u64,
    pub perf: PerfModel,
}

impl ReplayMetrics {
    /// Aggregate summary as JSON. TTFT figures are from the analytical
    /// proxy, and the constants behind them are included so readers can
    /// interpret (or rescale) them.
    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "policy": self.policy.as_str(),
            "capacity_bytes": self.capacity_bytes,
            "requests": self.outcomes.len(),
            "token_hit_rate": self.token_hit_rate,
            "flops_saved_total": self.flops_saved_total,
            "flops_prefilled_total": self.flops_prefilled_total,
            "ttft_p5_ms": self.ttft_p5_ms,
            "ttft_p50_ms": self.ttft_p50_ms,
            "ttft_p95_ms": self.ttft_p95_ms,
            "bypassed_requests": self.bypassed_requests,
            "alpha_final": self.alpha_final,
            "alpha_updates": self.alpha_updates,
            "final_cache_bytes": self.final_cache_bytes,
            "peak_cache_bytes": self.peak_cache_bytes,
            "evictions": self.eviction_log.len(),
            "ttft_model": {
                "kind": "analytical_proxy",
                "device_flops_per_s": self.perf.device_flops_per_s,
                "fixed_overhead_ms": self.perf.fixed_overhead_ms,
            },
        })
    }

    /// Per-request rows:
    /// `request_id,session_id,arrival_ms,input_len,reuse_len,hit_rate,flops_saved,ttft_est_ms,cache_bytes_after`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "request_id,session_id,arrival_ms,input_len,reuse_len,hit_rate,flops_saved,ttft_est_ms,cache_bytes_after"
        )?;
        for o in &self.outcomes {
            let hit_rate = if o.input_len > 0 {
                o.reuse_len as f64 / o.input_len as f64
            } else {
                0.0
            };
            writeln!(
                w,
                "{},{},{:.3},{},{},{:.6},{:.0},{:.4},{}",
                o.request_id,
                o.session_id,
                o.arrival_ms,
                o.input_len,
                o.reuse_len,
                hit_rate,
                o.flops_saved,
                o.ttft_est_ms,
                o.cache_bytes_after,
            )?;
        }
        Ok(())
    }
}

/// The per-request cache pipeline, shared verbatim between the live replay
/// and the tuner's bootstrap replays so both see identical semantics.
struct Stepper<'a> {
    tree: RadixTree,
    policy: &'a PolicyConfig,
    model: &'a ModelConfig,
    capacity: u64,
    alpha: f64,
}

struct StepOutput {
    reuse_len: usize,
    evictions: Vec<EvictionEvent>,
    bypassed: bool,
}

impl<'a> Stepper<'a> {
    fn new(
        tree: RadixTree,
        policy: &'a PolicyConfig,
        model: &'a ModelConfig,
        capacity: u64,
        alpha: f64,
    ) -> Self {
        Stepper {
            tree,
            policy,
            model,
            capacity,
            alpha,
        }
    }

    fn fresh_tree(policy: &PolicyConfig, model: &ModelConfig) -> RadixTree {
        let tree = RadixTree::new(model.clone());
        match policy.kind {
            PolicyKind::VllmPlus => tree.with_kv_block_pad(policy.block_size),
            _ => tree,
        }
    }

    fn step(&mut self, index: usize, req: &Request) -> Result<StepOutput, EngineError> {
        if self.policy.kind == PolicyKind::NoCache {
            return Ok(StepOutput {
                reuse_len: 0,
                evictions: Vec::new(),
                bypassed: false,
            });
        }
        let cache_err = |source: RadixError| EngineError::Cache { index, source };

        let lookup = self.tree.lookup(&req.input_tokens);
        let reuse_len = lookup.reuse_len;

        let plan = match self.policy.kind {
            PolicyKind::Marconi | PolicyKind::SglangPlus => plan_admission_marconi(
                &req.input_tokens,
                req.output_len(),
                reuse_len,
                &self.tree,
                self.model.chunk_size,
                self.policy.chunk_align,
            ),
            PolicyKind::VllmPlus => {
                plan_admission_vllm_plus(req.input_len(), req.output_len(), self.policy.block_size)
            }
            PolicyKind::NoCache => unreachable!("handled above"),
        };
        let checkpoints = plan.checkpoint_set();
        let full: Vec<TokenId> = req.full_sequence();
        let needed = self
            .tree
            .plan_insert_bytes(&full, &checkpoints)
            .map_err(cache_err)?;

        // A sequence larger than the whole cache can never be admitted;
        // don't flush the cache discovering that.
        if needed > self.capacity {
            return Ok(StepOutput {
                reuse_len,
                evictions: Vec::new(),
                bypassed: true,
            });
        }

        // Pin everything this insert builds on: the full-sequence match
        // path, which covers the reused prefix as well.
        let pin_path = self.tree.match_path(&full);
        self.tree.pin(&pin_path);
        let picker = UtilityPicker { alpha: self.alpha };
        let result = evict_until(&mut self.tree, needed, self.capacity, &picker);
        let (evictions, bypassed) = match result {
            EvictionResult::Fits(events) => {
                // Eviction can only shrink the footprint of the pending
                // insert (a pinned path node that becomes a tail takes over
                // block padding the insert then reclaims), so the
                // pre-eviction price stays a safe budget; re-price on the
                // settled tree for the exactness check.
                let priced = self
                    .tree
                    .plan_insert_bytes(&full, &checkpoints)
                    .map_err(cache_err)?;
                debug_assert!(priced <= needed, "eviction never raises the insert price");
                let delta = self.tree.insert(&full, &checkpoints).map_err(cache_err)?;
                debug_assert_eq!(delta, priced, "dry-run priced the insert exactly");
                (events, false)
            }
            EvictionResult::Bypass(events) => (events, true),
        };
        self.tree.unpin_all();
        debug_assert!(self.tree.total_bytes().0 <= self.capacity);
        Ok(StepOutput {
            reuse_len,
            evictions,
            bypassed,
        })
    }
}

/// Token hit rate of replaying `requests` on `tree` under a fixed `alpha`
/// (tuner-free). Used by the alpha tuner's grid search.
pub(crate) fn bootstrap_hit_rate(
    tree: RadixTree,
    requests: &[Request],
    alpha: f64,
    policy: &PolicyConfig,
    capacity_bytes: u64,
) -> f64 {
    let model = tree.config().clone();
    let mut stepper = Stepper::new(tree, policy, &model, capacity_bytes, alpha);
    let mut reused = 0u64;
    let mut total = 0u64;
    for (i, req) in requests.iter().enumerate() {
        total += req.input_len() as u64;
        match stepper.step(i, req) {
            Ok(out) => reused += out.reuse_len as u64,
            Err(_) => return 0.0,
        }
    }
    if total == 0 {
        0.0
    } else {
        reused as f64 / total as f64
    }
}

/// Replay a trace under one policy and capacity.
pub fn replay(
    trace: &Trace,
    policy: &PolicyConfig,
    model: &ModelConfig,
    capacity_bytes: u64,
    perf: &PerfModel,
) -> Result<ReplayMetrics, EngineError> {
    model.validate()?;
    policy.validate()?;
    perf.validate()?;
    if policy.tuner.enabled && policy.kind != PolicyKind::Marconi {
        return Err(EngineError::Policy(PolicyError::Invalid(
            "the alpha tuner only applies to the marconi policy".into(),
        )));
    }
    for (i, pair) in trace.requests.windows(2).enumerate() {
        if pair[1].arrival_ms < pair[0].arrival_ms {
            return Err(EngineError::UnsortedTrace(i + 1));
        }
    }

    let tuning = policy.kind == PolicyKind::Marconi && policy.tuner.enabled;
    // Only marconi weighs FLOP efficiency; sglang_plus and vllm_plus evict
    // by plain LRU, so their alpha is pinned to 0 whatever the config says.
    // With the tuner on, marconi also starts conservatively at LRU.
    let alpha0 = if policy.kind != PolicyKind::Marconi || tuning {
        0.0
    } else {
        policy.alpha
    };
    let mut stepper = Stepper::new(
        Stepper::fresh_tree(policy, model),
        policy,
        model,
        capacity_bytes,
        alpha0,
    );

    let mut outcomes = Vec::with_capacity(trace.len());
    let mut eviction_log = Vec::new();
    let mut alpha_updates = Vec::new();
    let mut peak = 0u64;
    let mut reused_tokens = 0u64;
    let mut input_tokens = 0u64;
    let mut flops_saved_total = 0.0;
    let mut flops_prefilled_total = 0.0;
    let mut bypassed_requests = 0usize;

    // tuner state
    let mut snapshot: Option<RadixTree> = None;
    let mut bootstrap: Vec<Request> = Vec::new();
    let mut window = 0usize;
    let mut tuned = false;

    for (index, req) in trace.iter().enumerate() {
        let out = stepper.step(index, req)?;

        let flops_saved = model_prefill_flops(out.reuse_len, model).value();
        let flops_prefilled = delta_prefill_flops(out.reuse_len, req.input_len(), model)
            .map_err(EngineError::Model)?
            .value();
        let ttft_est_ms =
            perf.fixed_overhead_ms + flops_prefilled / perf.device_flops_per_s * 1000.0;
        let cache_bytes_after = stepper.tree.total_bytes().0;
        peak = peak.max(cache_bytes_after);
        reused_tokens += out.reuse_len as u64;
        input_tokens += req.input_len() as u64;
        flops_saved_total += flops_saved;
        flops_prefilled_total += flops_prefilled;
        if out.bypassed {
            bypassed_requests += 1;
        }

        let evicted_bytes = out.evictions.iter().map(|e| e.bytes_freed).sum();
        let evicted_any = !out.evictions.is_empty();
        for ev in out.evictions {
            eviction_log.push((index, ev));
        }
        outcomes.push(RequestOutcome {
            index,
            session_id: req.session_id,
            request_id: req.request_id,
            arrival_ms: req.arrival_ms,
            input_len: req.input_len(),
            output_len: req.output_len(),
            reuse_len: out.reuse_len,
            flops_saved,
            flops_prefilled,
            ttft_est_ms,
            evicted_bytes,
            admission_bypassed: out.bypassed,
            cache_bytes_after,
        });

        // ── tuner lifecycle ─────────────────────────────────────────────
        if tuning && !tuned {
            if snapshot.is_none() {
                if evicted_any {
                    // First eviction: memory pressure has begun. Freeze the
                    // tree and record a bootstrap window proportional to the
                    // requests seen so far.
                    snapshot = Some(stepper.tree.clone());
                    window =
                        (policy.tuner.bootstrap_multiplier * (index + 1) as f64).ceil() as usize;
                    bootstrap.clear();
                }
            } else {
                bootstrap.push(req.clone());
                if bootstrap.len() >= window {
                    let report = tune_alpha(
                        snapshot.as_ref().expect("snapshot present"),
                        &bootstrap,
                        policy,
                        capacity_bytes,
                    );
                    alpha_updates.push(AlphaUpdate {
                        at_request: index,
                        old_alpha: stepper.alpha,
                        new_alpha: report.chosen,
                        grid_hit_rates: report.grid_hit_rates,
                    });
                    stepper.alpha = report.chosen;
                    tuned = true;
                    snapshot = None;
                    bootstrap = Vec::new();
                }
            }
        }
    }

    let mut ttfts: Vec<f64> = outcomes.iter().map(|o| o.ttft_est_ms).collect();
    ttfts.sort_by(f64::total_cmp);
    let token_hit_rate = if input_tokens == 0 {
        0.0
    } else {
        reused_tokens as f64 / input_tokens as f64
    };

    Ok(ReplayMetrics {
        policy: policy.kind,
        capacity_bytes,
        token_hit_rate,
        flops_saved_total,
        flops_prefilled_total,
        ttft_p5_ms: percentile(&ttfts, 5.0),
        ttft_p50_ms: percentile(&ttfts, 50.0),
        ttft_p95_ms: percentile(&ttfts, 95.0),
        bypassed_requests,
        alpha_final: stepper.alpha,
        final_cache_bytes: stepper.tree.total_bytes().0,
        peak_cache_bytes: peak,
        perf: *perf,
        outcomes,
        eviction_log,
        alpha_updates,
    })
}

/// Nearest-rank percentile of pre-sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// One replay configuration inside a sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Name for files and tables, e.g. `marconi@8gb`.
    pub label: String,
    pub policy: PolicyConfig,
    pub model: ModelConfig,
    pub capacity_bytes: u64,
    pub perf: PerfModel,
}

/// Replay each configuration against the same trace, `jobs` at a time.
/// Failures stay per-configuration: one bad config never poisons the rest.
pub fn sweep(
    trace: &Trace,
    configs: &[SweepConfig],
    jobs: usize,
) -> Vec<(String, Result<ReplayMetrics, EngineError>)> {
    use rayon::prelude::*;
    let jobs = jobs.max(1).min(configs.len().max(1));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| {
        configs
            .par_iter()
            .map(|c| {
                let result = replay(trace, &c.policy, &c.model, c.capacity_bytes, &c.perf);
                (c.label.clone(), result)
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::ssm_checkpoint_bytes;
    use crate::workload::{generate, GeneratorConfig, LengthDist};

    fn small_trace(seed: u64) -> Trace {
        generate(&GeneratorConfig {
            seed,
            n_sessions: 40,
            prompt_pool_size: 4,
            prompt_len: LengthDist::LogNormal {
                mean: 400.0,
                sigma: 0.8,
            },
            user_len: LengthDist::LogNormal {
                mean: 60.0,
                sigma: 0.6,
            },
            output_len: LengthDist::LogNormal {
                mean: 80.0,
                sigma: 0.6,
            },
            rounds_per_session: LengthDist::Uniform { lo: 1, hi: 4 },
            ..GeneratorConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn replay_is_deterministic() {
        let trace = small_trace(3);
        let policy = PolicyConfig {
            alpha: 1.0,
            ..PolicyConfig::new(PolicyKind::Marconi)
        };
        let model = ModelConfig::hybrid_7b();
        let cap = 2_000_000_000;
        let a = replay(&trace, &policy, &model, cap, &PerfModel::default()).unwrap();
        let b = replay(&trace, &policy, &model, cap, &PerfModel::default()).unwrap();
        assert_eq!(a.outcomes, b.outcomes);
        assert_eq!(a.eviction_log, b.eviction_log);
    }

    #[test]
    fn capacity_is_never_exceeded_and_hits_need_repeats() {
        let trace = small_trace(5);
        let model = ModelConfig::hybrid_7b();
        let cap = 1_500_000_000;
        for kind in [
            PolicyKind::Marconi,
            PolicyKind::SglangPlus,
            PolicyKind::VllmPlus,
        ] {
            let policy = PolicyConfig::new(kind);
            let m = replay(&trace, &policy, &model, cap, &PerfModel::default()).unwrap();
            for o in &m.outcomes {
                assert!(o.cache_bytes_after <= cap, "{kind}: capacity exceeded");
                assert!(o.reuse_len <= o.input_len);
            }
            // the very first request can never hit
            assert_eq!(m.outcomes[0].reuse_len, 0);
        }
    }

    #[test]
    fn no_cache_never_reuses_and_holds_nothing() {
        let trace = small_trace(7);
        let model = ModelConfig::hybrid_7b();
        let m = replay(
            &trace,
            &PolicyConfig::new(PolicyKind::NoCache),
            &model,
            1_000_000_000,
            &PerfModel::default(),
        )
        .unwrap();
        assert_eq!(m.token_hit_rate, 0.0);
        assert_eq!(m.final_cache_bytes, 0);
        assert!(m.outcomes.iter().all(|o| o.cache_bytes_after == 0));
    }

    #[test]
    fn repeated_prompt_hits_from_second_occurrence_with_session_end_checkpoint() {
        // one session, three rounds: round r+1 extends round r's sequence,
        // so the final-checkpoint of round r is exactly reusable.
        let prompt: Vec<u32> = (1000..1400).collect();
        let mk = |round: u64, input: Vec<u32>, output: Vec<u32>| Request {
            session_id: 1,
            request_id: round,
            arrival_ms: round as f64 * 1000.0,
            input_tokens: input,
            output_tokens: output,
        };
        let r0_out: Vec<u32> = (2000..2100).collect();
        let mut r1_in = prompt.clone();
        r1_in.extend(&r0_out);
        r1_in.extend(3000..3050);
        let r1_out: Vec<u32> = (4000..4080).collect();
        let mut r2_in = r1_in.clone();
        r2_in.extend(&r1_out);
        r2_in.extend(5000..5040);
        let trace = Trace {
            requests: vec![
                mk(0, prompt.clone(), r0_out.clone()),
                mk(1, r1_in.clone(), r1_out.clone()),
                mk(2, r2_in.clone(), vec![6000, 6001]),
            ],
        };
        let model = ModelConfig::hybrid_7b();
        let m = replay(
            &trace,
            &PolicyConfig::new(PolicyKind::Marconi),
            &model,
            10_000_000_000,
            &PerfModel::default(),
        )
        .unwrap();
        // round 1 resumes from round 0's final checkpoint (prompt+output)
        assert_eq!(m.outcomes[1].reuse_len, prompt.len() + r0_out.len());
        // round 2 resumes from round 1's final checkpoint
        assert_eq!(m.outcomes[2].reuse_len, r1_in.len() + r1_out.len());
    }

    #[test]
    fn tuner_fires_after_first_eviction_and_updates_alpha() {
        let trace = small_trace(11);
        let model = ModelConfig::hybrid_7b();
        // Capacity small enough that the first eviction lands within the
        // first few requests, so the bootstrap window (multiplier x requests
        // seen so far) still fits inside the trace.
        let cap = 10 * ssm_checkpoint_bytes(&model).0;
        let mut policy = PolicyConfig::new(PolicyKind::Marconi);
        policy.tuner.enabled = true;
        policy.tuner.bootstrap_multiplier = 5.0;
        policy.tuner.parallel_replays = 2;
        let m = replay(&trace, &policy, &model, cap, &PerfModel::default()).unwrap();
        assert_eq!(m.alpha_updates.len(), 1, "tuner fires exactly once");
        let up = &m.alpha_updates[0];
        assert_eq!(up.old_alpha, 0.0);
        assert_eq!(up.new_alpha, m.alpha_final);
        assert_eq!(up.grid_hit_rates.len(), policy.tuner.alpha_grid.len());
        // chosen alpha is the grid argmax with ties toward smaller alpha
        let best =
            up.grid_hit_rates
                .iter()
                .fold((f64::NEG_INFINITY, f64::INFINITY), |acc, &(a, r)| {
                    if r > acc.0 || (r == acc.0 && a < acc.1) {
                        (r, a)
                    } else {
                        acc
                    }
                });
        assert_eq!(up.new_alpha, best.1);
    }

    #[test]
    fn tuner_never_fires_without_memory_pressure() {
        let trace = small_trace(13);
        let model = ModelConfig::hybrid_7b();
        let mut policy = PolicyConfig::new(PolicyKind::Marconi);
        policy.tuner.enabled = true;
        let m = replay(&trace, &policy, &model, u64::MAX, &PerfModel::default()).unwrap();
        assert!(m.alpha_updates.is_empty());
        assert_eq!(m.alpha_final, 0.0);
        assert_eq!(m.bypassed_requests, 0);
        assert!(m.eviction_log.is_empty());
    }

    #[test]
    fn sweep_isolates_failures() {
        let trace = small_trace(17);
        let model = ModelConfig::hybrid_7b();
        let good = SweepConfig {
            label: "good".into(),
            policy: PolicyConfig::new(PolicyKind::SglangPlus),
            model: model.clone(),
            capacity_bytes: 1_000_000_000,
            perf: PerfModel::default(),
        };
        let mut bad_policy = PolicyConfig::new(PolicyKind::VllmPlus);
        bad_policy.block_size = 0;
        let bad = SweepConfig {
            label: "bad".into(),
            policy: bad_policy,
            model,
            capacity_bytes: 1_000_000_000,
            perf: PerfModel::default(),
        };
        let results = sweep(&trace, &[good, bad], 2);
        assert_eq!(results.len(), 2);
        assert!(results.iter().find(|(l, _)| l == "good").unwrap().1.is_ok());
        assert!(results.iter().find(|(l, _)| l == "bad").unwrap().1.is_err());
    }

    #[test]
    fn csv_and_summary_have_the_documented_shape() {
        let trace = small_trace(19);
        let model = ModelConfig::hybrid_7b();
        let m = replay(
            &trace,
            &PolicyConfig::new(PolicyKind::Marconi),
            &model,
            2_000_000_000,
            &PerfModel::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "request_id,session_id,arrival_ms,input_len,reuse_len,hit_rate,flops_saved,ttft_est_ms,cache_bytes_after"
        );
        assert_eq!(text.lines().count(), trace.len() + 1);
        let s = m.summary_json();
        for key in [
            "policy",
            "capacity_bytes",
            "token_hit_rate",
            "flops_saved_total",
            "ttft_p5_ms",
            "ttft_p50_ms",
            "ttft_p95_ms",
            "alpha_final",
            "ttft_model",
        ] {
            assert!(s.get(key).is_some(), "summary missing {key}");
        }
        assert_eq!(s["ttft_model"]["kind"], "analytical_proxy");
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        let data: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(percentile(&data, 5.0), 5.0);
        assert_eq!(percentile(&data, 50.0), 50.0);
        assert_eq!(percentile(&data, 95.0), 95.0);
        assert_eq!(percentile(&[42.0], 95.0), 42.0);
        assert_eq!(percentile(&[], 50.0), 0.0);
    }
}
