//! Cache policies: admission planning, eviction scoring, and online alpha
//! tuning.
//!
//! Admission decides *which* SSM checkpoints a request may leave behind.
//! Judicious admission (used by `marconi` and `sglang_plus`) checkpoints at
//! most two positions per sequence: the branch point exposed by a
//! speculative insertion of the input — evidence the prefix is shared — and
//! the end of the full sequence (to serve multi-round follow-ups).
//! Fine-grained admission (`vllm_plus`) checkpoints every block boundary.
//!
//! Eviction ranks candidates by `recency + alpha * flop_efficiency`, both
//! min-max normalized over all live nodes. `alpha = 0` reduces exactly to
//! LRU; larger values increasingly protect states that save many FLOPs per
//! byte. The tuner replays a bootstrap window of requests from a tree
//! snapshot under each candidate alpha and keeps the one with the highest
//! token hit rate.

use crate::cost_model::delta_prefill_flops;
use crate::radix_cache::{NodeId, RadixTree, TokenId};
use crate::workload::Request;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Judicious admission + FLOP-aware eviction (+ optional alpha tuner).
    Marconi,
    /// Judicious admission + LRU eviction.
    SglangPlus,
    /// Block-granular checkpointing + LRU eviction.
    VllmPlus,
    /// No caching at all; lower bound.
    NoCache,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Marconi => "marconi",
            PolicyKind::SglangPlus => "sglang_plus",
            PolicyKind::VllmPlus => "vllm_plus",
            PolicyKind::NoCache => "no_cache",
        }
    }

    pub fn all() -> [PolicyKind; 4] {
        [
            PolicyKind::Marconi,
            PolicyKind::SglangPlus,
            PolicyKind::VllmPlus,
            PolicyKind::NoCache,
        ]
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;
    fn from_str(s: &str) -> Result<Self, PolicyError> {
        match s {
            "marconi" => Ok(PolicyKind::Marconi),
            "sglang_plus" => Ok(PolicyKind::SglangPlus),
            "vllm_plus" => Ok(PolicyKind::VllmPlus),
            "no_cache" => Ok(PolicyKind::NoCache),
            other => Err(PolicyError::UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("unknown policy '{0}'; expected marconi, sglang_plus, vllm_plus, or no_cache")]
    UnknownPolicy(String),
    #[error("invalid policy config: {0}")]
    Invalid(String),
}

/// Online alpha-tuner settings (only meaningful for `marconi`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub enabled: bool,
    /// Bootstrap window length as a multiple of the number of requests seen
    /// before the first eviction. Sensible values are 5–15.
    pub bootstrap_multiplier: f64,
    /// Candidate alpha values; must include 0 so plain LRU stays reachable.
    pub alpha_grid: Vec<f64>,
    /// Worker threads for the per-alpha bootstrap replays.
    pub parallel_replays: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            enabled: false,
            bootstrap_multiplier: 10.0,
            alpha_grid: vec![0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0],
            parallel_replays: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Weight of FLOP efficiency in the eviction utility; 0 is exact LRU.
    /// For `marconi` with the tuner enabled this is only the starting value.
    pub alpha: f64,
    /// Checkpoint granularity (tokens) for `vllm_plus`.
    pub block_size: usize,
    /// Align judicious branch checkpoints down to a multiple of the model's
    /// prefill chunk size.
    pub chunk_align: bool,
    pub tuner: TunerConfig,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        PolicyConfig {
            kind,
            alpha: 0.0,
            block_size: 32,
            chunk_align: true,
            tuner: TunerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.block_size == 0 {
            return Err(PolicyError::Invalid("block_size must be positive".into()));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(PolicyError::Invalid("alpha must be finite and >= 0".into()));
        }
        if self.tuner.enabled {
            let m = self.tuner.bootstrap_multiplier;
            if !(5.0..=15.0).contains(&m) {
                return Err(PolicyError::Invalid(format!(
                    "bootstrap_multiplier {m} outside supported range [5, 15]"
                )));
            }
            if !self.tuner.alpha_grid.contains(&0.0) {
                return Err(PolicyError::Invalid(
                    "alpha_grid must contain 0 so LRU remains reachable".into(),
                ));
            }
            if self
                .tuner
                .alpha_grid
                .iter()
                .any(|a| !a.is_finite() || *a < 0.0)
            {
                return Err(PolicyError::Invalid(
                    "alpha_grid entries must be finite and >= 0".into(),
                ));
            }
            if self.tuner.alpha_grid.is_empty() {
                return Err(PolicyError::Invalid("alpha_grid must not be empty".into()));
            }
            if self.tuner.parallel_replays == 0 {
                return Err(PolicyError::Invalid(
                    "parallel_replays must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Checkpoint positions a request is allowed to leave in the cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionPlan {
    /// Checkpoints inside the sequence (branch points or block boundaries).
    pub prefill_checkpoints: BTreeSet<usize>,
    /// Checkpoint at the end of the full sequence (input + output).
    pub final_checkpoint: usize,
}

impl AdmissionPlan {
    /// All checkpoint positions, merged.
    pub fn checkpoint_set(&self) -> BTreeSet<usize> {
        let mut s = self.prefill_checkpoints.clone();
        s.insert(self.final_checkpoint);
        s
    }
}

/// Judicious admission: checkpoint the branch point surfaced by speculating
/// the input against the tree (aligned down to a chunk boundary when
/// `chunk_align` is set), plus the end of the full sequence.
///
/// The branch checkpoint is dropped when alignment pushes it to 0 or to a
/// position already covered by the reusable prefix (`reuse_len`).
pub fn plan_admission_marconi(
    input: &[TokenId],
    output_len: usize,
    reuse_len: usize,
    tree: &RadixTree,
    chunk_size: usize,
    chunk_align: bool,
) -> AdmissionPlan {
    let mut prefill = BTreeSet::new();
    let spec = tree.speculative_insert(input);
    if spec.admission_trigger() {
        let pos = if chunk_align {
            (spec.branch_pos / chunk_size) * chunk_size
        } else {
            spec.branch_pos
        };
        if pos > 0 && pos > reuse_len {
            prefill.insert(pos);
        }
    }
    AdmissionPlan {
        prefill_checkpoints: prefill,
        final_checkpoint: input.len() + output_len,
    }
}

/// Fine-grained admission: checkpoint every block boundary of the full
/// sequence plus its end, `ceil(len / block_size)` checkpoints in total.
pub fn plan_admission_vllm_plus(
    input_len: usize,
    output_len: usize,
    block_size: usize,
) -> AdmissionPlan {
    let end = input_len + output_len;
    let prefill: BTreeSet<usize> = (1..)
        .map(|i| i * block_size)
        .take_while(|&p| p < end)
        .collect();
    AdmissionPlan {
        prefill_checkpoints: prefill,
        final_checkpoint: end,
    }
}

/// A candidate's eviction utility: `recency_norm + alpha * flop_eff_norm`,
/// both components min-max normalized over **all** live nodes so candidate
/// scores are comparable across rounds. Lower utility evicts first.
#[derive(Debug, Clone, Copy)]
pub struct EvictionScore {
    pub node: NodeId,
    pub recency_norm: f64,
    pub flop_eff_norm: f64,
    pub utility: f64,
}

/// Score every currently evictable node. A node's FLOP efficiency is the
/// prefill compute its edge tokens avoid divided by the bytes its state
/// occupies; nodes holding no bytes score 0.
pub fn score_candidates(tree: &RadixTree, alpha: f64) -> Vec<EvictionScore> {
    let cfg = tree.config();
    let mut rec = (u64::MAX, u64::MIN);
    let mut eff = (f64::INFINITY, f64::NEG_INFINITY);
    let mut all: Vec<(NodeId, u64, f64)> = Vec::new();
    for (id, n) in tree.iter_live() {
        if id == crate::radix_cache::ROOT {
            continue;
        }
        let flops = delta_prefill_flops(n.depth_start(), n.depth_end, cfg)
            .expect("edge spans are well formed")
            .value();
        let bytes = n.state_bytes();
        let e = if bytes == 0 {
            0.0
        } else {
            flops / bytes as f64
        };
        rec = (rec.0.min(n.last_access), rec.1.max(n.last_access));
        eff = (eff.0.min(e), eff.1.max(e));
        all.push((id, n.last_access, e));
    }
    let norm_rec = move |v: u64| -> f64 {
        if rec.1 > rec.0 {
            (v - rec.0) as f64 / (rec.1 - rec.0) as f64
        } else {
            0.5
        }
    };
    let norm_eff = move |v: f64| -> f64 {
        if eff.1 > eff.0 {
            (v - eff.0) / (eff.1 - eff.0)
        } else {
            0.5
        }
    };
    let candidates: BTreeSet<NodeId> = tree.evict_candidates().into_iter().collect();
    all.retain(|(id, _, _)| candidates.contains(id));
    all.into_iter()
        .map(|(id, last, e)| {
            let recency_norm = norm_rec(last);
            let flop_eff_norm = norm_eff(e);
            EvictionScore {
                node: id,
                recency_norm,
                flop_eff_norm,
                utility: recency_norm + alpha * flop_eff_norm,
            }
        })
        .collect()
}

/// Chooses the next eviction victim. Implemented by the production utility
/// scorer; test code substitutes independent reference implementations.
pub trait EvictionPicker {
    fn pick(&self, tree: &RadixTree) -> Option<NodeId>;
}

/// Production picker: lowest utility first; ties broken by older access
/// time, then by creation order.
pub struct UtilityPicker {
    pub alpha: f64,
}

impl EvictionPicker for UtilityPicker {
    fn pick(&self, tree: &RadixTree) -> Option<NodeId> {
        score_candidates(tree, self.alpha)
            .into_iter()
            .min_by(|a, b| {
                let na = tree.get(a.node).expect("candidate is live");
                let nb = tree.get(b.node).expect("candidate is live");
                a.utility
                    .total_cmp(&b.utility)
                    .then(na.last_access.cmp(&nb.last_access))
                    .then(na.created_ord.cmp(&nb.created_ord))
            })
            .map(|s| s.node)
    }
}

/// One eviction, identified durably (node slots are never reused).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvictionEvent {
    pub node_ord: u64,
    pub depth_end: usize,
    pub had_checkpoint: bool,
    pub bytes_freed: u64,
}

#[derive(Debug)]
pub enum EvictionResult {
    /// The request now fits; these nodes were evicted to make room.
    Fits(Vec<EvictionEvent>),
    /// Even after evicting everything legal the request cannot fit; the
    /// caller should skip caching it this round.
    Bypass(Vec<EvictionEvent>),
}

/// Evict victims chosen by `picker` until `bytes_needed` more bytes fit
/// under `capacity_bytes`.
pub fn evict_until(
    tree: &mut RadixTree,
    bytes_needed: u64,
    capacity_bytes: u64,
    picker: &dyn EvictionPicker,
) -> EvictionResult {
    let mut events = Vec::new();
    loop {
        if tree.total_bytes().0.saturating_add(bytes_needed) <= capacity_bytes {
            return EvictionResult::Fits(events);
        }
        let Some(victim) = picker.pick(tree) else {
            return EvictionResult::Bypass(events);
        };
        let (ord, depth, had) = {
            let n = tree.get(victim).expect("picker returns live nodes");
            (n.created_ord, n.depth_end, n.has_ssm_checkpoint)
        };
        let freed = tree
            .remove_node(victim)
            .expect("picker returns evictable nodes");
        events.push(EvictionEvent {
            node_ord: ord,
            depth_end: depth,
            had_checkpoint: had,
            bytes_freed: freed,
        });
    }
}

/// Result of one tuner invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaTuneReport {
    pub chosen: f64,
    /// (alpha, token hit rate over the bootstrap window), in grid order.
    pub grid_hit_rates: Vec<(f64, f64)>,
}

/// Grid-search alpha: replay the bootstrap window from `snapshot` under each
/// candidate and keep the alpha with the highest token hit rate (ties go to
/// the smallest alpha, biasing toward plain LRU).
pub fn tune_alpha(
    snapshot: &RadixTree,
    bootstrap: &[Request],
    policy: &PolicyConfig,
    capacity_bytes: u64,
) -> AlphaTuneReport {
    let grid = &policy.tuner.alpha_grid;
    let run = |alpha: f64| -> (f64, f64) {
        let rate = crate::engine::bootstrap_hit_rate(
            snapshot.clone(),
            bootstrap,
            alpha,
            policy,
            capacity_bytes,
        );
        (alpha, rate)
    };
    let grid_hit_rates: Vec<(f64, f64)> = if policy.tuner.parallel_replays > 1 && grid.len() > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(policy.tuner.parallel_replays.min(grid.len()))
            .build()
            .expect("thread pool");
        pool.install(|| grid.par_iter().map(|&a| run(a)).collect())
    } else {
        grid.iter().map(|&a| run(a)).collect()
    };
    let mut chosen = (f64::NEG_INFINITY, f64::INFINITY); // (rate, alpha)
    for &(alpha, rate) in &grid_hit_rates {
        if rate > chosen.0 || (rate == chosen.0 && alpha < chosen.1) {
            chosen = (rate, alpha);
        }
    }
    AlphaTuneReport {
        chosen: chosen.1,
        grid_hit_rates,
    }
}
