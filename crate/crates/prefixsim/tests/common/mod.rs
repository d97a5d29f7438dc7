//! Shared test support: a brute-force flat-list cache oracle, an
//! independent reference LRU picker, and small trace builders.
//!
//! Everything here is deliberately implemented from first principles on
//! flat data structures — no radix trees — so agreement with the library is
//! meaningful evidence rather than the same code run twice.

// Each integration test binary compiles its own copy of this module and
// none of them uses every helper.
#![allow(dead_code)]

use prefixsim::policies::EvictionPicker;
use prefixsim::radix_cache::{NodeId, RadixTree, TokenId};
use prefixsim::workload::{Request, Trace};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Longest common prefix of two token slices.
pub fn lcp(a: &[TokenId], b: &[TokenId]) -> usize {
    a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count()
}

/// Brute-force prefix cache: a flat list of `(sequence, checkpoint set)`
/// entries, with every query answered by scanning all of them.
pub struct FlatCache {
    pub hybrid: bool,
    pub entries: Vec<(Vec<TokenId>, BTreeSet<usize>)>,
}

impl FlatCache {
    pub fn new(hybrid: bool) -> Self {
        FlatCache {
            hybrid,
            entries: Vec::new(),
        }
    }

    /// Longest prefix of `input` present anywhere in the cache.
    pub fn matched(&self, input: &[TokenId]) -> usize {
        self.entries
            .iter()
            .map(|(seq, _)| lcp(seq, input))
            .max()
            .unwrap_or(0)
    }

    /// Prefill tokens a lookup of `input` may skip. With SSM state in play
    /// reuse must resume from a stored checkpoint, so it is the deepest
    /// checkpoint position lying on a matching prefix; without SSM state it
    /// is the raw longest common prefix.
    pub fn reuse(&self, input: &[TokenId]) -> usize {
        if !self.hybrid {
            return self.matched(input);
        }
        self.entries
            .iter()
            .flat_map(|(seq, ckpts)| {
                let m = lcp(seq, input);
                ckpts.iter().copied().filter(move |&c| c <= m)
            })
            .max()
            .unwrap_or(0)
    }

    /// Would token position `p` along `input`'s path already sit on a node
    /// boundary? True when an entry ends there, holds a checkpoint there,
    /// or two entries that both follow `input` past/to `p` diverge exactly
    /// there.
    fn is_boundary(&self, input: &[TokenId], p: usize) -> bool {
        if p == 0 {
            return true;
        }
        for (seq, ckpts) in &self.entries {
            if lcp(seq, input) >= p && (seq.len() == p || ckpts.contains(&p)) {
                return true;
            }
        }
        for (i, (a, _)) in self.entries.iter().enumerate() {
            for (b, _) in self.entries.iter().skip(i + 1) {
                if lcp(a, b) == p && lcp(a, input) >= p && lcp(b, input) >= p {
                    return true;
                }
            }
        }
        false
    }

    /// Flat recomputation of the speculative-insertion probe:
    /// `(creates_intermediate_node, branch_pos, existing_node_missing_ssm)`.
    pub fn speculate(&self, input: &[TokenId]) -> (bool, usize, bool) {
        let m = self.matched(input);
        if m == 0 || m == input.len() {
            return (false, 0, false);
        }
        if !self.is_boundary(input, m) {
            return (true, m, false);
        }
        let has_ckpt = self
            .entries
            .iter()
            .any(|(seq, ckpts)| lcp(seq, input) >= m && ckpts.contains(&m));
        (false, m, !has_ckpt)
    }

    /// Judicious admission, recomputed flat: checkpoint the (chunk-aligned)
    /// branch point when the probe fires, plus the end of the full sequence.
    pub fn plan_marconi(
        &self,
        input: &[TokenId],
        output_len: usize,
        reuse_len: usize,
        chunk_size: usize,
        chunk_align: bool,
    ) -> BTreeSet<usize> {
        let mut ckpts = BTreeSet::new();
        let (creates, branch_pos, missing) = self.speculate(input);
        if creates || missing {
            let pos = if chunk_align {
                (branch_pos / chunk_size) * chunk_size
            } else {
                branch_pos
            };
            if pos > 0 && pos > reuse_len {
                ckpts.insert(pos);
            }
        }
        ckpts.insert(input.len() + output_len);
        ckpts
    }

    /// Block-granular admission: every multiple of `block_size` plus the
    /// sequence end.
    pub fn plan_vllm(len: usize, block_size: usize) -> BTreeSet<usize> {
        let mut ckpts: BTreeSet<usize> = (1..)
            .map(|i| i * block_size)
            .take_while(|&p| p < len)
            .collect();
        ckpts.insert(len);
        ckpts
    }

    pub fn admit(&mut self, full_seq: Vec<TokenId>, ckpts: BTreeSet<usize>) {
        self.entries.push((full_seq, ckpts));
    }
}

/// Independent reference LRU: evict the least recently used legal candidate,
/// breaking ties by creation order.
pub struct RefLruPicker;

impl EvictionPicker for RefLruPicker {
    fn pick(&self, tree: &RadixTree) -> Option<NodeId> {
        tree.evict_candidates().into_iter().min_by_key(|&id| {
            let n = tree.get(id).expect("candidate is live");
            (n.last_access, n.created_ord)
        })
    }
}

/// Random micro-trace on a tiny alphabet: short sequences, frequent shared
/// prefixes (some requests extend an earlier request's full sequence).
pub fn micro_trace(seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_requests = rng.gen_range(1..=20);
    let mut past: Vec<Vec<TokenId>> = Vec::new();
    let mut requests = Vec::new();
    for i in 0..n_requests {
        let mut input: Vec<TokenId> = Vec::new();
        if !past.is_empty() && rng.gen_bool(0.6) {
            let base = &past[rng.gen_range(0..past.len())];
            let keep = rng.gen_range(1..=base.len());
            input.extend_from_slice(&base[..keep]);
        }
        let fresh = rng.gen_range(1..=16);
        for _ in 0..fresh {
            input.push(rng.gen_range(0..4u32));
        }
        input.truncate(64);
        let out_len = rng.gen_range(0..=8);
        let output: Vec<TokenId> = (0..out_len).map(|_| rng.gen_range(0..4u32)).collect();
        let mut full = input.clone();
        full.extend_from_slice(&output);
        full.truncate(64);
        let output = full[input.len().min(full.len())..].to_vec();
        past.push(full);
        requests.push(Request {
            session_id: 0,
            request_id: i as u64,
            arrival_ms: i as f64 * 100.0,
            input_tokens: input,
            output_tokens: output,
        });
    }
    Trace { requests }
}
