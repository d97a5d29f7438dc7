//! Token-level radix tree over cached prefixes with exact byte accounting.
//!
//! Each node owns an edge of tokens and the cache state attributed to it:
//! the KV entries for its edge tokens (summed across attention layers) and,
//! if the node carries an SSM checkpoint, one fixed-size recurrent-state
//! snapshot (summed across SSM layers, conv window included). Checkpoints
//! always sit on node boundaries — [`RadixTree::insert`] splits edges so
//! that every requested checkpoint position ends a node.
//!
//! Reuse semantics follow the in-place-update constraint of SSM states:
//! when the model has SSM layers, a lookup may only resume from a position
//! that holds a checkpoint, so `reuse_len` is the deepest fully matched
//! checkpointed boundary. With no SSM layers, KV entries can be sliced at
//! any token and `reuse_len` is the plain longest common prefix.
//!
//! Recency is tracked with a tree-owned logical clock. A lookup touches
//! exactly one node — the deepest node whose state is actually reused —
//! leaving ancestor timestamps untouched so that eviction can distinguish
//! interior nodes that merely sit on popular paths from nodes whose states
//! earn their keep.

use crate::cost_model::{seq_kv_bytes, ssm_checkpoint_bytes, ByteCount, ModelConfig};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub type TokenId = u32;

/// Stable handle to a node. Slots are never reused within a tree's lifetime,
/// so a `NodeId` observed in logs uniquely identifies one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

pub const ROOT: NodeId = NodeId(0);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct RadixNode {
    /// Tokens on the edge from the parent to this node.
    pub edge: Vec<TokenId>,
    /// Children keyed by the first token of their edge.
    pub children: BTreeMap<TokenId, NodeId>,
    pub parent: NodeId,
    /// Token depth of this node's end, measured from the root.
    pub depth_end: usize,
    pub has_ssm_checkpoint: bool,
    /// Position of the checkpoint (equals `depth_end` whenever set).
    pub checkpoint_pos: usize,
    /// KV bytes for this edge's tokens across all attention layers.
    pub kv_bytes: u64,
    /// SSM checkpoint bytes (0 unless `has_ssm_checkpoint`).
    pub ssm_bytes: u64,
    /// Block-rounding waste charged to this node (leaf tails only, and only
    /// when the tree models block-granular KV allocation).
    pub pad_bytes: u64,
    pub last_access: u64,
    /// Creation order, used as a deterministic tie-breaker.
    pub created_ord: u64,
    /// Pinned nodes are exempt from eviction (set around in-flight requests).
    pub pinned: bool,
}

impl RadixNode {
    pub fn depth_start(&self) -> usize {
        self.depth_end - self.edge.len()
    }

    /// Total bytes this node contributes to cache occupancy.
    pub fn state_bytes(&self) -> u64 {
        self.kv_bytes + self.ssm_bytes + self.pad_bytes
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// What inserting a given input sequence would do to the tree structure.
///
/// A branch that materializes an intermediate node, or lands on an existing
/// boundary that lacks an SSM checkpoint, is evidence that this prefix is
/// shared across requests and therefore worth checkpointing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeculationOutcome {
    /// The input diverges strictly inside an existing edge, so a real insert
    /// would split that edge and create a new interior node.
    pub creates_intermediate_node: bool,
    /// Token position where the input departs from (or stops matching) the
    /// tree; 0 when the input is fully contained or matches nothing.
    pub branch_pos: usize,
    /// The input departs exactly at an existing node boundary that has no
    /// SSM checkpoint.
    pub existing_node_missing_ssm: bool,
}

impl SpeculationOutcome {
    /// True when the structure signals a reusable shared prefix.
    pub fn admission_trigger(&self) -> bool {
        self.creates_intermediate_node || self.existing_node_missing_ssm
    }
}

#[derive(Debug, Clone)]
pub struct LookupResult {
    /// Tokens of prefill that can be skipped by resuming from cached state.
    pub reuse_len: usize,
    /// Raw longest-common-prefix length against the tree.
    pub matched_len: usize,
    /// Nodes visited while matching, shallowest first; the last entry may be
    /// only partially matched.
    pub path: Vec<NodeId>,
    /// The node whose state supplies the reuse (touched by this lookup).
    pub reused_node: Option<NodeId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RadixError {
    #[error("checkpoint position {pos} invalid for sequence of length {seq_len}")]
    InvalidCheckpoint { pos: usize, seq_len: usize },
    #[error("the root node cannot be removed")]
    RemoveRoot,
    #[error("node {0} is pinned by an in-flight request")]
    RemovePinned(NodeId),
    #[error("node {id} has {children} children; only nodes with at most one child are evictable")]
    RemoveBranching { id: NodeId, children: usize },
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("touch on node {node} would move its timestamp backwards ({have} -> {got})")]
    NonMonotoneTouch { node: NodeId, have: u64, got: u64 },
}

/// End state of a longest-prefix walk.
struct WalkEnd {
    /// Deepest fully matched boundary node (root if none).
    boundary: NodeId,
    /// Tokens matched in total.
    matched: usize,
    /// Set when matching stopped strictly inside an edge: (node, edge offset).
    partial: Option<(NodeId, usize)>,
    /// Visited nodes, shallowest first; last may be partially matched.
    path: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct RadixTree {
    nodes: Vec<Option<RadixNode>>,
    cfg: ModelConfig,
    /// When set, KV for each cached sequence tail is rounded up to this many
    /// tokens (block-granular allocator model); the rounding waste is charged
    /// to the leaf as `pad_bytes`.
    kv_block_pad: Option<usize>,
    clock: u64,
    next_ord: u64,
    kv_total: u64,
    ssm_total: u64,
    pad_total: u64,
    /// Bytes per cached token across all attention layers.
    kv_unit: u64,
    /// Bytes per SSM checkpoint across all SSM layers.
    ssm_unit: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeStats {
    /// Live nodes, excluding the root.
    pub nodes: usize,
    pub checkpoints: usize,
    pub kv_bytes: u64,
    pub ssm_bytes: u64,
    pub pad_bytes: u64,
    pub total_bytes: u64,
}

impl RadixTree {
    pub fn new(cfg: ModelConfig) -> Self {
        let kv_unit = seq_kv_bytes(1, &cfg).0;
        let ssm_unit = ssm_checkpoint_bytes(&cfg).0;
        let root = RadixNode {
            edge: Vec::new(),
            children: BTreeMap::new(),
            parent: ROOT,
            depth_end: 0,
            has_ssm_checkpoint: false,
            checkpoint_pos: 0,
            kv_bytes: 0,
            ssm_bytes: 0,
            pad_bytes: 0,
            last_access: 0,
            created_ord: 0,
            pinned: false,
        };
        RadixTree {
            nodes: vec![Some(root)],
            cfg,
            kv_block_pad: None,
            clock: 0,
            next_ord: 1,
            kv_total: 0,
            ssm_total: 0,
            pad_total: 0,
            kv_unit,
            ssm_unit,
        }
    }

    /// Model block-granular KV allocation: each cached sequence tail is
    /// charged up to the next multiple of `block_size` tokens.
    pub fn with_kv_block_pad(mut self, block_size: usize) -> Self {
        assert!(block_size > 0, "block size must be positive");
        self.kv_block_pad = Some(block_size);
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn kv_token_bytes(&self) -> u64 {
        self.kv_unit
    }

    pub fn ssm_checkpoint_unit_bytes(&self) -> u64 {
        self.ssm_unit
    }

    // ── node access ──────────────────────────────────────────────────────

    pub fn get(&self, id: NodeId) -> Option<&RadixNode> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    fn node(&self, id: NodeId) -> &RadixNode {
        self.get(id).expect("live node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut RadixNode {
        self.nodes
            .get_mut(id.0)
            .and_then(Option::as_mut)
            .expect("live node")
    }

    pub fn iter_live(&self) -> impl Iterator<Item = (NodeId, &RadixNode)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.as_ref().map(|n| (NodeId(i), n)))
    }

    // ── clock ────────────────────────────────────────────────────────────

    /// Advance the logical clock and return the fresh timestamp.
    pub fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn now(&self) -> u64 {
        self.clock
    }

    /// Refresh a node's recency. Timestamps may only move forward.
    pub fn touch(&mut self, id: NodeId, t: u64) -> Result<(), RadixError> {
        let have = self.get(id).ok_or(RadixError::UnknownNode(id))?.last_access;
        if t < have {
            return Err(RadixError::NonMonotoneTouch {
                node: id,
                have,
                got: t,
            });
        }
        self.node_mut(id).last_access = t;
        self.clock = self.clock.max(t);
        Ok(())
    }

    // ── byte accounting ──────────────────────────────────────────────────

    pub fn total_bytes(&self) -> ByteCount {
        ByteCount(self.kv_total + self.ssm_total + self.pad_total)
    }

    /// Recompute occupancy by walking every live node. Used to cross-check
    /// the incrementally maintained totals.
    pub fn recompute_total_bytes(&self) -> ByteCount {
        ByteCount(self.iter_live().map(|(_, n)| n.state_bytes()).sum())
    }

    pub fn stats(&self) -> TreeStats {
        TreeStats {
            nodes: self.iter_live().filter(|(id, _)| *id != ROOT).count(),
            checkpoints: self
                .iter_live()
                .filter(|(_, n)| n.has_ssm_checkpoint)
                .count(),
            kv_bytes: self.kv_total,
            ssm_bytes: self.ssm_total,
            pad_bytes: self.pad_total,
            total_bytes: self.kv_total + self.ssm_total + self.pad_total,
        }
    }

    fn pad_for(&self, depth_end: usize) -> u64 {
        match self.kv_block_pad {
            Some(b) => (depth_end.div_ceil(b) * b - depth_end) as u64 * self.kv_unit,
            None => 0,
        }
    }

    // ── walking ──────────────────────────────────────────────────────────

    fn walk(&self, seq: &[TokenId]) -> WalkEnd {
        let mut boundary = ROOT;
        let mut matched = 0usize;
        let mut path = Vec::new();
        loop {
            if matched == seq.len() {
                return WalkEnd {
                    boundary,
                    matched,
                    partial: None,
                    path,
                };
            }
            let Some(&child) = self.node(boundary).children.get(&seq[matched]) else {
                return WalkEnd {
                    boundary,
                    matched,
                    partial: None,
                    path,
                };
            };
            let edge = &self.node(child).edge;
            let rest = &seq[matched..];
            let lcp = edge
                .iter()
                .zip(rest.iter())
                .take_while(|(a, b)| a == b)
                .count();
            matched += lcp;
            path.push(child);
            if lcp < edge.len() {
                return WalkEnd {
                    boundary,
                    matched,
                    partial: Some((child, lcp)),
                    path,
                };
            }
            boundary = child;
        }
    }

    /// Longest-prefix probe. Touches the single node whose state is reused.
    ///
    /// With SSM layers present, reuse may only resume from a checkpointed
    /// boundary, so `reuse_len` is the deepest fully matched checkpoint
    /// position; without them it is the raw longest common prefix.
    pub fn lookup(&mut self, query: &[TokenId]) -> LookupResult {
        let w = self.walk(query);
        let (reuse_len, reused) = if self.cfg.is_hybrid() {
            let mut found = (0usize, None);
            for &id in w.path.iter().rev() {
                let n = self.node(id);
                if n.has_ssm_checkpoint && n.checkpoint_pos <= w.matched {
                    found = (n.checkpoint_pos, Some(id));
                    break;
                }
            }
            found
        } else if w.matched > 0 {
            (w.matched, w.path.last().copied())
        } else {
            (0, None)
        };
        let reused_node = if reuse_len > 0 { reused } else { None };
        if let Some(id) = reused_node {
            let t = self.tick();
            self.node_mut(id).last_access = t;
        }
        LookupResult {
            reuse_len,
            matched_len: w.matched,
            path: w.path,
            reused_node,
        }
    }

    /// Nodes visited when matching `seq`, shallowest first; the last entry
    /// may be only partially matched. Read-only companion to `lookup`,
    /// useful for pinning everything an in-flight insert depends on.
    pub fn match_path(&self, seq: &[TokenId]) -> Vec<NodeId> {
        self.walk(seq).path
    }

    /// Probe what inserting `input` would do to the tree, without mutating
    /// it. Detects the branch point that admission policies checkpoint.
    pub fn speculative_insert(&self, input: &[TokenId]) -> SpeculationOutcome {
        let w = self.walk(input);
        if w.matched == 0 || w.matched == input.len() {
            return SpeculationOutcome {
                creates_intermediate_node: false,
                branch_pos: 0,
                existing_node_missing_ssm: false,
            };
        }
        match w.partial {
            Some(_) => SpeculationOutcome {
                creates_intermediate_node: true,
                branch_pos: w.matched,
                existing_node_missing_ssm: false,
            },
            None => SpeculationOutcome {
                creates_intermediate_node: false,
                branch_pos: w.matched,
                existing_node_missing_ssm: !self.node(w.boundary).has_ssm_checkpoint,
            },
        }
    }

    // ── mutation ─────────────────────────────────────────────────────────

    fn alloc(&mut self, node: RadixNode) -> NodeId {
        self.kv_total += node.kv_bytes;
        self.ssm_total += node.ssm_bytes;
        self.pad_total += node.pad_bytes;
        self.nodes.push(Some(node));
        NodeId(self.nodes.len() - 1)
    }

    /// Split `child` so that its first `k` edge tokens move into a new upper
    /// node; returns the upper node's id. Checkpoints stay with the lower
    /// half (checkpoint positions always equal node ends).
    fn split(&mut self, child_id: NodeId, k: usize) -> NodeId {
        let (parent_id, upper_edge, lower_edge, depth_end, last_access, pinned) = {
            let c = self.node(child_id);
            debug_assert!(k > 0 && k < c.edge.len());
            (
                c.parent,
                c.edge[..k].to_vec(),
                c.edge[k..].to_vec(),
                c.depth_end,
                c.last_access,
                c.pinned,
            )
        };
        let first_tok = upper_edge[0];
        let lower_first = lower_edge[0];
        let moved_kv = k as u64 * self.kv_unit;
        let ord = self.next_ord;
        self.next_ord += 1;
        let upper = self.alloc(RadixNode {
            edge: upper_edge,
            children: BTreeMap::from([(lower_first, child_id)]),
            parent: parent_id,
            depth_end: depth_end - lower_edge.len(),
            has_ssm_checkpoint: false,
            checkpoint_pos: 0,
            kv_bytes: moved_kv,
            ssm_bytes: 0,
            pad_bytes: 0,
            last_access,
            created_ord: ord,
            pinned,
        });
        // the lower half keeps its checkpoint, pad, and remaining KV
        {
            let c = self.node_mut(child_id);
            c.edge = lower_edge;
            c.parent = upper;
            c.kv_bytes -= moved_kv;
        }
        self.kv_total -= moved_kv;
        self.node_mut(parent_id).children.insert(first_tok, upper);
        upper
    }

    /// Find (or create by splitting) the node boundary at token position
    /// `pos` along the path spelled by `seq`. `pos` must lie within already
    /// present structure.
    fn ensure_boundary(&mut self, seq: &[TokenId], pos: usize) -> NodeId {
        let mut cur = ROOT;
        loop {
            let d = self.node(cur).depth_end;
            if d == pos {
                return cur;
            }
            let child = *self
                .node(cur)
                .children
                .get(&seq[d])
                .expect("checkpoint position inside matched prefix");
            let cd = self.node(child).depth_end;
            if cd > pos {
                return self.split(child, pos - d);
            }
            cur = child;
        }
    }

    /// Insert a full sequence with SSM checkpoints at the given token
    /// positions (each in `1..=seq.len()`), splitting edges so that every
    /// checkpoint lands on a node boundary. Returns net bytes added.
    ///
    /// New nodes are stamped with one fresh clock tick; existing nodes'
    /// recency is not refreshed (that is `lookup`'s job).
    pub fn insert(
        &mut self,
        seq: &[TokenId],
        checkpoints: &BTreeSet<usize>,
    ) -> Result<u64, RadixError> {
        for &c in checkpoints {
            if c == 0 || c > seq.len() {
                return Err(RadixError::InvalidCheckpoint {
                    pos: c,
                    seq_len: seq.len(),
                });
            }
        }
        if seq.is_empty() {
            return Ok(0);
        }
        let before = self.total_bytes().0;
        let stamp = self.tick();

        // Phase 1: attach the unmatched suffix, splitting at the divergence
        // point when it falls inside an edge. A fully contained sequence
        // needs no structural change here; phase 2 splits for its
        // checkpoints as required.
        let w = self.walk(seq);
        let mut attach = w.boundary;
        if w.matched < seq.len() {
            if let Some((child, lcp)) = w.partial {
                attach = self.split(child, lcp);
            }
            // The attach node stops being a sequence tail once it gains a
            // child, so it no longer carries block-rounding waste.
            if attach != ROOT && self.node(attach).is_leaf() {
                let p = self.node(attach).pad_bytes;
                self.node_mut(attach).pad_bytes = 0;
                self.pad_total -= p;
            }
            // Cut the new suffix at every checkpoint position inside it so
            // checkpoints land on node boundaries.
            let mut cuts: Vec<usize> = checkpoints
                .iter()
                .copied()
                .filter(|&c| c > w.matched && c < seq.len())
                .collect();
            cuts.push(seq.len());
            let mut start = w.matched;
            let mut parent = attach;
            for (i, &end) in cuts.iter().enumerate() {
                let is_tail = i == cuts.len() - 1;
                let has_ckpt = checkpoints.contains(&end);
                let ord = self.next_ord;
                self.next_ord += 1;
                let id = self.alloc(RadixNode {
                    edge: seq[start..end].to_vec(),
                    children: BTreeMap::new(),
                    parent,
                    depth_end: end,
                    has_ssm_checkpoint: has_ckpt,
                    checkpoint_pos: if has_ckpt { end } else { 0 },
                    kv_bytes: (end - start) as u64 * self.kv_unit,
                    ssm_bytes: if has_ckpt { self.ssm_unit } else { 0 },
                    pad_bytes: if is_tail { self.pad_for(end) } else { 0 },
                    last_access: stamp,
                    created_ord: ord,
                    pinned: false,
                });
                self.node_mut(parent).children.insert(seq[start], id);
                parent = id;
                start = end;
            }
        }

        // Phase 2: checkpoints that fall inside the already matched prefix.
        for &c in checkpoints {
            if c <= w.matched {
                let b = self.ensure_boundary(seq, c);
                let ssm_unit = self.ssm_unit;
                let n = self.node_mut(b);
                if !n.has_ssm_checkpoint {
                    n.has_ssm_checkpoint = true;
                    n.checkpoint_pos = c;
                    n.ssm_bytes = ssm_unit;
                    self.ssm_total += ssm_unit;
                }
            }
        }

        let after = self.total_bytes().0;
        debug_assert!(after >= before);
        Ok(after - before)
    }

    /// Net bytes [`RadixTree::insert`] would add, without mutating the tree.
    pub fn plan_insert_bytes(
        &self,
        seq: &[TokenId],
        checkpoints: &BTreeSet<usize>,
    ) -> Result<u64, RadixError> {
        for &c in checkpoints {
            if c == 0 || c > seq.len() {
                return Err(RadixError::InvalidCheckpoint {
                    pos: c,
                    seq_len: seq.len(),
                });
            }
        }
        if seq.is_empty() {
            return Ok(0);
        }
        let w = self.walk(seq);
        let kv_added = (seq.len() - w.matched) as u64 * self.kv_unit;
        let existing: BTreeSet<usize> = w
            .path
            .iter()
            .filter_map(|&id| {
                let n = self.node(id);
                (n.has_ssm_checkpoint && n.checkpoint_pos <= w.matched).then_some(n.checkpoint_pos)
            })
            .collect();
        let new_ckpts = checkpoints.iter().filter(|c| !existing.contains(c)).count() as u64;
        let mut pad_added = 0;
        let mut pad_removed = 0;
        if self.kv_block_pad.is_some() && w.matched < seq.len() {
            pad_added = self.pad_for(seq.len());
            if w.partial.is_none() && w.boundary != ROOT && self.node(w.boundary).is_leaf() {
                pad_removed = self.node(w.boundary).pad_bytes;
            }
        }
        Ok(kv_added + new_ckpts * self.ssm_unit + pad_added - pad_removed)
    }

    /// Nodes legal to evict right now: non-root, not pinned, at most one
    /// child. Returned in ascending id order for determinism.
    pub fn evict_candidates(&self) -> Vec<NodeId> {
        self.iter_live()
            .filter(|(id, n)| *id != ROOT && !n.pinned && n.children.len() <= 1)
            .map(|(id, _)| id)
            .collect()
    }

    /// Remove one node and return the bytes freed (net of any padding that
    /// reappears on the parent when it becomes a sequence tail).
    ///
    /// * Leaf: frees its KV, checkpoint, and padding.
    /// * Single-child node: frees only its checkpoint; the child absorbs the
    ///   edge and its KV, so prefix KV needed by deeper checkpoints
    ///   survives.
    pub fn remove_node(&mut self, id: NodeId) -> Result<u64, RadixError> {
        if id == ROOT {
            return Err(RadixError::RemoveRoot);
        }
        let n = self.get(id).ok_or(RadixError::UnknownNode(id))?;
        if n.pinned {
            return Err(RadixError::RemovePinned(id));
        }
        match n.children.len() {
            0 => {
                let parent = n.parent;
                let first = n.edge[0];
                let (kv, ssm, pad) = (n.kv_bytes, n.ssm_bytes, n.pad_bytes);
                self.kv_total -= kv;
                self.ssm_total -= ssm;
                self.pad_total -= pad;
                self.node_mut(parent).children.remove(&first);
                self.nodes[id.0] = None;
                let mut freed = kv + ssm + pad;
                // the parent is now the deepest point of this sequence and
                // takes over the tail's block-rounding waste
                if parent != ROOT && self.node(parent).is_leaf() {
                    let p = self.pad_for(self.node(parent).depth_end);
                    self.node_mut(parent).pad_bytes = p;
                    self.pad_total += p;
                    freed = freed
                        .checked_sub(p)
                        .expect("tail padding never exceeds the bytes freed below it");
                }
                Ok(freed)
            }
            1 => {
                let parent = n.parent;
                let first = n.edge[0];
                let ssm = n.ssm_bytes;
                let kv = n.kv_bytes;
                let mut edge = n.edge.clone();
                debug_assert_eq!(n.pad_bytes, 0, "non-leaf nodes carry no padding");
                let child_id = *n.children.values().next().expect("one child");
                {
                    let c = self.node_mut(child_id);
                    edge.extend(c.edge.iter().copied());
                    c.edge = edge;
                    c.kv_bytes += kv;
                    c.parent = parent;
                }
                self.ssm_total -= ssm;
                self.node_mut(parent).children.insert(first, child_id);
                self.nodes[id.0] = None;
                Ok(ssm)
            }
            k => Err(RadixError::RemoveBranching { id, children: k }),
        }
    }

    // ── pinning ──────────────────────────────────────────────────────────

    pub fn pin(&mut self, ids: &[NodeId]) {
        for &id in ids {
            if let Some(n) = self.nodes.get_mut(id.0).and_then(Option::as_mut) {
                n.pinned = true;
            }
        }
    }

    pub fn unpin_all(&mut self) {
        for n in self.nodes.iter_mut().flatten() {
            n.pinned = false;
        }
    }

    // ── diagnostics ──────────────────────────────────────────────────────

    /// Verify every structural and accounting invariant; returns a
    /// description of the first violation found.
    pub fn check_invariants(&self) -> Result<(), String> {
        let root = self.get(ROOT).ok_or("root missing")?;
        if !root.edge.is_empty() || root.depth_end != 0 || root.has_ssm_checkpoint {
            return Err("root must be empty and checkpoint-free".into());
        }
        let mut kv = 0u64;
        let mut ssm = 0u64;
        let mut pad = 0u64;
        let mut live = 0usize;
        for (id, n) in self.iter_live() {
            live += 1;
            kv += n.kv_bytes;
            ssm += n.ssm_bytes;
            pad += n.pad_bytes;
            if n.last_access > self.clock {
                return Err(format!("{id}: timestamp ahead of clock"));
            }
            for (&tok, &cid) in &n.children {
                let c = self.get(cid).ok_or(format!("{id}: dead child {cid}"))?;
                if c.parent != id {
                    return Err(format!("{cid}: parent link mismatch"));
                }
                if c.edge.first() != Some(&tok) {
                    return Err(format!("{cid}: keyed by wrong first token"));
                }
            }
            if id == ROOT {
                continue;
            }
            if n.edge.is_empty() {
                return Err(format!("{id}: empty edge"));
            }
            let p = self.get(n.parent).ok_or(format!("{id}: dead parent"))?;
            if p.children.get(&n.edge[0]) != Some(&id) {
                return Err(format!("{id}: not registered under parent"));
            }
            if n.depth_end != p.depth_end + n.edge.len() {
                return Err(format!("{id}: depth arithmetic broken"));
            }
            if n.kv_bytes != n.edge.len() as u64 * self.kv_unit {
                return Err(format!("{id}: kv bytes do not match edge length"));
            }
            if n.has_ssm_checkpoint {
                if n.checkpoint_pos != n.depth_end {
                    return Err(format!("{id}: checkpoint not on node boundary"));
                }
                if n.ssm_bytes != self.ssm_unit {
                    return Err(format!("{id}: checkpoint bytes wrong"));
                }
            } else if n.ssm_bytes != 0 {
                return Err(format!("{id}: ssm bytes without checkpoint"));
            }
            let want_pad = if n.is_leaf() {
                self.pad_for(n.depth_end)
            } else {
                0
            };
            if n.pad_bytes != want_pad {
                return Err(format!(
                    "{id}: pad bytes {} != expected {want_pad}",
                    n.pad_bytes
                ));
            }
        }
        if (kv, ssm, pad) != (self.kv_total, self.ssm_total, self.pad_total) {
            return Err(format!(
                "totals drifted: walked ({kv},{ssm},{pad}) vs tracked ({},{},{})",
                self.kv_total, self.ssm_total, self.pad_total
            ));
        }
        // reachability
        let mut seen = 0usize;
        let mut stack = vec![ROOT];
        while let Some(id) = stack.pop() {
            seen += 1;
            stack.extend(self.node(id).children.values().copied());
        }
        if seen != live {
            return Err(format!("{} live nodes but {seen} reachable", live));
        }
        Ok(())
    }

    /// Human-readable outline of the tree.
    pub fn dump_text(&self) -> String {
        let s = self.stats();
        let mut out = format!(
            "radix tree: {} nodes, {} checkpoints, {} bytes (kv {}, ssm {}, pad {})\n",
            s.nodes, s.checkpoints, s.total_bytes, s.kv_bytes, s.ssm_bytes, s.pad_bytes
        );
        let mut stack: Vec<(NodeId, usize)> = vec![(ROOT, 0)];
        while let Some((id, depth)) = stack.pop() {
            let n = self.node(id);
            let head: Vec<String> = n.edge.iter().take(4).map(|t| t.to_string()).collect();
            let ellipsis = if n.edge.len() > 4 { ".." } else { "" };
            out.push_str(&format!(
                "{}{id} ({},{}] edge=[{}{}] {}kv={} ssm={} pad={} t={}\n",
                "  ".repeat(depth),
                n.depth_start(),
                n.depth_end,
                head.join(","),
                ellipsis,
                if n.has_ssm_checkpoint { "ckpt " } else { "" },
                n.kv_bytes,
                n.ssm_bytes,
                n.pad_bytes,
                n.last_access,
            ));
            for &c in n.children.values().rev() {
                stack.push((c, depth + 1));
            }
        }
        out
    }

    /// JSON outline (nested) of the tree, suitable for tooling.
    pub fn dump_json(&self) -> serde_json::Value {
        fn node_json(tree: &RadixTree, id: NodeId) -> serde_json::Value {
            let n = tree.node(id);
            json!({
                "id": id.0,
                "depth_start": n.depth_start(),
                "depth_end": n.depth_end,
                "edge_len": n.edge.len(),
                "edge_head": n.edge.iter().take(4).collect::<Vec<_>>(),
                "checkpoint": n.has_ssm_checkpoint,
                "kv_bytes": n.kv_bytes,
                "ssm_bytes": n.ssm_bytes,
                "pad_bytes": n.pad_bytes,
                "last_access": n.last_access,
                "children": n.children.values().map(|&c| node_json(tree, c)).collect::<Vec<_>>(),
            })
        }
        let s = self.stats();
        json!({
            "nodes": s.nodes,
            "checkpoints": s.checkpoints,
            "total_bytes": s.total_bytes,
            "root": node_json(self, ROOT),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_model::ModelConfig;

    fn tree() -> RadixTree {
        RadixTree::new(ModelConfig::hybrid_7b())
    }

    fn ck(positions: &[usize]) -> BTreeSet<usize> {
        positions.iter().copied().collect()
    }

    #[test]
    fn insert_builds_chain_with_exact_bytes() {
        let mut t = tree();
        let kv = t.kv_token_bytes();
        let ssm = t.ssm_checkpoint_unit_bytes();
        let delta = t.insert(&[1, 2, 3, 4], &ck(&[2, 4])).unwrap();
        assert_eq!(delta, 4 * kv + 2 * ssm);
        assert_eq!(t.total_bytes().0, delta);
        assert_eq!(t.recompute_total_bytes(), t.total_bytes());
        let s = t.stats();
        assert_eq!((s.nodes, s.checkpoints), (2, 2));
        t.check_invariants().unwrap();
    }

    #[test]
    fn insert_rejects_bad_checkpoints() {
        let mut t = tree();
        assert!(matches!(
            t.insert(&[1, 2], &ck(&[0])),
            Err(RadixError::InvalidCheckpoint { pos: 0, .. })
        ));
        assert!(matches!(
            t.insert(&[1, 2], &ck(&[3])),
            Err(RadixError::InvalidCheckpoint { pos: 3, .. })
        ));
    }

    #[test]
    fn speculation_reports_branch_structure() {
        let mut t = tree();
        // empty tree: nothing matches
        let s = t.speculative_insert(&[1, 2]);
        assert_eq!(
            s,
            SpeculationOutcome {
                creates_intermediate_node: false,
                branch_pos: 0,
                existing_node_missing_ssm: false,
            }
        );

        t.insert(&[1, 2, 3, 4], &ck(&[4])).unwrap();
        // diverges inside the single edge
        let s = t.speculative_insert(&[1, 2, 9, 9]);
        assert_eq!(
            s,
            SpeculationOutcome {
                creates_intermediate_node: true,
                branch_pos: 2,
                existing_node_missing_ssm: false,
            }
        );
        // fully contained input sets no flags
        let s = t.speculative_insert(&[1, 2, 3, 4]);
        assert!(!s.admission_trigger());
        let s = t.speculative_insert(&[1, 2, 3]);
        assert!(!s.admission_trigger());

        // create a boundary at 2 without a checkpoint there
        t.insert(&[1, 2, 9, 9], &ck(&[4])).unwrap();
        let s = t.speculative_insert(&[1, 2, 7, 7]);
        assert_eq!(
            s,
            SpeculationOutcome {
                creates_intermediate_node: false,
                branch_pos: 2,
                existing_node_missing_ssm: true,
            }
        );

        // checkpoint that boundary; the same probe no longer triggers
        t.insert(&[1, 2], &ck(&[2])).unwrap();
        let s = t.speculative_insert(&[1, 2, 7, 7]);
        assert_eq!(
            s,
            SpeculationOutcome {
                creates_intermediate_node: false,
                branch_pos: 2,
                existing_node_missing_ssm: false,
            }
        );
        t.check_invariants().unwrap();
    }

    #[test]
    fn hybrid_lookup_reuses_only_checkpointed_boundaries() {
        let mut t = tree();
        t.insert(&[1, 2, 3, 4, 5, 6, 7, 8], &ck(&[8])).unwrap();
        // longest common prefix is 6 but there is no checkpoint at or below 6
        let r = t.lookup(&[1, 2, 3, 4, 5, 6]);
        assert_eq!((r.reuse_len, r.matched_len), (0, 6));
        assert!(r.reused_node.is_none());
        // exact full match reuses the checkpoint at 8
        let r = t.lookup(&[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(r.reuse_len, 8);
        // a longer query still resumes from 8
        let r = t.lookup(&[1, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!((r.reuse_len, r.matched_len), (8, 8));
    }

    #[test]
    fn transformer_lookup_reuses_any_prefix() {
        let mut t = RadixTree::new(ModelConfig::pure_transformer(28, 28, 4096));
        t.insert(&[1, 2, 3, 4, 5, 6, 7, 8], &ck(&[])).unwrap();
        let r = t.lookup(&[1, 2, 3, 4, 5, 9]);
        assert_eq!((r.reuse_len, r.matched_len), (5, 5));
    }

    #[test]
    fn lookup_touches_only_the_reused_node() {
        let mut t = tree();
        t.insert(&[1, 2, 3, 4], &ck(&[2, 4])).unwrap();
        let ids: Vec<NodeId> = t
            .iter_live()
            .filter(|(id, _)| *id != ROOT)
            .map(|(id, _)| id)
            .collect();
        let before: Vec<u64> = ids.iter().map(|&i| t.get(i).unwrap().last_access).collect();
        let r = t.lookup(&[1, 2, 3, 4]);
        let reused = r.reused_node.unwrap();
        assert_eq!(t.get(reused).unwrap().checkpoint_pos, 4);
        for (&id, &b) in ids.iter().zip(&before) {
            let now = t.get(id).unwrap().last_access;
            if id == reused {
                assert!(now > b, "reused node must be refreshed");
            } else {
                assert_eq!(now, b, "other nodes must keep their timestamps");
            }
        }
    }

    #[test]
    fn checkpoint_inside_matched_prefix_splits_edge() {
        let mut t = tree();
        let ssm = t.ssm_checkpoint_unit_bytes();
        t.insert(&[1, 2, 3, 4, 5, 6, 7, 8], &ck(&[8])).unwrap();
        let delta = t.insert(&[1, 2, 3, 4], &ck(&[4])).unwrap();
        assert_eq!(
            delta, ssm,
            "re-inserting a contained prefix only adds its checkpoint"
        );
        let r = t.lookup(&[1, 2, 3, 4, 9]);
        assert_eq!(r.reuse_len, 4);
        t.check_invariants().unwrap();
    }

    #[test]
    fn remove_leaf_frees_state_and_merge_keeps_kv() {
        let mut t = tree();
        let kv = t.kv_token_bytes();
        let ssm = t.ssm_checkpoint_unit_bytes();
        t.insert(&[1, 2, 3, 4], &ck(&[2, 4])).unwrap();
        let leaf = t
            .iter_live()
            .find(|(_, n)| n.depth_end == 4)
            .map(|(id, _)| id)
            .unwrap();
        let freed = t.remove_node(leaf).unwrap();
        assert_eq!(freed, 2 * kv + ssm);
        t.check_invariants().unwrap();

        // rebuild a 1-child chain: (0,2] ckpt -> (2,4] ckpt
        t.insert(&[1, 2, 3, 4], &ck(&[4])).unwrap();
        let mid = t
            .iter_live()
            .find(|(_, n)| n.depth_end == 2)
            .map(|(id, _)| id)
            .unwrap();
        let freed = t.remove_node(mid).unwrap();
        assert_eq!(freed, ssm, "merging a mid node frees only its checkpoint");
        // the merged node still answers a full-prefix hit at 4
        let r = t.lookup(&[1, 2, 3, 4]);
        assert_eq!(r.reuse_len, 4);
        assert_eq!(t.stats().kv_bytes, 4 * kv, "prefix KV survives the merge");
        t.check_invariants().unwrap();
    }

    #[test]
    fn remove_rejects_root_pinned_and_branching() {
        let mut t = tree();
        t.insert(&[1, 2, 3, 4], &ck(&[4])).unwrap();
        t.insert(&[1, 2, 9, 9], &ck(&[4])).unwrap();
        assert_eq!(t.remove_node(ROOT), Err(RadixError::RemoveRoot));
        let branch = t
            .iter_live()
            .find(|(_, n)| n.children.len() == 2 && n.depth_end == 2)
            .map(|(id, _)| id)
            .unwrap();
        assert!(matches!(
            t.remove_node(branch),
            Err(RadixError::RemoveBranching { children: 2, .. })
        ));
        let leaf = t
            .iter_live()
            .find(|(id, n)| *id != ROOT && n.is_leaf())
            .map(|(id, _)| id)
            .unwrap();
        t.pin(&[leaf]);
        assert_eq!(t.remove_node(leaf), Err(RadixError::RemovePinned(leaf)));
        t.unpin_all();
        assert!(t.remove_node(leaf).is_ok());
        t.check_invariants().unwrap();
    }

    #[test]
    fn block_padding_tracks_sequence_tails() {
        let mut t = RadixTree::new(ModelConfig::hybrid_7b()).with_kv_block_pad(4);
        let kv = t.kv_token_bytes();
        let ssm = t.ssm_checkpoint_unit_bytes();
        // 6 tokens with checkpoints at the block boundary and the tail
        let delta = t.insert(&[1, 2, 3, 4, 5, 6], &ck(&[4, 6])).unwrap();
        assert_eq!(delta, 6 * kv + 2 * ssm + 2 * kv, "tail padded to 8 tokens");
        assert_eq!(t.stats().pad_bytes, 2 * kv);
        t.check_invariants().unwrap();

        // extending the sequence converts the old pad into real KV
        let delta = t.insert(&[1, 2, 3, 4, 5, 6, 7, 8], &ck(&[8])).unwrap();
        assert_eq!(delta, 2 * kv + ssm - 2 * kv, "pad reclaimed by real tokens");
        assert_eq!(t.stats().pad_bytes, 0, "depth 8 is block aligned");
        t.check_invariants().unwrap();

        // dry-run planner agrees with actual deltas
        let plan = t
            .plan_insert_bytes(&[1, 2, 3, 4, 5, 6, 7, 8, 9], &ck(&[9]))
            .unwrap();
        let delta = t.insert(&[1, 2, 3, 4, 5, 6, 7, 8, 9], &ck(&[9])).unwrap();
        assert_eq!(plan, delta);
        assert_eq!(t.stats().pad_bytes, 3 * kv);

        // removing the tail leaf hands the pad back to the new tail
        let leaf = t
            .iter_live()
            .find(|(_, n)| n.depth_end == 9)
            .map(|(id, _)| id)
            .unwrap();
        let freed = t.remove_node(leaf).unwrap();
        assert_eq!(freed, kv + ssm + 3 * kv, "frees the whole tail block");
        assert_eq!(t.stats().pad_bytes, 0);
        t.check_invariants().unwrap();
    }

    #[test]
    fn plan_matches_insert_across_structures() {
        let mut t = tree();
        let seqs: Vec<(Vec<TokenId>, Vec<usize>)> = vec![
            (vec![1, 2, 3, 4, 5, 6, 7, 8], vec![8]),
            (vec![1, 2, 3, 4, 9, 9], vec![4, 6]),
            (vec![1, 2, 3, 4, 9, 9, 7], vec![4, 7]),
            (vec![1, 2, 3], vec![3]),
            (vec![5, 5, 5], vec![1, 2, 3]),
            (vec![1, 2, 3, 4, 5, 6, 7, 8], vec![2, 8]),
        ];
        for (seq, cks) in seqs {
            let cks: BTreeSet<usize> = cks.into_iter().collect();
            let plan = t.plan_insert_bytes(&seq, &cks).unwrap();
            let delta = t.insert(&seq, &cks).unwrap();
            assert_eq!(plan, delta, "seq {seq:?}");
            t.check_invariants().unwrap();
        }
    }

    #[test]
    fn touch_rejects_backwards_time() {
        let mut t = tree();
        t.insert(&[1, 2], &ck(&[2])).unwrap();
        let id = t
            .iter_live()
            .find(|(id, _)| *id != ROOT)
            .map(|(id, _)| id)
            .unwrap();
        let now = t.tick();
        t.touch(id, now).unwrap();
        assert!(matches!(
            t.touch(id, now - 1),
            Err(RadixError::NonMonotoneTouch { .. })
        ));
    }

    #[test]
    fn evict_candidates_exclude_root_pinned_and_branching() {
        let mut t = tree();
        t.insert(&[1, 2, 3, 4], &ck(&[4])).unwrap();
        t.insert(&[1, 2, 9, 9], &ck(&[4])).unwrap();
        // structure: root -> (0,2] branch node -> two leaves
        let all: Vec<NodeId> = t.evict_candidates();
        assert_eq!(all.len(), 2, "only the two leaves are evictable");
        let leaf = all[0];
        t.pin(&[leaf]);
        assert_eq!(t.evict_candidates().len(), 1);
        t.unpin_all();
        assert_eq!(t.evict_candidates().len(), 2);
    }
}
