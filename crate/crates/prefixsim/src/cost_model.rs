//! Closed-form compute and state-size model for hybrid Attention/SSM stacks.
//!
//! All formulas are per layer and take the sequence length `l` in tokens.
//! With model width `D` (`d_model`) and SSM state dimension `N` (`d_state`):
//!
//! | quantity                | formula                       |
//! |-------------------------|-------------------------------|
//! | attention prefill FLOPs | `8·l·D² + 4·l²·D`             |
//! | SSM prefill FLOPs       | `12·l·D² + 16·l·D·N + 10·l`   |
//! | MLP prefill FLOPs       | `16·l·D²`                     |
//! | KV-cache bytes          | `2·l·D·bytes_per_param`       |
//! | SSM state bytes         | `D·N·bytes_per_param`         |
//! | conv state bytes        | `conv_in_channels·conv_kernel·bytes_per_param` |
//!
//! Attention state grows linearly with `l` while its FLOPs grow
//! quadratically, so FLOPs saved per byte of cached attention state rises
//! with sequence length. An SSM state is constant-size yet replaying the
//! prefix it replaces costs `Θ(l·D²)`, so its FLOPs-saved-per-byte is both
//! larger and steeper in `l` — the asymmetry that motivates FLOP-aware
//! eviction.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};
use thiserror::Error;

/// Floating-point FLOP tally. `f64` holds exact integers up to 2^53, far
/// beyond any per-request prefill cost modeled here.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct FlopCount(pub f64);

impl FlopCount {
    pub const ZERO: FlopCount = FlopCount(0.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Add for FlopCount {
    type Output = FlopCount;
    fn add(self, rhs: FlopCount) -> FlopCount {
        FlopCount(self.0 + rhs.0)
    }
}

impl AddAssign for FlopCount {
    fn add_assign(&mut self, rhs: FlopCount) {
        self.0 += rhs.0;
    }
}

impl Sub for FlopCount {
    type Output = FlopCount;
    fn sub(self, rhs: FlopCount) -> FlopCount {
        FlopCount(self.0 - rhs.0)
    }
}

impl Sum for FlopCount {
    fn sum<I: Iterator<Item = FlopCount>>(iter: I) -> FlopCount {
        FlopCount(iter.map(|f| f.0).sum())
    }
}

impl fmt::Display for FlopCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3e} FLOPs", self.0)
    }
}

/// Exact byte tally for cache-state accounting.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct ByteCount(pub u64);

impl ByteCount {
    pub const ZERO: ByteCount = ByteCount(0);

    pub fn value(self) -> u64 {
        self.0
    }
}

impl Add for ByteCount {
    type Output = ByteCount;
    fn add(self, rhs: ByteCount) -> ByteCount {
        ByteCount(self.0 + rhs.0)
    }
}

impl AddAssign for ByteCount {
    fn add_assign(&mut self, rhs: ByteCount) {
        self.0 += rhs.0;
    }
}

impl Sum for ByteCount {
    fn sum<I: Iterator<Item = ByteCount>>(iter: I) -> ByteCount {
        ByteCount(iter.map(|b| b.0).sum())
    }
}

impl fmt::Display for ByteCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} B", self.0)
    }
}

/// Architecture hyperparameters of the simulated model.
///
/// The default is a 7B-class hybrid: 4 attention layers, 24 SSM layers,
/// 28 MLP layers, `d_model = 4096`, `d_state = 128`, fp16 parameters, and a
/// depthwise conv over `2·d_model + 2·d_state` channels with kernel width 4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_attention_layers: usize,
    pub n_ssm_layers: usize,
    pub n_mlp_layers: usize,
    pub d_model: usize,
    pub d_state: usize,
    pub bytes_per_param: usize,
    pub conv_in_channels: usize,
    pub conv_kernel: usize,
    /// Prefill chunk size in tokens; checkpoint positions may be aligned
    /// down to a multiple of this so cached states match chunk boundaries.
    pub chunk_size: usize,
}

impl ModelConfig {
    /// 7B-class hybrid layout: 4 attention / 24 SSM / 28 MLP layers.
    pub fn hybrid_7b() -> Self {
        Self::hybrid(4, 24, 28, 4096, 128)
    }

    /// Hybrid layout with derived conv defaults
    /// (`conv_in_channels = 2·d_model + 2·d_state`, kernel 4).
    pub fn hybrid(
        n_attention_layers: usize,
        n_ssm_layers: usize,
        n_mlp_layers: usize,
        d_model: usize,
        d_state: usize,
    ) -> Self {
        ModelConfig {
            n_attention_layers,
            n_ssm_layers,
            n_mlp_layers,
            d_model,
            d_state,
            bytes_per_param: 2,
            conv_in_channels: 2 * d_model + 2 * d_state,
            conv_kernel: 4,
            chunk_size: 32,
        }
    }

    /// Attention-only layout (no SSM layers): prefix reuse degrades to plain
    /// token-granular KV caching.
    pub fn pure_transformer(
        n_attention_layers: usize,
        n_mlp_layers: usize,
        d_model: usize,
    ) -> Self {
        let mut cfg = Self::hybrid(n_attention_layers, 0, n_mlp_layers, d_model, 128);
        cfg.conv_in_channels = 0;
        cfg
    }

    pub fn is_hybrid(&self) -> bool {
        self.n_ssm_layers > 0
    }

    pub fn validate(&self) -> Result<(), CostModelError> {
        if self.d_model == 0 {
            return Err(CostModelError::InvalidConfig("d_model must be positive"));
        }
        if self.is_hybrid() && self.d_state == 0 {
            return Err(CostModelError::InvalidConfig(
                "d_state must be positive when SSM layers are present",
            ));
        }
        if !matches!(self.bytes_per_param, 1 | 2 | 4) {
            return Err(CostModelError::InvalidConfig(
                "bytes_per_param must be 1, 2, or 4",
            ));
        }
        if self.chunk_size == 0 {
            return Err(CostModelError::InvalidConfig("chunk_size must be positive"));
        }
        if self.n_attention_layers + self.n_ssm_layers + self.n_mlp_layers == 0 {
            return Err(CostModelError::InvalidConfig(
                "model must have at least one layer",
            ));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::hybrid_7b()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(&'static str),
    #[error("prefix length {prefix} exceeds sequence end {end}")]
    PrefixExceedsEnd { prefix: usize, end: usize },
    #[error("state size is zero bytes; a cache entry with no state is malformed")]
    EmptyState,
}

/// Prefill FLOPs of one attention layer over `l` tokens: `8·l·D² + 4·l²·D`.
pub fn attention_flops(l: usize, cfg: &ModelConfig) -> FlopCount {
    let l = l as f64;
    let d = cfg.d_model as f64;
    FlopCount(8.0 * l * d * d + 4.0 * l * l * d)
}

/// Prefill FLOPs of one SSM layer over `l` tokens:
/// `12·l·D² + 16·l·D·N + 10·l`.
pub fn ssm_flops(l: usize, cfg: &ModelConfig) -> FlopCount {
    let l = l as f64;
    let d = cfg.d_model as f64;
    let n = cfg.d_state as f64;
    FlopCount(12.0 * l * d * d + 16.0 * l * d * n + 10.0 * l)
}

/// Prefill FLOPs of one MLP layer over `l` tokens: `16·l·D²`.
pub fn mlp_flops(l: usize, cfg: &ModelConfig) -> FlopCount {
    let l = l as f64;
    let d = cfg.d_model as f64;
    FlopCount(16.0 * l * d * d)
}

/// KV-cache bytes of one attention layer over `l` tokens:
/// `2·l·D·bytes_per_param` (one K and one V vector per token).
pub fn kv_bytes(l: usize, cfg: &ModelConfig) -> ByteCount {
    ByteCount(2 * l as u64 * cfg.d_model as u64 * cfg.bytes_per_param as u64)
}

/// Recurrent-state bytes of one SSM layer: `D·N·bytes_per_param`,
/// independent of sequence length.
pub fn ssm_state_bytes(cfg: &ModelConfig) -> ByteCount {
    ByteCount(cfg.d_model as u64 * cfg.d_state as u64 * cfg.bytes_per_param as u64)
}

/// Conv-state bytes of one SSM layer's depthwise convolution:
/// `conv_in_channels·conv_kernel·bytes_per_param`.
pub fn conv_state_bytes(cfg: &ModelConfig) -> ByteCount {
    ByteCount(cfg.conv_in_channels as u64 * cfg.conv_kernel as u64 * cfg.bytes_per_param as u64)
}

/// Bytes of one full SSM checkpoint across all SSM layers
/// (recurrent state plus conv window, per layer).
pub fn ssm_checkpoint_bytes(cfg: &ModelConfig) -> ByteCount {
    ByteCount(cfg.n_ssm_layers as u64 * (ssm_state_bytes(cfg).0 + conv_state_bytes(cfg).0))
}

/// KV-cache bytes over `l` tokens summed across all attention layers.
pub fn seq_kv_bytes(l: usize, cfg: &ModelConfig) -> ByteCount {
    ByteCount(cfg.n_attention_layers as u64 * kv_bytes(l, cfg).0)
}

/// Total prefill FLOPs for `l` tokens across every layer of the model.
pub fn model_prefill_flops(l: usize, cfg: &ModelConfig) -> FlopCount {
    FlopCount(
        cfg.n_attention_layers as f64 * attention_flops(l, cfg).0
            + cfg.n_ssm_layers as f64 * ssm_flops(l, cfg).0
            + cfg.n_mlp_layers as f64 * mlp_flops(l, cfg).0,
    )
}

/// Prefill FLOPs to extend a sequence from `prefix_len` to `end_len` tokens,
/// i.e. the compute avoided by reusing a cached state at `prefix_len`.
pub fn delta_prefill_flops(
    prefix_len: usize,
    end_len: usize,
    cfg: &ModelConfig,
) -> Result<FlopCount, CostModelError> {
    if prefix_len > end_len {
        return Err(CostModelError::PrefixExceedsEnd {
            prefix: prefix_len,
            end: end_len,
        });
    }
    Ok(model_prefill_flops(end_len, cfg) - model_prefill_flops(prefix_len, cfg))
}

/// FLOPs saved per byte of cached state (the eviction-utility numerator).
pub fn flop_efficiency(
    flops_saved: FlopCount,
    state_bytes: ByteCount,
) -> Result<f64, CostModelError> {
    if state_bytes.0 == 0 {
        return Err(CostModelError::EmptyState);
    }
    Ok(flops_saved.0 / state_bytes.0 as f64)
}
