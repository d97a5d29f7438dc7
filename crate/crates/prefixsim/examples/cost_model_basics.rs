//! Per-layer prefill costs, cache-state sizes, and FLOP efficiency for a
//! 7B-class hybrid model, plus the cached footprint of one long sequence
//! under block-granular checkpointing.
//!
//! Run with: `cargo run --example cost_model_basics`

use prefixsim::cost_model::{
    attention_flops, conv_state_bytes, delta_prefill_flops, flop_efficiency, kv_bytes, mlp_flops,
    model_prefill_flops, seq_kv_bytes, ssm_checkpoint_bytes, ssm_flops, ssm_state_bytes,
    ModelConfig,
};

fn main() {
    let cfg = ModelConfig::hybrid_7b();
    println!(
        "model: {} attention + {} SSM + {} MLP layers, d_model={}, d_state={}, {}-byte params\n",
        cfg.n_attention_layers,
        cfg.n_ssm_layers,
        cfg.n_mlp_layers,
        cfg.d_model,
        cfg.d_state,
        cfg.bytes_per_param
    );

    println!("per-layer prefill FLOPs over l tokens:");
    for l in [1_000usize, 10_000, 100_000] {
        println!(
            "  l={l:>6}: attention {:.4e}  ssm {:.4e}  mlp {:.4e}",
            attention_flops(l, &cfg).value(),
            ssm_flops(l, &cfg).value(),
            mlp_flops(l, &cfg).value(),
        );
    }

    println!("\ncache state sizes:");
    println!("  KV per token per attention layer : {}", kv_bytes(1, &cfg));
    println!(
        "  SSM state per layer              : {}",
        ssm_state_bytes(&cfg)
    );
    println!(
        "  conv state per layer             : {}",
        conv_state_bytes(&cfg)
    );
    println!(
        "  one full checkpoint (all layers) : {}",
        ssm_checkpoint_bytes(&cfg)
    );
    println!(
        "  KV of a 1000-token prefix        : {}",
        seq_kv_bytes(1000, &cfg)
    );

    // FLOPs saved per byte of cached state: attention KV scales ~l + 2D,
    // SSM states sit near 200*l for this geometry — two orders heavier per
    // byte once sequences are long.
    println!("\nFLOPs saved per byte of state (attention KV vs SSM checkpoint):");
    for l in [1_000usize, 10_000, 100_000] {
        let att = flop_efficiency(attention_flops(l, &cfg), kv_bytes(l, &cfg)).unwrap();
        let ssm = flop_efficiency(ssm_flops(l, &cfg), ssm_state_bytes(&cfg)).unwrap();
        println!(
            "  l={l:>6}: attention {att:>12.1}  ssm {ssm:>14.1}  ratio {:.1}x",
            ssm / att
        );
    }

    // Whole-model prefill and the marginal cost after partial reuse.
    let full = model_prefill_flops(10_000, &cfg);
    let resumed = delta_prefill_flops(6_000, 10_000, &cfg).unwrap();
    println!(
        "\nprefill of a 10k-token input  : {:.6e} FLOPs",
        full.value()
    );
    println!(
        "after reusing a 6k prefix     : {:.6e} FLOPs",
        resumed.value()
    );
    println!(
        "saved                         : {:.6e} FLOPs",
        full.value() - resumed.value()
    );

    // Cached bytes for one 10k-token sequence when every 16-token block is
    // checkpointed: the SSM snapshots dwarf the KV they sit next to.
    let blocks = 10_000usize.div_ceil(16);
    let ssm_total = blocks as u64 * ssm_checkpoint_bytes(&cfg).value();
    let kv_total = seq_kv_bytes(10_000, &cfg).value();
    println!(
        "\none 10k-token sequence, checkpoint every 16 tokens:\n  {} KV + {} SSM = {:.2} GB total ({}x KV alone)",
        kv_total,
        ssm_total,
        (kv_total + ssm_total) as f64 / 1e9,
        (kv_total + ssm_total) / kv_total,
    );
}
