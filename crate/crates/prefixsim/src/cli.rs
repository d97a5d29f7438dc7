//! Command-line front end.
//!
//! Subcommands:
//!
//! * `gen-trace` — synthesize a multi-round session workload to JSONL.
//! * `run` — replay one trace under one policy.
//! * `compare` — replay several policies against one trace, side by side.
//! * `sweep` — replay a policies x capacities grid.
//!
//! Settings come from (lowest to highest precedence) built-in defaults, a
//! TOML config file (`--config`, sections `[model]`, `[policy]`, `[perf]`),
//! and command-line flags.
//!
//! Exit codes: 0 success, 2 invalid configuration or input data, 3 I/O
//! failure, 4 internal error.

use crate::cost_model::ModelConfig;
use crate::engine::{self, EngineError, PerfModel, ReplayMetrics, SweepConfig};
use crate::policies::{PolicyConfig, PolicyKind, TunerConfig};
use crate::workload::{self, GeneratorConfig, LengthDist, WorkloadError};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file, or input data semantics.
    Config(String),
    /// Filesystem or serialization failure.
    Io(String),
    /// Unexpected internal failure.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<WorkloadError> for CliError {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Io(_) => CliError::Io(e.to_string()),
            EngineError::Cache { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "prefixsim",
    about = "Trace-driven prefix-cache simulator for hybrid Attention/SSM LLM serving",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-round session trace (JSONL).
    GenTrace(GenTraceArgs),
    /// Replay a trace under one policy.
    Run(RunArgs),
    /// Replay several policies against one trace and tabulate them.
    Compare(CompareArgs),
    /// Replay a policies x capacities grid.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenTraceArgs {
    /// Output JSONL path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    n_sessions: usize,
    /// Session arrival rate (sessions per second, Poisson).
    #[arg(long, default_value_t = 1.0)]
    session_rate: f64,
    /// Mean think time between rounds of a session (seconds).
    #[arg(long, default_value_t = 4.0)]
    inter_request_delay: f64,
    /// Rounds per session (fixed:N | uniform:LO:HI | lognormal:MEAN:SIGMA).
    #[arg(long, default_value = "uniform:1:5")]
    rounds: LengthDist,
    /// Number of distinct shared system prompts.
    #[arg(long, default_value_t = 8)]
    prompt_pool: usize,
    /// System prompt length distribution.
    #[arg(long, default_value = "lognormal:1500:1")]
    prompt_len: LengthDist,
    /// Per-round fresh user tokens.
    #[arg(long, default_value = "lognormal:120:1")]
    user_len: LengthDist,
    /// Per-round output tokens.
    #[arg(long, default_value = "lognormal:250:0.8")]
    output_len: LengthDist,
}

#[derive(Debug, Args, Default, Clone)]
struct ConfigArgs {
    /// TOML config file with [model], [policy], and [perf] sections.
    #[arg(long)]
    config: Option<PathBuf>,

    // model overrides
    #[arg(long)]
    n_attention_layers: Option<usize>,
    #[arg(long)]
    n_ssm_layers: Option<usize>,
    #[arg(long)]
    n_mlp_layers: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_state: Option<usize>,
    #[arg(long)]
    bytes_per_param: Option<usize>,
    #[arg(long)]
    conv_in_channels: Option<usize>,
    #[arg(long)]
    conv_kernel: Option<usize>,
    /// Prefill chunk size (tokens) checkpoints align to.
    #[arg(long)]
    chunk_size: Option<usize>,

    // policy overrides
    /// FLOP-efficiency weight in the eviction utility (0 = LRU).
    #[arg(long)]
    alpha: Option<f64>,
    /// Checkpoint block size (tokens) for vllm_plus.
    #[arg(long)]
    block_size: Option<usize>,
    /// Align branch checkpoints down to chunk boundaries.
    #[arg(long)]
    chunk_align: Option<bool>,
    /// Enable the online alpha tuner (marconi only).
    #[arg(long)]
    tuner: Option<bool>,
    #[arg(long)]
    tuner_multiplier: Option<f64>,
    /// Comma-separated alpha grid for the tuner.
    #[arg(long, value_delimiter = ',')]
    tuner_grid: Option<Vec<f64>>,
    #[arg(long)]
    tuner_replays: Option<usize>,

    // perf overrides
    /// Sustained device throughput for the TTFT proxy (FLOPs/s).
    #[arg(long)]
    device_flops: Option<f64>,
    /// Fixed per-request overhead for the TTFT proxy (ms).
    #[arg(long)]
    overhead_ms: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Input trace (JSONL).
    #[arg(long)]
    trace: PathBuf,
    /// Policy: marconi | sglang_plus | vllm_plus | no_cache.
    #[arg(long)]
    policy: PolicyKind,
    /// Cache capacity (bytes; accepts suffixes kb/mb/gb/tb).
    #[arg(long, value_parser = parse_bytes)]
    capacity: u64,
    /// Directory for <label>.csv and <label>.summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File-name stem for outputs (defaults to the policy name).
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Comma-separated policy list.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "marconi,sglang_plus,vllm_plus,no_cache"
    )]
    policies: Vec<PolicyKind>,
    #[arg(long, value_parser = parse_bytes)]
    capacity: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel replays.
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "marconi,sglang_plus,vllm_plus"
    )]
    policies: Vec<PolicyKind>,
    /// Comma-separated capacities (bytes; suffixes allowed).
    #[arg(long, value_delimiter = ',', value_parser = parse_bytes)]
    capacities: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

// ── config file ──────────────────────────────────────────────────────────

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSection>,
    policy: Option<PolicySection>,
    perf: Option<PerfSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    n_attention_layers: Option<usize>,
    n_ssm_layers: Option<usize>,
    n_mlp_layers: Option<usize>,
    d_model: Option<usize>,
    d_state: Option<usize>,
    bytes_per_param: Option<usize>,
    conv_in_channels: Option<usize>,
    conv_kernel: Option<usize>,
    chunk_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicySection {
    alpha: Option<f64>,
    block_size: Option<usize>,
    chunk_align: Option<bool>,
    tuner_enabled: Option<bool>,
    tuner_bootstrap_multiplier: Option<f64>,
    tuner_alpha_grid: Option<Vec<f64>>,
    tuner_parallel_replays: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerfSection {
    device_flops_per_s: Option<f64>,
    fixed_overhead_ms: Option<f64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Defaults <- config file <- CLI flags.
fn build_configs(
    kind: PolicyKind,
    args: &ConfigArgs,
) -> Result<(ModelConfig, PolicyConfig, PerfModel), CliError> {
    let file = load_file_config(args.config.as_deref())?;
    let fm = file.model.unwrap_or_default();
    let fp = file.policy.unwrap_or_default();
    let fx = file.perf.unwrap_or_default();

    let defaults = ModelConfig::hybrid_7b();
    let d_model = args.d_model.or(fm.d_model).unwrap_or(defaults.d_model);
    let d_state = args.d_state.or(fm.d_state).unwrap_or(defaults.d_state);
    let model = ModelConfig {
        n_attention_layers: args
            .n_attention_layers
            .or(fm.n_attention_layers)
            .unwrap_or(defaults.n_attention_layers),
        n_ssm_layers: args
            .n_ssm_layers
            .or(fm.n_ssm_layers)
            .unwrap_or(defaults.n_ssm_layers),
        n_mlp_layers: args
            .n_mlp_layers
            .or(fm.n_mlp_layers)
            .unwrap_or(defaults.n_mlp_layers),
        d_model,
        d_state,
        bytes_per_param: args
            .bytes_per_param
            .or(fm.bytes_per_param)
            .unwrap_or(defaults.bytes_per_param),
        // the conv default tracks the (possibly overridden) model widths
        conv_in_channels: args
            .conv_in_channels
            .or(fm.conv_in_channels)
            .unwrap_or(2 * d_model + 2 * d_state),
        conv_kernel: args
            .conv_kernel
            .or(fm.conv_kernel)
            .unwrap_or(defaults.conv_kernel),
        chunk_size: args
            .chunk_size
            .or(fm.chunk_size)
            .unwrap_or(defaults.chunk_size),
    };
    model
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let dp = PolicyConfig::new(kind);
    let dt = TunerConfig::default();
    let policy = PolicyConfig {
        kind,
        alpha: args.alpha.or(fp.alpha).unwrap_or(dp.alpha),
        block_size: args.block_size.or(fp.block_size).unwrap_or(dp.block_size),
        chunk_align: args
            .chunk_align
            .or(fp.chunk_align)
            .unwrap_or(dp.chunk_align),
        tuner: TunerConfig {
            enabled: args.tuner.or(fp.tuner_enabled).unwrap_or(dt.enabled),
            bootstrap_multiplier: args
                .tuner_multiplier
                .or(fp.tuner_bootstrap_multiplier)
                .unwrap_or(dt.bootstrap_multiplier),
            alpha_grid: args
                .tuner_grid
                .clone()
                .or(fp.tuner_alpha_grid)
                .unwrap_or(dt.alpha_grid),
            parallel_replays: args
                .tuner_replays
                .or(fp.tuner_parallel_replays)
                .unwrap_or(dt.parallel_replays),
        },
    };
    policy
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let perf = PerfModel {
        device_flops_per_s: args
            .device_flops
            .or(fx.device_flops_per_s)
            .unwrap_or_else(|| PerfModel::default().device_flops_per_s),
        fixed_overhead_ms: args
            .overhead_ms
            .or(fx.fixed_overhead_ms)
            .unwrap_or_else(|| PerfModel::default().fixed_overhead_ms),
    };
    perf.validate().map_err(CliError::from)?;

    Ok((model, policy, perf))
}

/// Parse a byte size: plain integer or float with kb/mb/gb/tb suffix (SI).
fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim().to_ascii_lowercase();
    let (num, mult) = if let Some(p) = t.strip_suffix("tb") {
        (p, 1e12)
    } else if let Some(p) = t.strip_suffix("gb") {
        (p, 1e9)
    } else if let Some(p) = t.strip_suffix("mb") {
        (p, 1e6)
    } else if let Some(p) = t.strip_suffix("kb") {
        (p, 1e3)
    } else if let Some(p) = t.strip_suffix('b') {
        (p, 1.0)
    } else {
        (t.as_str(), 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("invalid byte size '{s}'"))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(format!("invalid byte size '{s}'"));
    }
    Ok((v * mult).round() as u64)
}

fn format_bytes(b: u64) -> String {
    if b >= 1_000_000_000 {
        format!("{:.2}gb", b as f64 / 1e9)
    } else if b >= 1_000_000 {
        format!("{:.2}mb", b as f64 / 1e6)
    } else {
        format!("{b}b")
    }
}

// ── output helpers ───────────────────────────────────────────────────────

fn write_outputs(out: &Path, label: &str, m: &ReplayMetrics) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let csv_path = out.join(format!("{label}.csv"));
    let mut csv = Vec::new();
    m.write_csv(&mut csv)
        .map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&csv_path, csv)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", csv_path.display())))?;
    let json_path = out.join(format!("{label}.summary.json"));
    let pretty = serde_json::to_string_pretty(&m.summary_json())
        .map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(&json_path, pretty + "\n")
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", json_path.display())))?;
    Ok(())
}

fn summary_line(label: &str, m: &ReplayMetrics) -> String {
    format!(
        "{label}: hit_rate {:.2}% flops_saved {:.3e} ttft_p50 {:.1}ms ttft_p95 {:.1}ms bypassed {} alpha {}",
        m.token_hit_rate * 100.0,
        m.flops_saved_total,
        m.ttft_p50_ms,
        m.ttft_p95_ms,
        m.bypassed_requests,
        m.alpha_final,
    )
}

fn print_table(rows: &[(&str, &ReplayMetrics)]) {
    println!(
        "{:<28} {:>10} {:>12} {:>14} {:>12} {:>12} {:>9}",
        "label", "capacity", "hit_rate", "flops_saved", "ttft_p50_ms", "ttft_p95_ms", "bypassed"
    );
    for (label, m) in rows {
        println!(
            "{:<28} {:>10} {:>11.2}% {:>14.3e} {:>12.1} {:>12.1} {:>9}",
            label,
            format_bytes(m.capacity_bytes),
            m.token_hit_rate * 100.0,
            m.flops_saved_total,
            m.ttft_p50_ms,
            m.ttft_p95_ms,
            m.bypassed_requests,
        );
    }
}

fn write_grid_csv(path: &Path, rows: &[(&str, &ReplayMetrics)]) -> Result<(), CliError> {
    let mut text = String::from(
        "label,policy,capacity_bytes,token_hit_rate,flops_saved_total,ttft_p5_ms,ttft_p50_ms,ttft_p95_ms,bypassed_requests,alpha_final\n",
    );
    for (label, m) in rows {
        text.push_str(&format!(
            "{label},{},{},{:.6},{:.0},{:.4},{:.4},{:.4},{},{}\n",
            m.policy.as_str(),
            m.capacity_bytes,
            m.token_hit_rate,
            m.flops_saved_total,
            m.ttft_p5_ms,
            m.ttft_p50_ms,
            m.ttft_p95_ms,
            m.bypassed_requests,
            m.alpha_final,
        ));
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

// ── subcommand bodies ────────────────────────────────────────────────────

fn cmd_gen_trace(a: GenTraceArgs) -> Result<(), CliError> {
    let cfg = GeneratorConfig {
        seed: a.seed,
        n_sessions: a.n_sessions,
        session_rate_per_s: a.session_rate,
        inter_request_delay_s: a.inter_request_delay,
        rounds_per_session: a.rounds,
        prompt_pool_size: a.prompt_pool,
        prompt_len: a.prompt_len,
        user_len: a.user_len,
        output_len: a.output_len,
    };
    let trace = workload::generate(&cfg)?;
    workload::save_trace(&trace, &a.out)?;
    let s = trace.stats();
    println!(
        "wrote {} requests ({} sessions, mean input {:.0} tokens, max {}, span {:.1}s) to {}",
        s.requests,
        s.sessions,
        s.mean_input_len,
        s.max_input_len,
        s.duration_ms / 1000.0,
        a.out.display()
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let trace = workload::load_trace(&a.trace)?;
    let (model, policy, perf) = build_configs(a.policy, &a.cfg)?;
    let metrics = engine::replay(&trace, &policy, &model, a.capacity, &perf)?;
    let label = a.label.unwrap_or_else(|| a.policy.as_str().to_string());
    if let Some(out) = &a.out {
        write_outputs(out, &label, &metrics)?;
        println!(
            "wrote {}/{{{label}.csv,{label}.summary.json}}",
            out.display()
        );
    }
    println!("{}", summary_line(&label, &metrics));
    Ok(())
}

/// One compare/sweep invocation: the cartesian product of policies and
/// capacities replayed over a single trace.
struct GridSpec<'a> {
    trace_path: &'a Path,
    policies: &'a [PolicyKind],
    capacities: &'a [u64],
    cfg: &'a ConfigArgs,
    out: Option<&'a Path>,
    jobs: usize,
    grid_name: &'a str,
    label_with_capacity: bool,
}

fn run_grid(spec: GridSpec<'_>) -> Result<(), CliError> {
    if spec.policies.is_empty() || spec.capacities.is_empty() {
        return Err(CliError::Config(
            "need at least one policy and one capacity".into(),
        ));
    }
    let trace = workload::load_trace(spec.trace_path)?;
    let mut configs = Vec::new();
    for &kind in spec.policies {
        let (model, policy, perf) = build_configs(kind, spec.cfg)?;
        for &capacity in spec.capacities {
            let label = if spec.label_with_capacity {
                format!("{}_{}", kind.as_str(), format_bytes(capacity))
            } else {
                kind.as_str().to_string()
            };
            configs.push(SweepConfig {
                label,
                policy: policy.clone(),
                model: model.clone(),
                capacity_bytes: capacity,
                perf,
            });
        }
    }
    let results = engine::sweep(&trace, &configs, spec.jobs);
    let mut ok_rows: Vec<(&str, &ReplayMetrics)> = Vec::new();
    let mut failures = Vec::new();
    for (label, result) in &results {
        match result {
            Ok(m) => ok_rows.push((label.as_str(), m)),
            Err(e) => failures.push(format!("{label}: {e}")),
        }
    }
    print_table(&ok_rows);
    if let Some(out) = spec.out {
        fs::create_dir_all(out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
        for (label, m) in &ok_rows {
            write_outputs(out, label, m)?;
        }
        write_grid_csv(&out.join(format!("{}.csv", spec.grid_name)), &ok_rows)?;
        println!(
            "wrote per-run outputs and {}.csv to {}",
            spec.grid_name,
            out.display()
        );
    }
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("failed: {f}");
        }
        return Err(CliError::Internal(format!(
            "{} of {} configurations failed",
            failures.len(),
            results.len()
        )));
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), CliError> {
    run_grid(GridSpec {
        trace_path: &a.trace,
        policies: &a.policies,
        capacities: &[a.capacity],
        cfg: &a.cfg,
        out: a.out.as_deref(),
        jobs: a.jobs,
        grid_name: "compare",
        label_with_capacity: false,
    })
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    run_grid(GridSpec {
        trace_path: &a.trace,
        policies: &a.policies,
        capacities: &a.capacities,
        cfg: &a.cfg,
        out: a.out.as_deref(),
        jobs: a.jobs,
        grid_name: "sweep",
        label_with_capacity: true,
    })
}

/// Entry point: parse `argv`, execute, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenTrace(a) => cmd_gen_trace(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
