//! Multi-round conversational workload generation and JSONL trace I/O.
//!
//! Sessions arrive as a Poisson process; each session picks one system
//! prompt from a shared pool, then runs several rounds. Round `r`'s input is
//! the full conversation so far (prompt, prior turns, prior responses) plus
//! a fresh user turn, so inputs within a session share growing prefixes and
//! sessions sharing a prompt overlap on it — the two reuse patterns prefix
//! caching exploits.
//!
//! Traces serialize one JSON request per line and replay deterministically:
//! the generator is seeded, and requests are globally ordered by
//! `(arrival_ms, session_id, request_id)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::radix_cache::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub session_id: u64,
    /// Round index within the session, starting at 0.
    pub request_id: u64,
    pub arrival_ms: f64,
    pub input_tokens: Vec<TokenId>,
    pub output_tokens: Vec<TokenId>,
}

impl Request {
    pub fn input_len(&self) -> usize {
        self.input_tokens.len()
    }

    pub fn output_len(&self) -> usize {
        self.output_tokens.len()
    }

    /// Input followed by output: the sequence a cache would store.
    pub fn full_sequence(&self) -> Vec<TokenId> {
        let mut s = Vec::with_capacity(self.input_tokens.len() + self.output_tokens.len());
        s.extend_from_slice(&self.input_tokens);
        s.extend_from_slice(&self.output_tokens);
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub requests: Vec<Request>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStats {
    pub requests: usize,
    pub sessions: usize,
    pub total_input_tokens: u64,
    pub mean_input_len: f64,
    pub max_input_len: usize,
    pub duration_ms: f64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Request> {
        self.requests.iter()
    }

    pub fn total_input_tokens(&self) -> u64 {
        self.requests.iter().map(|r| r.input_len() as u64).sum()
    }

    pub fn stats(&self) -> TraceStats {
        let sessions = {
            let mut ids: Vec<u64> = self.requests.iter().map(|r| r.session_id).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.len()
        };
        let total = self.total_input_tokens();
        TraceStats {
            requests: self.len(),
            sessions,
            total_input_tokens: total,
            mean_input_len: if self.is_empty() {
                0.0
            } else {
                total as f64 / self.len() as f64
            },
            max_input_len: self
                .requests
                .iter()
                .map(|r| r.input_len())
                .max()
                .unwrap_or(0),
            duration_ms: self.requests.last().map(|r| r.arrival_ms).unwrap_or(0.0),
        }
    }

    /// Check replayability: global arrival order, per-session round order,
    /// non-empty inputs.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut last_by_session: std::collections::HashMap<u64, (u64, f64)> =
            std::collections::HashMap::new();
        for (i, r) in self.requests.iter().enumerate() {
            if i > 0 && r.arrival_ms < self.requests[i - 1].arrival_ms {
                return Err(WorkloadError::UnsortedArrival { index: i });
            }
            if r.input_tokens.is_empty() {
                return Err(WorkloadError::EmptyInput { index: i });
            }
            if let Some(&(prev_round, prev_t)) = last_by_session.get(&r.session_id) {
                if r.request_id <= prev_round || r.arrival_ms < prev_t {
                    return Err(WorkloadError::NonMonotoneSession {
                        session: r.session_id,
                        request: r.request_id,
                    });
                }
            }
            last_by_session.insert(r.session_id, (r.request_id, r.arrival_ms));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("trace I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid trace record: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("trace not sorted by arrival time at index {index}")]
    UnsortedArrival { index: usize },
    #[error("session {session} has out-of-order rounds at request {request}")]
    NonMonotoneSession { session: u64, request: u64 },
    #[error("request at index {index} has an empty input")]
    EmptyInput { index: usize },
    #[error("invalid length distribution '{0}'; expected fixed:N, uniform:LO:HI, or lognormal:MEAN:SIGMA")]
    InvalidDist(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

/// Token-count distribution, parseable from `fixed:N`, `uniform:LO:HI`, or
/// `lognormal:MEAN:SIGMA` (MEAN is the arithmetic mean of the samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LengthDist {
    Fixed(usize),
    Uniform { lo: usize, hi: usize },
    LogNormal { mean: f64, sigma: f64 },
}

impl LengthDist {
    /// Draw one length; samples are clamped to at least 1 token.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            LengthDist::Fixed(n) => n.max(1),
            LengthDist::Uniform { lo, hi } => rng.gen_range(lo..=hi).max(1),
            LengthDist::LogNormal { mean, sigma } => {
                // mu chosen so the arithmetic mean of samples equals `mean`
                let mu = mean.ln() - sigma * sigma / 2.0;
                let d = LogNormal::new(mu, sigma).expect("validated parameters");
                (d.sample(rng).round() as usize).max(1)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LengthDist::Fixed(n) => n as f64,
            LengthDist::Uniform { lo, hi } => (lo + hi) as f64 / 2.0,
            LengthDist::LogNormal { mean, .. } => mean,
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: String| Err(WorkloadError::InvalidConfig(msg));
        match *self {
            LengthDist::Fixed(n) => {
                if n == 0 {
                    return bad("fixed length must be >= 1".into());
                }
            }
            LengthDist::Uniform { lo, hi } => {
                if lo == 0 || lo > hi {
                    return bad(format!("uniform bounds [{lo}, {hi}] invalid"));
                }
            }
            LengthDist::LogNormal { mean, sigma } => {
                if !(mean > 0.0 && mean.is_finite()) || !sigma.is_finite() || sigma < 0.0 {
                    return bad(format!("lognormal(mean {mean}, sigma {sigma}) invalid"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for LengthDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LengthDist::Fixed(n) => write!(f, "fixed:{n}"),
            LengthDist::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            LengthDist::LogNormal { mean, sigma } => write!(f, "lognormal:{mean}:{sigma}"),
        }
    }
}

impl FromStr for LengthDist {
    type Err = WorkloadError;
    fn from_str(s: &str) -> Result<Self, WorkloadError> {
        let err = || WorkloadError::InvalidDist(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let dist = match parts.as_slice() {
            ["fixed", n] => LengthDist::Fixed(n.parse().map_err(|_| err())?),
            ["uniform", lo, hi] => LengthDist::Uniform {
                lo: lo.parse().map_err(|_| err())?,
                hi: hi.parse().map_err(|_| err())?,
            },
            ["lognormal", mean, sigma] => LengthDist::LogNormal {
                mean: mean.parse().map_err(|_| err())?,
                sigma: sigma.parse().map_err(|_| err())?,
            },
            _ => return Err(err()),
        };
        dist.validate().map_err(|_| err())?;
        Ok(dist)
    }
}

impl Serialize for LengthDist {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LengthDist {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_sessions: usize,
    /// New sessions arrive as a Poisson process at this rate (per second).
    pub session_rate_per_s: f64,
    /// Mean think time between a session's rounds (seconds, exponential).
    pub inter_request_delay_s: f64,
    pub rounds_per_session: LengthDist,
    /// Number of distinct shared system prompts.
    pub prompt_pool_size: usize,
    pub prompt_len: LengthDist,
    /// Fresh user-turn tokens appended each round.
    pub user_len: LengthDist,
    pub output_len: LengthDist,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n_sessions: 100,
            session_rate_per_s: 1.0,
            inter_request_delay_s: 4.0,
            rounds_per_session: LengthDist::Uniform { lo: 1, hi: 5 },
            prompt_pool_size: 8,
            prompt_len: LengthDist::LogNormal {
                mean: 1500.0,
                sigma: 1.0,
            },
            user_len: LengthDist::LogNormal {
                mean: 120.0,
                sigma: 1.0,
            },
            output_len: LengthDist::LogNormal {
                mean: 250.0,
                sigma: 0.8,
            },
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.n_sessions == 0 {
            return Err(WorkloadError::InvalidConfig(
                "n_sessions must be >= 1".into(),
            ));
        }
        if !(self.session_rate_per_s > 0.0 && self.session_rate_per_s.is_finite()) {
            return Err(WorkloadError::InvalidConfig(
                "session_rate_per_s must be positive".into(),
            ));
        }
        if !(self.inter_request_delay_s > 0.0 && self.inter_request_delay_s.is_finite()) {
            return Err(WorkloadError::InvalidConfig(
                "inter_request_delay_s must be positive".into(),
            ));
        }
        if self.prompt_pool_size == 0 {
            return Err(WorkloadError::InvalidConfig(
                "prompt_pool_size must be >= 1".into(),
            ));
        }
        self.rounds_per_session.validate()?;
        self.prompt_len.validate()?;
        self.user_len.validate()?;
        self.output_len.validate()?;
        Ok(())
    }
}

fn fresh_tokens(rng: &mut impl Rng, n: usize) -> Vec<TokenId> {
    // Uniform over the full id space: a shared multi-token prefix arising by
    // chance is negligible, so overlap only happens by construction.
    (0..n).map(|_| rng.gen::<TokenId>()).collect()
}

/// Generate a trace. Deterministic in `cfg.seed`.
pub fn generate(cfg: &GeneratorConfig) -> Result<Trace, WorkloadError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prompts: Vec<Vec<TokenId>> = (0..cfg.prompt_pool_size)
        .map(|_| {
            let n = cfg.prompt_len.sample(&mut rng);
            fresh_tokens(&mut rng, n)
        })
        .collect();
    let session_gap = Exp::new(cfg.session_rate_per_s).expect("validated rate");
    let round_gap = Exp::new(1.0 / cfg.inter_request_delay_s).expect("validated delay");

    let mut requests = Vec::new();
    let mut t_session = 0.0f64;
    for sid in 0..cfg.n_sessions as u64 {
        t_session += session_gap.sample(&mut rng) * 1000.0;
        let rounds = cfg.rounds_per_session.sample(&mut rng);
        let prompt = &prompts[rng.gen_range(0..cfg.prompt_pool_size)];
        let mut history: Vec<TokenId> = prompt.clone();
        let mut t = t_session;
        for round in 0..rounds as u64 {
            if round > 0 {
                t += round_gap.sample(&mut rng) * 1000.0;
            }
            let user_n = cfg.user_len.sample(&mut rng);
            let user = fresh_tokens(&mut rng, user_n);
            let mut input = history.clone();
            input.extend_from_slice(&user);
            let out_n = cfg.output_len.sample(&mut rng);
            let output = fresh_tokens(&mut rng, out_n);
            history = input.clone();
            history.extend_from_slice(&output);
            requests.push(Request {
                session_id: sid,
                request_id: round,
                arrival_ms: t,
                input_tokens: input,
                output_tokens: output,
            });
        }
    }
    requests.sort_by(|a, b| {
        a.arrival_ms
            .total_cmp(&b.arrival_ms)
            .then(a.session_id.cmp(&b.session_id))
            .then(a.request_id.cmp(&b.request_id))
    });
    Ok(Trace { requests })
}

/// Write one JSON object per line.
pub fn save_trace(trace: &Trace, path: &Path) -> Result<(), WorkloadError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in &trace.requests {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a JSONL trace, reporting the offending line on parse errors, and
/// validate replayability.
pub fn load_trace(path: &Path) -> Result<Trace, WorkloadError> {
    let reader = BufReader::new(File::open(path)?);
    let mut requests = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: Request = serde_json::from_str(&line).map_err(|source| WorkloadError::Parse {
            line: i + 1,
            source,
        })?;
        requests.push(r);
    }
    let trace = Trace { requests };
    trace.validate()?;
    Ok(trace)
}
