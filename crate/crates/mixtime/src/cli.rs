//! Batch experiment runner: flag and config-file parsing, experiment
//! execution, and machine-readable reports.
//!
//! Every rational on the command line or in a config file is written as a
//! `num/den` string; decimals are rejected so the pipeline stays exact.

use crate::congest::Phase;
use crate::graph::{
    generate, parse_graph_text, validate_for_walk, Graph, GraphError, GraphFamily,
};
use crate::mixing::{
    bias_delta, estimate_mixing_time, paper_token_count, probes_to_csv, AveragingThreshold,
    MixingError, ProbeRecord, WalkConfig,
};
use crate::numeric::ceil_ln;
use crate::oracle::{self, MonotonicityVerdict, OracleError};
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use serde::Serialize;
use std::collections::VecDeque;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown flag {0}")]
    UnknownFlag(String),
    #[error("malformed rational {0:?}: expected \"num/den\" with decimal integers")]
    MalformedRational(String),
    #[error("no graph source: give --graph PATH or --family NAME:PARAMS")]
    MissingGraphSource,
    #[error("both --graph and --family given; pick one graph source")]
    DuplicateGraphSource,
    #[error("both --tokens and --paper-k given; pick one token budget")]
    ConflictingTokenSpec,
    #[error("flag {0} is missing its value")]
    MissingValue(String),
    #[error("bad value {value:?} for {what}: {reason}")]
    InvalidValue {
        what: String,
        value: String,
        reason: String,
    },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("cannot read config file: {0}")]
    Io(String),
    #[error("config file is not valid JSON: {0}")]
    Json(String),
}

/// Where the experiment's graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    File(PathBuf),
    Family(GraphFamily),
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::File(path) => write!(f, "{}", path.display()),
            GraphSource::Family(family) => write!(f, "{family}"),
        }
    }
}

/// Token budget as requested, resolved against the graph at run time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TokenSpec {
    /// `max(80 n^8 ln n, 10^6 * 2m * n^3)`.
    #[default]
    Default,
    /// The bare `80 n^8 ln n` preset, as selected by `--paper-k`.
    Paper,
    Explicit(BigUint),
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub source: usize,
    /// Defaults to `1/n^2` once the graph is known.
    pub epsilon: Option<BigRational>,
    pub tokens: TokenSpec,
    pub seed: u64,
    pub lazy: bool,
    pub averaging_threshold: AveragingThreshold,
    pub max_length: Option<u64>,
    pub oracle: bool,
    pub monotonicity_horizon: u64,
    pub spectral: bool,
    pub out_dir: PathBuf,
}

/// One or more experiments plus the worker count.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub experiments: Vec<ExperimentConfig>,
    pub jobs: usize,
}

#[derive(Debug, Clone, Default)]
struct PartialConfig {
    graph: Option<PathBuf>,
    family: Option<GraphFamily>,
    source: Option<usize>,
    epsilon: Option<BigRational>,
    tokens: Option<BigUint>,
    paper_k: Option<bool>,
    seed: Option<u64>,
    lazy: Option<bool>,
    averaging_threshold: Option<AveragingThreshold>,
    max_length: Option<u64>,
    oracle: Option<bool>,
    monotonicity_horizon: Option<u64>,
    spectral: Option<bool>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
}

impl PartialConfig {
    /// Field-wise overlay; `self` wins over `base`.
    fn over(self, base: PartialConfig) -> PartialConfig {
        PartialConfig {
            graph: self.graph.or(base.graph),
            family: self.family.or(base.family),
            source: self.source.or(base.source),
            epsilon: self.epsilon.or(base.epsilon),
            tokens: self.tokens.or(base.tokens),
            paper_k: self.paper_k.or(base.paper_k),
            seed: self.seed.or(base.seed),
            lazy: self.lazy.or(base.lazy),
            averaging_threshold: self.averaging_threshold.or(base.averaging_threshold),
            max_length: self.max_length.or(base.max_length),
            oracle: self.oracle.or(base.oracle),
            monotonicity_horizon: self.monotonicity_horizon.or(base.monotonicity_horizon),
            spectral: self.spectral.or(base.spectral),
            out: self.out.or(base.out),
            jobs: self.jobs.or(base.jobs),
        }
    }

    fn finalize(self, batch_slot: Option<usize>) -> Result<ExperimentConfig, ConfigError> {
        let graph = match (self.graph, self.family) {
            (Some(_), Some(_)) => return Err(ConfigError::DuplicateGraphSource),
            (Some(path), None) => GraphSource::File(path),
            (None, Some(family)) => GraphSource::Family(family),
            (None, None) => return Err(ConfigError::MissingGraphSource),
        };
        let tokens = match (self.tokens, self.paper_k.unwrap_or(false)) {
            (Some(_), true) => return Err(ConfigError::ConflictingTokenSpec),
            (Some(k), false) => TokenSpec::Explicit(k),
            (None, true) => TokenSpec::Paper,
            (None, false) => TokenSpec::Default,
        };
        let mut out_dir = self.out.unwrap_or_else(|| PathBuf::from("mixtime-out"));
        if let Some(slot) = batch_slot {
            out_dir = out_dir.join(format!("exp{slot}"));
        }
        Ok(ExperimentConfig {
            graph,
            source: self.source.unwrap_or(0),
            epsilon: self.epsilon,
            tokens,
            seed: self.seed.unwrap_or(0),
            lazy: self.lazy.unwrap_or(false),
            averaging_threshold: self
                .averaging_threshold
                .unwrap_or(AveragingThreshold::LnFactor),
            max_length: self.max_length,
            oracle: self.oracle.unwrap_or(false),
            monotonicity_horizon: self.monotonicity_horizon.unwrap_or(50),
            spectral: self.spectral.unwrap_or(false),
            out_dir,
        })
    }
}

/// Parses a strict `num/den` rational; anything else is malformed.
pub fn parse_rational(s: &str) -> Result<BigRational, ConfigError> {
    let malformed = || ConfigError::MalformedRational(s.to_string());
    let (num, den) = s.split_once('/').ok_or_else(malformed)?;
    let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
    if !digits(num) || !digits(den) {
        return Err(malformed());
    }
    let num: BigInt = num.parse().map_err(|_| malformed())?;
    let den: BigInt = den.parse().map_err(|_| malformed())?;
    if den == BigInt::from(0) {
        return Err(malformed());
    }
    Ok(BigRational::new(num, den))
}

/// Parses `NAME` or `NAME:PARAMS` into a graph family.
pub fn parse_family(s: &str) -> Result<GraphFamily, ConfigError> {
    let bad = |reason: &str| ConfigError::InvalidValue {
        what: "--family".into(),
        value: s.to_string(),
        reason: reason.to_string(),
    };
    let (name, params) = match s.split_once(':') {
        Some((name, params)) => (name, Some(params)),
        None => (s, None),
    };
    let usize_param = |p: &str| -> Result<usize, ConfigError> {
        p.parse().map_err(|_| bad("expected an unsigned integer"))
    };
    let one = |params: Option<&str>| -> Result<usize, ConfigError> {
        usize_param(params.ok_or_else(|| bad("expected one parameter"))?)
    };
    match name {
        "complete" => Ok(GraphFamily::Complete(one(params)?)),
        "cycle" => Ok(GraphFamily::Cycle(one(params)?)),
        "barbell" => Ok(GraphFamily::Barbell(one(params)?)),
        "hypercube" => Ok(GraphFamily::Hypercube(
            one(params)?
                .try_into()
                .map_err(|_| bad("dimension too large"))?,
        )),
        "lollipop" => {
            let params = params.ok_or_else(|| bad("expected clique,path"))?;
            let (c, p) = params.split_once(',').ok_or_else(|| bad("expected clique,path"))?;
            Ok(GraphFamily::Lollipop {
                clique: usize_param(c)?,
                path: usize_param(p)?,
            })
        }
        "petersen" => {
            if params.is_some() {
                return Err(bad("petersen takes no parameters"));
            }
            Ok(GraphFamily::Petersen)
        }
        "erdos_renyi" => {
            let params = params.ok_or_else(|| bad("expected n,num/den"))?;
            let (n, p) = params.split_once(',').ok_or_else(|| bad("expected n,num/den"))?;
            Ok(GraphFamily::ErdosRenyi {
                n: usize_param(n)?,
                p: parse_rational(p)?,
            })
        }
        _ => Err(bad("unknown family")),
    }
}

fn parse_flags(args: &[String]) -> Result<PartialConfig, ConfigError> {
    let mut cfg = PartialConfig::default();
    let mut it = args.iter();
    let value = |flag: &str, it: &mut std::slice::Iter<String>| -> Result<String, ConfigError> {
        it.next()
            .cloned()
            .ok_or_else(|| ConfigError::MissingValue(flag.to_string()))
    };
    let number = |flag: &str, v: &str| -> Result<u64, ConfigError> {
        v.parse().map_err(|_| ConfigError::InvalidValue {
            what: flag.into(),
            value: v.into(),
            reason: "expected an unsigned integer".into(),
        })
    };
    while let Some(flag) = it.next() {
        match flag.as_str() {
            "--graph" => cfg.graph = Some(PathBuf::from(value(flag, &mut it)?)),
            "--family" => cfg.family = Some(parse_family(&value(flag, &mut it)?)?),
            "--source" => cfg.source = Some(number(flag, &value(flag, &mut it)?)? as usize),
            "--epsilon" => cfg.epsilon = Some(parse_rational(&value(flag, &mut it)?)?),
            "--tokens" => {
                let v = value(flag, &mut it)?;
                let tokens = v.parse::<BigUint>().map_err(|_| ConfigError::InvalidValue {
                    what: flag.clone(),
                    value: v.clone(),
                    reason: "expected a decimal integer".into(),
                })?;
                cfg.tokens = Some(tokens);
            }
            "--paper-k" => cfg.paper_k = Some(true),
            "--seed" => cfg.seed = Some(number(flag, &value(flag, &mut it)?)?),
            "--lazy" => cfg.lazy = Some(true),
            "--max-length" => cfg.max_length = Some(number(flag, &value(flag, &mut it)?)?),
            "--oracle" => cfg.oracle = Some(true),
            "--spectral" => cfg.spectral = Some(true),
            "--out" => cfg.out = Some(PathBuf::from(value(flag, &mut it)?)),
            "--jobs" => {
                let jobs = number(flag, &value(flag, &mut it)?)? as usize;
                if jobs == 0 {
                    return Err(ConfigError::InvalidValue {
                        what: flag.clone(),
                        value: "0".into(),
                        reason: "at least one worker is required".into(),
                    });
                }
                cfg.jobs = Some(jobs);
            }
            other => return Err(ConfigError::UnknownFlag(other.to_string())),
        }
    }
    Ok(cfg)
}

fn partial_from_json(obj: &serde_json::Map<String, serde_json::Value>) -> Result<PartialConfig, ConfigError> {
    use serde_json::Value;
    let mut cfg = PartialConfig::default();
    let str_of = |key: &str, v: &Value| -> Result<String, ConfigError> {
        v.as_str().map(str::to_string).ok_or_else(|| ConfigError::InvalidValue {
            what: key.into(),
            value: v.to_string(),
            reason: "expected a string".into(),
        })
    };
    let u64_of = |key: &str, v: &Value| -> Result<u64, ConfigError> {
        v.as_u64().ok_or_else(|| ConfigError::InvalidValue {
            what: key.into(),
            value: v.to_string(),
            reason: "expected an unsigned integer".into(),
        })
    };
    let bool_of = |key: &str, v: &Value| -> Result<bool, ConfigError> {
        v.as_bool().ok_or_else(|| ConfigError::InvalidValue {
            what: key.into(),
            value: v.to_string(),
            reason: "expected a boolean".into(),
        })
    };
    for (key, v) in obj {
        match key.as_str() {
            "graph" => cfg.graph = Some(PathBuf::from(str_of(key, v)?)),
            "family" => cfg.family = Some(parse_family(&str_of(key, v)?)?),
            "source" => cfg.source = Some(u64_of(key, v)? as usize),
            "epsilon" => cfg.epsilon = Some(parse_rational(&str_of(key, v)?)?),
            "tokens" => {
                let s = str_of(key, v)?;
                if s == "paper" {
                    cfg.paper_k = Some(true);
                } else {
                    cfg.tokens = Some(s.parse().map_err(|_| ConfigError::InvalidValue {
                        what: key.into(),
                        value: s.clone(),
                        reason: "expected a decimal integer or \"paper\"".into(),
                    })?);
                }
            }
            "seed" => cfg.seed = Some(u64_of(key, v)?),
            "lazy" => cfg.lazy = Some(bool_of(key, v)?),
            "averaging_threshold" => {
                let s = str_of(key, v)?;
                cfg.averaging_threshold = Some(match s.as_str() {
                    "ln" => AveragingThreshold::LnFactor,
                    "disabled" => AveragingThreshold::Disabled,
                    other => AveragingThreshold::Factor(other.parse().map_err(|_| {
                        ConfigError::InvalidValue {
                            what: key.into(),
                            value: other.into(),
                            reason: "expected \"ln\", \"disabled\", or an integer".into(),
                        }
                    })?),
                });
            }
            "max_length" => cfg.max_length = Some(u64_of(key, v)?),
            "oracle" => cfg.oracle = Some(bool_of(key, v)?),
            "monotonicity_horizon" => cfg.monotonicity_horizon = Some(u64_of(key, v)?),
            "spectral" => cfg.spectral = Some(bool_of(key, v)?),
            "out" => cfg.out = Some(PathBuf::from(str_of(key, v)?)),
            "jobs" => cfg.jobs = Some(u64_of(key, v)? as usize),
            "experiments" => {} // handled by the batch loader
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
    }
    Ok(cfg)
}

fn parse_file(path: &Path) -> Result<(PartialConfig, Option<Vec<PartialConfig>>), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(e.to_string()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ConfigError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| ConfigError::Json(
        "top level must be an object".into(),
    ))?;
    let base = partial_from_json(obj)?;
    let experiments = match obj.get("experiments") {
        None => None,
        Some(serde_json::Value::Array(items)) => {
            let mut parsed = Vec::with_capacity(items.len());
            for item in items {
                let entry = item.as_object().ok_or_else(|| {
                    ConfigError::Json("every experiment must be an object".into())
                })?;
                if entry.contains_key("experiments") {
                    return Err(ConfigError::Json("experiments cannot nest".into()));
                }
                parsed.push(partial_from_json(entry)?);
            }
            Some(parsed)
        }
        Some(other) => {
            return Err(ConfigError::InvalidValue {
                what: "experiments".into(),
                value: other.to_string(),
                reason: "expected an array of objects".into(),
            })
        }
    };
    Ok((base, experiments))
}

/// Resolves flags over an optional JSON config file into one experiment.
/// Flags always win over file values.
pub fn parse_config(args: &[String], file: Option<&Path>) -> Result<ExperimentConfig, ConfigError> {
    let batch = load_batch(args, file)?;
    match <[_; 1]>::try_from(batch.experiments) {
        Ok([single]) => Ok(single),
        Err(many) => Err(ConfigError::InvalidValue {
            what: "experiments".into(),
            value: many.len().to_string(),
            reason: "expected a single experiment".into(),
        }),
    }
}

/// Resolves flags and an optional config file into a batch of experiments.
pub fn load_batch(args: &[String], file: Option<&Path>) -> Result<Batch, ConfigError> {
    let flags = parse_flags(args)?;
    let (file_base, experiments) = match file {
        Some(path) => parse_file(path)?,
        None => (PartialConfig::default(), None),
    };
    let jobs = flags
        .jobs
        .or(file_base.jobs)
        .unwrap_or(1);
    match experiments {
        None => {
            let merged = flags.over(file_base);
            Ok(Batch {
                experiments: vec![merged.finalize(None)?],
                jobs,
            })
        }
        Some(entries) => {
            let many = entries.len() > 1;
            let experiments = entries
                .into_iter()
                .enumerate()
                .map(|(i, entry)| {
                    let has_own_out = entry.out.is_some();
                    let merged = flags.clone().over(entry.over(file_base.clone()));
                    let slot = (many && !has_own_out).then_some(i);
                    merged.finalize(slot)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Batch { experiments, jobs })
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Validation(#[from] GraphError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no probed length up to the cap {cap} brought the walk within epsilon")]
    CapExceeded {
        cap: u64,
        report: Box<ExperimentReport>,
    },
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::InvalidConfig(_) => 2,
            RunError::Validation(_) => 3,
            RunError::CapExceeded { .. } => 4,
            RunError::Oracle(_) | RunError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::InvalidConfig(_) => "config",
            RunError::Validation(_) => "validation",
            RunError::CapExceeded { .. } => "cap_exceeded",
            RunError::Oracle(_) => "oracle",
            RunError::Io(_) => "io",
        }
    }
}

/// Error object printed to stderr on any failure path.
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn ratio_str(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConfigEcho {
    pub graph: String,
    pub source: usize,
    pub epsilon: String,
    pub tokens: String,
    pub seed: u64,
    pub lazy: bool,
    pub averaging_threshold_factor: String,
    pub max_length: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GraphSummary {
    pub n: usize,
    pub m: usize,
    pub diameter: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EstimateSummary {
    pub value: u64,
    pub bracket: [u64; 2],
    pub total_rounds: u64,
    pub setup_rounds: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ProbeSummary {
    pub index: u64,
    pub length: u64,
    pub deviation: String,
    pub passed: bool,
    pub rounds: u64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OracleSummary {
    pub exact_mixing_time: u64,
    pub delta: String,
    /// Exact mixing time at `epsilon + delta`.
    pub lower: u64,
    /// Exact mixing time at `epsilon - delta`; absent when `delta >= epsilon`.
    pub upper: Option<u64>,
    /// Whether the estimate fell inside `[lower, upper]`.
    pub agreement: Option<bool>,
    pub monotonicity_horizon: u64,
    pub monotonicity_ok: bool,
    pub monotonicity_violation: Option<u64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SpectralSummary {
    pub lambda2: f64,
    pub lambda_min: f64,
    pub abs_gap: f64,
    pub cheeger_lower: f64,
    pub cheeger_upper: f64,
    pub tau_quarter: u64,
    pub sandwich_ok: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CongestionSummary {
    pub rounds: u64,
    pub messages: u64,
    pub max_messages_per_edge_round: u32,
    pub max_walk_messages_per_edge_round: u32,
    pub max_payload_bits: u64,
}

/// The full machine-readable result of one experiment. Serialization is
/// deterministic for a fixed config and seed.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ExperimentReport {
    pub status: String,
    pub config: ConfigEcho,
    pub graph: GraphSummary,
    pub estimate: Option<EstimateSummary>,
    pub probes: Vec<ProbeSummary>,
    pub oracle: Option<OracleSummary>,
    pub spectral: Option<SpectralSummary>,
    pub congestion: CongestionSummary,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

fn load_graph(cfg: &ExperimentConfig) -> Result<Graph, RunError> {
    match &cfg.graph {
        GraphSource::File(path) => {
            let text = std::fs::read_to_string(path)?;
            Ok(parse_graph_text(&text)?)
        }
        GraphSource::Family(family) => Ok(generate(family, cfg.seed)?),
    }
}

fn probe_summaries(probes: &[ProbeRecord]) -> Vec<ProbeSummary> {
    probes
        .iter()
        .map(|p| ProbeSummary {
            index: p.index,
            length: p.length,
            deviation: ratio_str(&p.deviation),
            passed: p.passed,
            rounds: p.rounds,
        })
        .collect()
}

/// Runs one experiment end to end and writes `report.json`, `probes.csv`
/// and `ledger.csv` into the configured output directory (also on the
/// length-cap error path, where the report is partial).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, RunError> {
    let g = load_graph(cfg)?;
    let n = g.node_count();
    if cfg.source >= n {
        return Err(RunError::Validation(GraphError::LabelOutOfRange {
            label: cfg.source,
            n,
        }));
    }
    validate_for_walk(&g, cfg.lazy)?;

    let mut walk = WalkConfig::for_graph(&g);
    walk.seed = cfg.seed;
    walk.lazy = cfg.lazy;
    walk.averaging_threshold = cfg.averaging_threshold.clone();
    match &cfg.tokens {
        TokenSpec::Default => {}
        TokenSpec::Paper => walk.tokens = paper_token_count(n),
        TokenSpec::Explicit(k) => walk.tokens = k.clone(),
    }
    if let Some(eps) = &cfg.epsilon {
        walk.epsilon = eps.clone();
    }
    if let Some(cap) = cfg.max_length {
        walk.max_length = cap;
    }
    walk.validate().map_err(RunError::InvalidConfig)?;

    let config_echo = ConfigEcho {
        graph: cfg.graph.to_string(),
        source: cfg.source,
        epsilon: ratio_str(&walk.epsilon),
        tokens: walk.tokens.to_string(),
        seed: walk.seed,
        lazy: walk.lazy,
        averaging_threshold_factor: match &walk.averaging_threshold {
            AveragingThreshold::LnFactor => format!("{}", ceil_ln(n).max(1)),
            AveragingThreshold::Factor(f) => f.to_string(),
            AveragingThreshold::Disabled => "disabled".into(),
        },
        max_length: walk.max_length,
    };
    let graph_summary = GraphSummary {
        n,
        m: g.edge_count(),
        diameter: g.diameter(),
    };
    let spectral = if cfg.spectral {
        let report = oracle::spectral_report(&g, cfg.lazy)?;
        Some(SpectralSummary {
            lambda2: report.lambda2,
            lambda_min: report.lambda_min,
            abs_gap: report.abs_gap,
            cheeger_lower: report.cheeger_lower,
            cheeger_upper: report.cheeger_upper,
            tau_quarter: report.tau_quarter,
            sandwich_ok: report.sandwich_ok,
        })
    } else {
        None
    };

    match estimate_mixing_time(&g, cfg.source, &walk) {
        Ok(est) => {
            let oracle_summary = if cfg.oracle {
                Some(oracle_comparison(&g, cfg, &walk, est.estimate)?)
            } else {
                None
            };
            let report = ExperimentReport {
                status: "ok".into(),
                config: config_echo,
                graph: graph_summary,
                estimate: Some(EstimateSummary {
                    value: est.estimate,
                    bracket: [est.bracket.0, est.bracket.1],
                    total_rounds: est.total_rounds,
                    setup_rounds: est.setup_rounds,
                }),
                probes: probe_summaries(&est.probes),
                oracle: oracle_summary,
                spectral,
                congestion: CongestionSummary {
                    rounds: est.ledger.rounds(),
                    messages: est.ledger.total_messages(),
                    max_messages_per_edge_round: est.ledger.max_messages_per_edge_round(None),
                    max_walk_messages_per_edge_round: est
                        .ledger
                        .max_messages_per_edge_round(Some(Phase::Walk)),
                    max_payload_bits: est.ledger.max_payload_bits(None),
                },
            };
            write_artifacts(cfg, &report, &probes_to_csv(&est.probes), &est.ledger.to_csv())?;
            Ok(report)
        }
        Err(MixingError::MaxLengthExceeded {
            cap,
            probes,
            total_rounds: _,
            ledger,
        }) => {
            let report = ExperimentReport {
                status: "max_length_exceeded".into(),
                config: config_echo,
                graph: graph_summary,
                estimate: None,
                probes: probe_summaries(&probes),
                oracle: None,
                spectral,
                congestion: CongestionSummary {
                    rounds: ledger.rounds(),
                    messages: ledger.total_messages(),
                    max_messages_per_edge_round: ledger.max_messages_per_edge_round(None),
                    max_walk_messages_per_edge_round: ledger
                        .max_messages_per_edge_round(Some(Phase::Walk)),
                    max_payload_bits: ledger.max_payload_bits(None),
                },
            };
            write_artifacts(cfg, &report, &probes_to_csv(&probes), &ledger.to_csv())?;
            Err(RunError::CapExceeded {
                cap,
                report: Box::new(report),
            })
        }
        Err(MixingError::Congest(e)) => {
            // protocol bugs surface loudly rather than as a report
            panic!("congestion invariant broke during estimation: {e}");
        }
    }
}

fn oracle_comparison(
    g: &Graph,
    cfg: &ExperimentConfig,
    walk: &WalkConfig,
    estimate: u64,
) -> Result<OracleSummary, RunError> {
    let delta = bias_delta(estimate, g.edge_count(), &walk.tokens)
        * BigRational::new(BigInt::from(2), BigInt::from(1));
    let oracle_cap = walk.max_length.saturating_mul(4);
    let plus = &walk.epsilon + &delta;
    let minus = &walk.epsilon - &delta;
    let mut thresholds = vec![walk.epsilon.clone(), plus];
    let has_upper = minus > BigRational::new(BigInt::from(0), BigInt::from(1));
    if has_upper {
        thresholds.push(minus);
    }
    let taus = oracle::exact_mixing_times(g, cfg.source, &thresholds, cfg.lazy, oracle_cap)?;
    let exact = taus[0];
    let lower = taus[1];
    let upper = has_upper.then(|| taus[2]);
    let agreement = Some(estimate >= lower && upper.is_none_or(|u| estimate <= u));
    let monotonicity =
        oracle::check_monotonicity(g, cfg.source, cfg.monotonicity_horizon, cfg.lazy);
    let (monotonicity_ok, monotonicity_violation) = match monotonicity {
        MonotonicityVerdict::Pass => (true, None),
        MonotonicityVerdict::ViolatedAt(t) => (false, Some(t)),
    };
    Ok(OracleSummary {
        exact_mixing_time: exact,
        delta: ratio_str(&delta),
        lower,
        upper,
        agreement,
        monotonicity_horizon: cfg.monotonicity_horizon,
        monotonicity_ok,
        monotonicity_violation,
    })
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
    probes_csv: &str,
    ledger_csv: &str,
) -> Result<(), RunError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("report.json"), report.to_json())?;
    std::fs::write(cfg.out_dir.join("probes.csv"), probes_csv)?;
    std::fs::write(cfg.out_dir.join("ledger.csv"), ledger_csv)?;
    Ok(())
}

/// One line per fact, for humans; the JSON report carries the full detail.
pub fn summarize(report: &ExperimentReport) -> String {
    let mut out = format!(
        "graph {} (n={}, m={}, D={})\n",
        report.config.graph, report.graph.n, report.graph.m, report.graph.diameter
    );
    match &report.estimate {
        Some(est) => out.push_str(&format!(
            "estimate {} with epsilon {} in {} rounds (bracket [{}, {}], {} probes)\n",
            est.value,
            report.config.epsilon,
            est.total_rounds,
            est.bracket[0],
            est.bracket[1],
            report.probes.len()
        )),
        None => out.push_str(&format!(
            "no estimate: {} (cap {})\n",
            report.status, report.config.max_length
        )),
    }
    if let Some(oracle) = &report.oracle {
        out.push_str(&format!(
            "oracle exact {}, agreement {}\n",
            oracle.exact_mixing_time,
            match oracle.agreement {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "n/a",
            }
        ));
    }
    if let Some(sp) = &report.spectral {
        out.push_str(&format!(
            "spectral lambda2 {:.6}, abs gap {:.6}, sandwich {}\n",
            sp.lambda2,
            sp.abs_gap,
            if sp.sandwich_ok { "ok" } else { "FAIL" }
        ));
    }
    out.push_str(&format!(
        "congestion: {} rounds, {} messages, walk max {} msg/edge/round, max payload {} bits\n",
        report.congestion.rounds,
        report.congestion.messages,
        report.congestion.max_walk_messages_per_edge_round,
        report.congestion.max_payload_bits
    ));
    out
}

/// Entry point behind `main`: parses arguments (an optional leading
/// positional is the config file), runs the batch, prints summaries, and
/// returns the process exit code.
pub fn run_main(args: &[String]) -> i32 {
    let (file, flags) = match args.first() {
        Some(first) if !first.starts_with("--") => {
            (Some(PathBuf::from(first)), &args[1..])
        }
        _ => (None, args),
    };
    let batch = match load_batch(flags, file.as_deref()) {
        Ok(batch) => batch,
        Err(e) => {
            eprintln!("{}", error_json("config", &e.to_string()));
            return 2;
        }
    };
    type Slot = Mutex<Option<(Result<ExperimentReport, RunError>, u128)>>;
    let total = batch.experiments.len();
    let queue = Mutex::new((0..total).collect::<VecDeque<usize>>());
    let results: Vec<Slot> = (0..total).map(|_| Mutex::new(None)).collect();
    let workers = batch.jobs.min(total).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = queue.lock().unwrap().pop_front();
                let Some(slot) = next else { break };
                let started = std::time::Instant::now();
                let outcome = run_experiment(&batch.experiments[slot]);
                let elapsed = started.elapsed().as_millis();
                *results[slot].lock().unwrap() = Some((outcome, elapsed));
            });
        }
    });

    let mut exit = 0;
    for (slot, cell) in results.iter().enumerate() {
        let (outcome, elapsed) = cell.lock().unwrap().take().expect("worker filled every slot");
        match outcome {
            Ok(report) => {
                print!("{}", summarize(&report));
                println!(
                    "wrote report.json, probes.csv, ledger.csv to {}",
                    batch.experiments[slot].out_dir.display()
                );
                println!("completed in {elapsed} ms");
            }
            Err(e) => {
                eprintln!("{}", error_json(e.kind(), &e.to_string()));
                if exit == 0 {
                    exit = e.exit_code();
                }
            }
        }
    }
    exit
}
