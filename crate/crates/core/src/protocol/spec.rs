//! Protocol spec files: one TOML document per run.
//!
//! ```toml
//! kind = "plan_verify_answer"   # tool_call | multi_branch | channel_exchange | hole_filler
//! grammar = "protocol.ebnf"     # optional; the built-in protocol grammar otherwise
//! invariants = "protocol.inv"   # optional
//! budget = 4
//! seed = 7
//! task = "Answer the question."
//!
//! [proposer]                    # single-turn runs, and compare/join nodes
//! kind = "scripted"
//! fixture = "pva.fixture"
//!
//! [[branch]]
//! name = "alpha"
//! proposer = { kind = "random" }
//!
//! [verifier]
//! kind = "accept"
//! conf = 0.9
//!
//! [tools."weather.lookup"]
//! output = "<temperature unit=\"C\">22</temperature>"
//! ```
//!
//! Relative paths are resolved against the directory holding the spec file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::engine::{banach_iterate, hole_filler, BanachOptions, EngineError, IterationReport};
use crate::grammar::compile_ebnf;
use crate::invariant::parse_invariants;
use crate::metric::MetricConfig;

use super::{
    run_channel_exchange, run_multibranch, run_plan_verify_answer, run_tool_call,
    AcceptingVerifier, HttpProposer, Proposer, ProtocolError, ProtocolKind, ProtocolRun,
    ProtocolSpec, RejectingVerifier, RunFailure, ScriptedProposer, ScriptedVerifier,
    SeededRandomProposer, ToolRegistry, Verifier,
};

/// The grammar used when a spec names none.
pub const PROTOCOL_GRAMMAR: &str = include_str!("../../fixtures/protocol/protocol.ebnf");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    PlanVerifyAnswer,
    ToolCall,
    MultiBranch,
    ChannelExchange,
    HoleFiller,
}

impl SpecKind {
    pub fn name(self) -> &'static str {
        match self {
            SpecKind::PlanVerifyAnswer => "plan_verify_answer",
            SpecKind::ToolCall => "tool_call",
            SpecKind::MultiBranch => "multi_branch",
            SpecKind::ChannelExchange => "channel_exchange",
            SpecKind::HoleFiller => "hole_filler",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposerConf {
    Scripted { fixture: PathBuf },
    Random { seed: Option<u64> },
    Http { endpoint: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VerifierConf {
    Scripted {
        fixture: PathBuf,
    },
    Accept {
        #[serde(default = "default_conf")]
        conf: f64,
        #[serde(default = "default_prefix")]
        prefix: String,
    },
    Reject {
        #[serde(default = "default_reason")]
        reason: String,
    },
}

fn default_conf() -> f64 {
    0.9
}
fn default_prefix() -> String {
    "v".into()
}
fn default_reason() -> String {
    "not supported by the sources".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConf {
    pub name: String,
    pub proposer: Option<ProposerConf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConf {
    /// Markup returned on success.
    pub output: Option<String>,
    /// Failure message; mutually exclusive with `output`.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleFillerConf {
    pub arity: usize,
    pub depth: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub kind: SpecKind,
    pub grammar: Option<PathBuf>,
    pub invariants: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_retry")]
    pub retry_budget: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_min_evidence")]
    pub min_step_evidence: usize,
    pub task: Option<String>,
    pub guidelines: Option<String>,
    #[serde(default = "default_channel")]
    pub channel: String,
    #[serde(default)]
    pub concurrent: bool,
    #[serde(default)]
    pub fail_fast: bool,
    pub proposer: Option<ProposerConf>,
    #[serde(default)]
    pub branch: Vec<BranchConf>,
    pub verifier: Option<VerifierConf>,
    #[serde(default)]
    pub tools: BTreeMap<String, ToolConf>,
    pub metric: Option<MetricConfig>,
    pub hole_filler: Option<HoleFillerConf>,
}

fn default_budget() -> usize {
    4
}
fn default_retry() -> usize {
    3
}
fn default_threshold() -> f64 {
    0.8
}
fn default_min_evidence() -> usize {
    1
}
fn default_channel() -> String {
    "bus".into()
}

/// Values given on the command line that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub endpoint: Option<String>,
    pub max_depth: Option<usize>,
    pub concurrent: Option<bool>,
    pub threshold: Option<f64>,
    /// Replaces the spec file's `[metric]` table; `max_depth` still applies on top.
    pub metric: Option<MetricConfig>,
}

/// A spec file turned into live objects, ready to run.
pub enum Runnable {
    Protocol {
        spec: ProtocolSpec,
        proposer: Box<dyn Proposer>,
        branches: Vec<Box<dyn Proposer>>,
        verifier: Box<dyn Verifier>,
        tools: ToolRegistry,
    },
    HoleFiller {
        arity: usize,
        depth: usize,
        eps: f64,
        budget: usize,
        metric: MetricConfig,
    },
}

pub enum Execution {
    Protocol(Result<ProtocolRun, RunFailure>),
    Iteration(Result<IterationReport, EngineError>),
}

fn spec_err(msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Spec(msg.into())
}

fn read(base: &Path, p: &Path) -> Result<String, ProtocolError> {
    let full = base.join(p);
    fs::read_to_string(&full).map_err(|e| spec_err(format!("{}: {e}", full.display())))
}

fn build_proposer(
    conf: &ProposerConf,
    base: &Path,
    seed: u64,
    endpoint: Option<&str>,
) -> Result<Box<dyn Proposer>, ProtocolError> {
    Ok(match conf {
        ProposerConf::Scripted { fixture } => {
            let text = read(base, fixture)?;
            Box::new(
                ScriptedProposer::parse(&text)
                    .map_err(|e| spec_err(format!("{}: {e}", fixture.display())))?,
            )
        }
        ProposerConf::Random { seed: own } => {
            Box::new(SeededRandomProposer::new(own.unwrap_or(seed)))
        }
        ProposerConf::Http { endpoint: own } => {
            let url = endpoint
                .or(own.as_deref())
                .ok_or_else(|| spec_err("http proposer needs an endpoint"))?;
            Box::new(HttpProposer::new(url))
        }
    })
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        toml::from_str(text).map_err(|e| spec_err(e.to_string()))
    }
}

/// Reads a spec file and everything it references.
pub fn load(path: &Path, overrides: &Overrides) -> Result<Runnable, ProtocolError> {
    let text =
        fs::read_to_string(path).map_err(|e| spec_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    build(SpecFile::parse(&text)?, base, overrides)
}

/// Builds a runnable from an already parsed spec.
pub fn build(
    file: SpecFile,
    base: &Path,
    overrides: &Overrides,
) -> Result<Runnable, ProtocolError> {
    let budget = overrides.budget.unwrap_or(file.budget);
    let seed = overrides.seed.unwrap_or(file.seed);
    let mut metric = overrides.metric.or(file.metric).unwrap_or_default();
    if let Some(d) = overrides.max_depth {
        metric.max_depth = d;
    }
    metric.validate().map_err(|e| spec_err(e.to_string()))?;
    let kind = match file.kind {
        SpecKind::HoleFiller => {
            let hf = file
                .hole_filler
                .ok_or_else(|| spec_err("hole_filler kind needs a [hole_filler] table"))?;
            if hf.arity == 0 || hf.depth == 0 {
                return Err(spec_err("hole filler needs arity and depth of at least 1"));
            }
            return Ok(Runnable::HoleFiller {
                arity: hf.arity,
                depth: hf.depth,
                eps: hf.eps,
                budget,
                metric,
            });
        }
        SpecKind::PlanVerifyAnswer => ProtocolKind::PlanVerifyAnswer,
        SpecKind::ToolCall => ProtocolKind::ToolCall,
        SpecKind::MultiBranch => ProtocolKind::MultiBranch,
        SpecKind::ChannelExchange => ProtocolKind::ChannelExchange,
    };
    let grammar_src = match &file.grammar {
        Some(p) => read(base, p)?,
        None => PROTOCOL_GRAMMAR.to_string(),
    };
    let grammar = compile_ebnf(&grammar_src).map_err(|e| spec_err(format!("grammar: {e}")))?;
    let mut spec = ProtocolSpec::new(kind, grammar)?;
    if let Some(p) = &file.invariants {
        spec.invariants =
            parse_invariants(&read(base, p)?).map_err(|e| spec_err(format!("invariants: {e}")))?;
    }
    spec.budget = budget;
    spec.branches = file.branch.iter().map(|b| b.name.clone()).collect();
    spec.task = file.task.clone();
    spec.guidelines = file.guidelines.clone();
    spec.retry_budget = file.retry_budget;
    spec.threshold = overrides.threshold.unwrap_or(file.threshold);
    spec.min_step_evidence = file.min_step_evidence;
    spec.channel = file.channel.clone();
    spec.concurrent = overrides.concurrent.unwrap_or(file.concurrent);
    spec.fail_fast = file.fail_fast;
    spec.metric = metric;
    spec.validate()?;

    let endpoint = overrides.endpoint.as_deref();
    let fallback = file
        .proposer
        .clone()
        .unwrap_or(ProposerConf::Random { seed: None });
    let proposer = build_proposer(&fallback, base, seed, endpoint)?;
    let branches = file
        .branch
        .iter()
        .map(|b| {
            build_proposer(
                b.proposer.as_ref().unwrap_or(&fallback),
                base,
                seed,
                endpoint,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let verifier: Box<dyn Verifier> = match file.verifier.clone().unwrap_or(VerifierConf::Accept {
        conf: default_conf(),
        prefix: default_prefix(),
    }) {
        VerifierConf::Scripted { fixture } => Box::new(
            ScriptedVerifier::parse(&read(base, &fixture)?)
                .map_err(|e| spec_err(format!("{}: {e}", fixture.display())))?,
        ),
        VerifierConf::Accept { conf, prefix } => {
            if !(0.0..=1.0).contains(&conf) {
                return Err(spec_err("verifier conf must lie in [0, 1]"));
            }
            Box::new(AcceptingVerifier { conf, prefix })
        }
        VerifierConf::Reject { reason } => Box::new(RejectingVerifier { reason }),
    };
    let mut tools = ToolRegistry::new();
    for (name, t) in &file.tools {
        match (&t.output, &t.failure) {
            (Some(out), None) => tools.fixed(name.clone(), out.clone()),
            (None, Some(msg)) => tools.failing(name.clone(), msg.clone()),
            _ => {
                return Err(spec_err(format!(
                    "tool {name} needs exactly one of output and failure"
                )))
            }
        };
    }
    if kind == ProtocolKind::ToolCall && file.tools.is_empty() {
        return Err(spec_err("tool_call kind needs at least one [tools] entry"));
    }
    Ok(Runnable::Protocol {
        spec,
        proposer,
        branches,
        verifier,
        tools,
    })
}

impl Runnable {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Runnable::HoleFiller { .. } => SpecKind::HoleFiller.name(),
            Runnable::Protocol { spec, .. } => match spec.kind {
                ProtocolKind::PlanVerifyAnswer => SpecKind::PlanVerifyAnswer.name(),
                ProtocolKind::ToolCall => SpecKind::ToolCall.name(),
                ProtocolKind::MultiBranch => SpecKind::MultiBranch.name(),
                ProtocolKind::ChannelExchange => SpecKind::ChannelExchange.name(),
            },
        }
    }

    pub fn execute(&mut self) -> Execution {
        match self {
            Runnable::HoleFiller {
                arity,
                depth,
                eps,
                budget,
                metric,
            } => {
                let (start, t) = hole_filler(*arity, *depth);
                Execution::Iteration(banach_iterate(
                    &t,
                    start,
                    metric,
                    *eps,
                    *budget,
                    BanachOptions::default(),
                ))
            }
            Runnable::Protocol {
                spec,
                proposer,
                branches,
                verifier,
                tools,
            } => Execution::Protocol(match spec.kind {
                ProtocolKind::PlanVerifyAnswer => {
                    run_plan_verify_answer(spec, proposer.as_mut(), verifier.as_ref())
                }
                ProtocolKind::ToolCall => {
                    run_tool_call(spec, proposer.as_mut(), verifier.as_ref(), tools)
                }
                ProtocolKind::MultiBranch => {
                    run_multibranch(spec, branches, proposer.as_mut(), verifier.as_ref())
                }
                ProtocolKind::ChannelExchange => {
                    run_channel_exchange(spec, branches, proposer.as_mut(), verifier.as_ref())
                }
            }),
        }
    }
}
