//! Executable interaction recipes: plan, verify and answer rounds, tool
//! calls, parallel branches with a final comparison, and branches that talk
//! over a channel. Every run is a chain of snapshots, each refining the last.

mod bus;
mod proposer;
mod runtime;
pub mod spec;
mod tools;
pub mod transcript;
mod verifier;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::engine::IterationReport;
use crate::grammar::{Grammar, GrammarError};
use crate::invariant::{CheckResult, Invariant};
use crate::metric::MetricConfig;
use crate::tree::{DeweyPath, XmlTree};

pub use bus::{ChannelBus, Message};
pub use proposer::{
    FixtureError, HttpProposer, HttpRequestBody, HttpResponseBody, ProposalRequest, Proposer,
    ProposerError, ScriptedProposer, SeededRandomProposer, Site,
};
pub use runtime::{run_channel_exchange, run_multibranch, run_plan_verify_answer, run_tool_call};
pub use tools::{ToolInvocation, ToolRegistry};
pub use verifier::{
    AcceptingVerifier, RejectingVerifier, ScriptedVerifier, Verifier, VerifierOutcome,
    VerifyRequest,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProtocolError {
    #[error("no answer after {budget} rounds")]
    RoundBudgetExceeded { budget: usize },
    #[error("proposer gave no acceptable {site} fragment for {path}: {reason}")]
    ProposerExhausted {
        path: DeweyPath,
        site: &'static str,
        reason: String,
    },
    #[error("verifier rejected every step in round {round}")]
    VerifierRejectedAll {
        round: usize,
        branch: Option<String>,
    },
    #[error("message {0} is addressed to an undeclared branch")]
    UnknownAddressee(String),
    #[error("branch {0} still has unread messages")]
    UnconsumedMessages(String),
    #[error("branches without an answer: {}", .branches.join(", "))]
    BranchFailed { branches: Vec<String> },
    #[error("branch {branch}: {source}")]
    InBranch {
        branch: String,
        source: Box<ProtocolError>,
    },
    #[error("final document leaves the grammar at offset {offset:?}")]
    GrammarViolation { offset: Option<usize> },
    #[error("invariant {name} fails at {path}")]
    InvariantViolated { name: String, path: DeweyPath },
    #[error("invalid protocol: {0}")]
    Spec(String),
    #[error("fragment is not well-formed: {0}")]
    Fragment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    PlanVerifyAnswer,
    ToolCall,
    MultiBranch,
    ChannelExchange,
}

/// Everything a run needs besides its proposers, verifier and tools.
#[derive(Debug, Clone)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub grammar: Arc<Grammar>,
    pub invariants: Vec<Invariant>,
    /// Maximum number of rounds per unit.
    pub budget: usize,
    pub branches: Vec<String>,
    pub task: Option<String>,
    pub guidelines: Option<String>,
    /// Attempts per proposal site.
    pub retry_budget: usize,
    /// Minimum confidence for evidence to open the answer gate.
    pub threshold: f64,
    /// Qualifying evidence needed on each step.
    pub min_step_evidence: usize,
    pub channel: String,
    /// Run branches on separate threads.
    pub concurrent: bool,
    /// Treat a round where every step is rejected as fatal.
    pub fail_fast: bool,
    pub metric: MetricConfig,
}

impl ProtocolSpec {
    /// A spec with the default thresholds; checks that the grammar has every
    /// fragment rule the runtime asks for.
    pub fn new(kind: ProtocolKind, grammar: Arc<Grammar>) -> Result<Self, ProtocolError> {
        for site in proposer::Site::ALL {
            grammar
                .with_start(site.fragment_rule())
                .map_err(|e: GrammarError| ProtocolError::Spec(e.to_string()))?;
        }
        Ok(ProtocolSpec {
            kind,
            grammar,
            invariants: Vec::new(),
            budget: 4,
            branches: Vec::new(),
            task: None,
            guidelines: None,
            retry_budget: 3,
            threshold: 0.8,
            min_step_evidence: 1,
            channel: "bus".into(),
            concurrent: false,
            fail_fast: false,
            metric: MetricConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.budget == 0 {
            return Err(ProtocolError::Spec("budget must be at least 1".into()));
        }
        if self.retry_budget == 0 {
            return Err(ProtocolError::Spec(
                "retry budget must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ProtocolError::Spec("threshold must lie in [0, 1]".into()));
        }
        let multi = matches!(
            self.kind,
            ProtocolKind::MultiBranch | ProtocolKind::ChannelExchange
        );
        if multi && self.branches.len() < 2 {
            return Err(ProtocolError::Spec(
                "branch kinds need at least two branches".into(),
            ));
        }
        let mut names = self.branches.clone();
        names.sort();
        names.dedup();
        if names.len() != self.branches.len() {
            return Err(ProtocolError::Spec("branch names must be distinct".into()));
        }
        if let Some(bad) = self
            .branches
            .iter()
            .find(|b| !crate::tree::is_valid_name(b))
        {
            return Err(ProtocolError::Spec(format!("invalid branch name {bad:?}")));
        }
        self.metric
            .validate()
            .map_err(|e| ProtocolError::Spec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// Every unit emitted its answer.
    Answered,
    /// The tool failed; the failure is recorded as a counterexample and the
    /// answer gate stays shut.
    ToolFailed(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub rounds: usize,
    pub proposals: usize,
    pub rejected_proposals: usize,
    pub counterexamples: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub final_tree: XmlTree,
    pub report: IterationReport,
    pub status: RunStatus,
    pub stats: RunStats,
    pub bus: Option<ChannelBus>,
    pub verdicts: Vec<(String, CheckResult)>,
}

impl ProtocolRun {
    pub fn snapshots(&self) -> &[XmlTree] {
        &self.report.iterates
    }
}

/// A failed run together with every snapshot taken before it stopped.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: ProtocolError,
    pub snapshots: Vec<XmlTree>,
    pub stats: RunStats,
}

impl RunFailure {
    pub fn last(&self) -> Option<&XmlTree> {
        self.snapshots.last()
    }
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {}
