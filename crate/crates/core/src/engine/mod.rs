//! Prompt transformers built from rewrite rules, and the iterations that
//! drive them to fixed points.

mod iterate;
mod rule;

use thiserror::Error;

use crate::metric::MetricError;
use crate::tree::{DeweyPath, XmlTree};

pub use iterate::{
    banach_iterate, check_least_fixed_point, check_monotone, hole_filler, kleene_iterate,
    trace_report, BanachOptions, EngineWarning, IterationReport, LeastCheck, MonotoneReport,
};
pub use rule::{
    evidence_node, Action, Anchor, Certificate, Guard, GuardFn, PassPolicy, Resolver, ResolverFn,
    RewriteFn, RewriteRule, Transformer,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error("rules {first} and {second} disagree at {path}")]
    RuleConflict {
        first: String,
        second: String,
        path: DeweyPath,
    },
    #[error("transformers are not applied to the top element")]
    TopInput,
    #[error("no fixed point within {max_steps} steps")]
    BudgetExceeded {
        max_steps: usize,
        last: Box<XmlTree>,
    },
    #[error("rule {rule}: content at {path} is outside the grammar")]
    GrammarViolation { rule: String, path: DeweyPath },
    #[error("grammar starting at {0} has no member usable as text content")]
    NoWitness(String),
    #[error("cannot compose an empty list of transformers")]
    EmptyComposition,
    #[error(transparent)]
    Metric(#[from] MetricError),
}
