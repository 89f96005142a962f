//! Grammars over characters, incremental recognition and token masking.

mod earley;
mod ebnf;
mod mask;
mod sample;

use std::collections::HashSet;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::CharSet;

pub use earley::ParserState;
pub use mask::{token_mask, MaskError, TokenMask, Vocabulary, VocabularyError};
pub use sample::{
    constrained_sample, constrained_sample_filtered, Choice, FirstAllowedPolicy, Policy,
    SampleError, SampleOutcome, SmallestTokenPolicy, StepContext, UniformPolicy,
};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("grammar syntax error on line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("undefined nonterminal {0}")]
    UndefinedNonterminal(String),
    #[error("unknown start rule {0}")]
    UnknownStart(String),
    #[error("the grammar's language is empty")]
    EmptyLanguage,
}

/// A right-hand-side symbol: a nonterminal index or a terminal-set index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    N(usize),
    T(usize),
}

#[derive(Debug)]
pub(crate) struct Production {
    pub lhs: usize,
    pub rhs: Vec<Symbol>,
}

/// A context-free grammar whose terminals are character sets.
///
/// Nonterminals introduced while lowering repetitions and groups are named
/// `Rule#n` after the rule they came from.
#[derive(Debug)]
pub struct Grammar {
    name: Option<String>,
    source: String,
    names: Vec<String>,
    /// Number of rules written in the source; they come first in `names`.
    declared: usize,
    start: usize,
    terminals: Vec<CharSet>,
    prods: Vec<Production>,
    by_lhs: Vec<Vec<usize>>,
    nullable: Vec<bool>,
}

/// Compiles EBNF source. The first rule is the start symbol.
pub fn compile_ebnf(source: &str) -> Result<Arc<Grammar>, GrammarError> {
    let parsed = ebnf::parse(source)?;
    let lowered = ebnf::lower(&parsed)?;
    let declared = parsed.rules.len();
    let g = Grammar::build(
        parsed.name,
        source.to_string(),
        lowered.names,
        declared,
        0,
        lowered.terminals,
        lowered.prods,
    );
    Ok(Arc::new(g))
}

impl Grammar {
    fn build(
        name: Option<String>,
        source: String,
        names: Vec<String>,
        declared: usize,
        start: usize,
        terminals: Vec<CharSet>,
        prods: Vec<(usize, Vec<Symbol>)>,
    ) -> Grammar {
        let n = names.len();
        // Productive nonterminals: least fixed point.
        let mut productive = vec![false; n];
        loop {
            let mut changed = false;
            for (lhs, rhs) in &prods {
                if productive[*lhs] {
                    continue;
                }
                let ok = rhs.iter().all(|s| match *s {
                    Symbol::N(m) => productive[m],
                    Symbol::T(t) => !terminals[t].is_empty(),
                });
                if ok {
                    productive[*lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let prods: Vec<Production> = prods
            .into_iter()
            .filter(|(lhs, rhs)| {
                productive[*lhs]
                    && rhs.iter().all(|s| match *s {
                        Symbol::N(m) => productive[m],
                        Symbol::T(t) => !terminals[t].is_empty(),
                    })
            })
            .map(|(lhs, rhs)| Production { lhs, rhs })
            .collect();
        let mut by_lhs = vec![Vec::new(); n];
        for (i, p) in prods.iter().enumerate() {
            by_lhs[p.lhs].push(i);
        }
        let mut nullable = vec![false; n];
        loop {
            let mut changed = false;
            for p in &prods {
                if !nullable[p.lhs]
                    && p.rhs
                        .iter()
                        .all(|s| matches!(*s, Symbol::N(m) if nullable[m]))
                {
                    nullable[p.lhs] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Grammar {
            name,
            source,
            names,
            declared,
            start,
            terminals,
            prods,
            by_lhs,
            nullable,
        }
    }

    /// The name from the `grammar Name` header, if any.
    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn start_name(&self) -> &str {
        &self.names[self.start]
    }

    /// Rules as written in the source, in order.
    pub fn rule_names(&self) -> &[String] {
        &self.names[..self.declared]
    }

    /// The same grammar with a different start rule.
    pub fn with_start(&self, rule: &str) -> Result<Arc<Grammar>, GrammarError> {
        let start = self
            .rule_names()
            .iter()
            .position(|n| n == rule)
            .ok_or_else(|| GrammarError::UnknownStart(rule.to_string()))?;
        Ok(Arc::new(Grammar {
            name: self.name.clone(),
            source: self.source.clone(),
            names: self.names.clone(),
            declared: self.declared,
            start,
            terminals: self.terminals.clone(),
            prods: self
                .prods
                .iter()
                .map(|p| Production {
                    lhs: p.lhs,
                    rhs: p.rhs.clone(),
                })
                .collect(),
            by_lhs: self.by_lhs.clone(),
            nullable: self.nullable.clone(),
        }))
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn nonterminal_count(&self) -> usize {
        self.names.len()
    }

    pub fn nonterminal_name(&self, n: usize) -> &str {
        &self.names[n]
    }

    pub fn terminal(&self, t: usize) -> &CharSet {
        &self.terminals[t]
    }

    /// Productions as `(lhs, rhs)` pairs, after pruning unproductive ones.
    pub fn productions(&self) -> impl Iterator<Item = (usize, &[Symbol])> {
        self.prods.iter().map(|p| (p.lhs, p.rhs.as_slice()))
    }

    pub fn is_empty_language(&self) -> bool {
        self.by_lhs[self.start].is_empty()
    }

    /// Nonterminals reachable from the start symbol.
    pub fn reachable(&self) -> HashSet<usize> {
        let mut seen = HashSet::from([self.start]);
        let mut stack = vec![self.start];
        while let Some(n) = stack.pop() {
            for &pi in &self.by_lhs[n] {
                for s in &self.prods[pi].rhs {
                    if let Symbol::N(m) = *s {
                        if seen.insert(m) {
                            stack.push(m);
                        }
                    }
                }
            }
        }
        seen
    }

    pub fn initial_state(self: &Arc<Self>) -> Result<ParserState, GrammarError> {
        if self.is_empty_language() {
            return Err(GrammarError::EmptyLanguage);
        }
        Ok(ParserState::initial(self.clone()))
    }

    /// Membership test.
    pub fn accepts(self: &Arc<Self>, text: &str) -> bool {
        match self.initial_state() {
            Ok(s) => s.advance(text).is_accepting(),
            Err(_) => false,
        }
    }

    /// Byte offset of the first character after which `text` stops being a
    /// viable prefix, or `None` if the whole text is viable.
    pub fn first_dead_offset(self: &Arc<Self>, text: &str) -> Option<usize> {
        let mut s = self.initial_state().ok()?;
        for (i, c) in text.char_indices() {
            s = s.advance_char(c);
            if !s.is_viable() {
                return Some(i);
            }
        }
        None
    }
}

/// Free-function form of [`Grammar::accepts`].
pub fn accepts(g: &Arc<Grammar>, text: &str) -> bool {
    g.accepts(text)
}

/// Free-function form of [`Grammar::initial_state`].
pub fn initial_state(g: &Arc<Grammar>) -> Result<ParserState, GrammarError> {
    g.initial_state()
}
