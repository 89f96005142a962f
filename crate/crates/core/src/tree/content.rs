use std::fmt;
use std::sync::Arc;

use crate::lang::regex::{self, escape_literal, Flavor};
use crate::lang::{CharSet, Dfa};

use super::lattice::{LatticeConfig, LggMode};
use super::TreeError;

/// Attribute value that stands for an unknown attribute.
pub const HOLE_ATTR: &str = "__HOLE__";

/// A regular constraint on text, kept with the source it was written as.
///
/// Equality is language equality: the automaton is canonical.
#[derive(Clone)]
pub struct Pattern {
    source: Arc<str>,
    dfa: Arc<Dfa>,
}

impl Pattern {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn dfa(&self) -> &Dfa {
        &self.dfa
    }

    pub fn matches(&self, text: &str) -> bool {
        self.dfa.accepts(text)
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.dfa, &other.dfa) || self.dfa == other.dfa
    }
}

impl Eq for Pattern {}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({:?})", self.source)
    }
}

/// Text content, ordered by specificity: a hole admits any text, a pattern
/// admits its language, a literal admits exactly one string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentSpec {
    Hole,
    Pattern(Pattern),
    /// Must not contain `<` or `>`.
    Literal(String),
}

impl ContentSpec {
    pub fn literal(s: impl Into<String>) -> Self {
        ContentSpec::Literal(s.into())
    }

    /// Compiles a pattern, canonicalizing a one-string language to a literal
    /// and the language of all text to a hole.
    pub fn pattern(source: &str, state_cap: usize) -> Result<Self, TreeError> {
        let re = regex::parse(source, Flavor::Pattern)
            .map_err(|e| TreeError::InvalidPattern(format!("{source:?}: {e}")))?;
        let dfa = Dfa::from_regex(&re, &CharSet::text(), state_cap).map_err(|_| {
            TreeError::InvalidPattern(format!("{source:?} exceeds the automaton state cap"))
        })?;
        if dfa.is_empty() {
            return Err(TreeError::InvalidPattern(format!(
                "{source:?} matches no text"
            )));
        }
        Ok(Self::from_dfa(source.into(), dfa))
    }

    fn from_dfa(source: Arc<str>, dfa: Dfa) -> Self {
        if dfa == Dfa::universal(&CharSet::text()) {
            return ContentSpec::Hole;
        }
        if let Some(s) = dfa.singleton() {
            return ContentSpec::Literal(s);
        }
        ContentSpec::Pattern(Pattern {
            source,
            dfa: Arc::new(dfa),
        })
    }

    pub fn is_hole(&self) -> bool {
        matches!(self, ContentSpec::Hole)
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, ContentSpec::Literal(_))
    }

    pub fn as_literal(&self) -> Option<&str> {
        match self {
            ContentSpec::Literal(s) => Some(s),
            _ => None,
        }
    }

    /// Whether `text` is admitted.
    pub fn admits(&self, text: &str) -> bool {
        match self {
            ContentSpec::Hole => !text.contains(['<', '>']),
            ContentSpec::Pattern(p) => p.matches(text),
            ContentSpec::Literal(s) => s == text,
        }
    }

    fn source(&self) -> String {
        match self {
            ContentSpec::Hole => ".*".into(),
            ContentSpec::Pattern(p) => p.source.to_string(),
            ContentSpec::Literal(s) => escape_literal(s),
        }
    }

    fn to_dfa(&self) -> Dfa {
        match self {
            ContentSpec::Hole => Dfa::universal(&CharSet::text()),
            ContentSpec::Pattern(p) => (*p.dfa).clone(),
            ContentSpec::Literal(s) => Dfa::literal(s),
        }
    }

    /// `self ⊑ other`: every text admitted by `other` is admitted by `self`.
    ///
    /// Pattern pairs whose inclusion check exceeds the state cap count as
    /// incomparable.
    pub fn le(&self, other: &ContentSpec, state_cap: usize) -> bool {
        use ContentSpec::*;
        match (self, other) {
            (Hole, _) => true,
            (_, Hole) => false,
            (Literal(a), Literal(b)) => a == b,
            (Literal(_), Pattern(_)) => false,
            (Pattern(p), Literal(s)) => p.matches(s),
            (Pattern(a), Pattern(b)) => {
                a == b || a.dfa.includes(&b.dfa, state_cap).unwrap_or(false)
            }
        }
    }

    /// Greatest lower bound (generalization).
    pub fn meet(&self, other: &ContentSpec, cfg: &LatticeConfig) -> ContentSpec {
        if self.le(other, cfg.state_cap) {
            return self.clone();
        }
        if other.le(self, cfg.state_cap) {
            return other.clone();
        }
        match cfg.lgg {
            LggMode::Coarse => ContentSpec::Hole,
            LggMode::Union => match self.to_dfa().union(&other.to_dfa(), cfg.state_cap) {
                Ok(dfa) => {
                    let src = format!("(?:{})|(?:{})", self.source(), other.source());
                    Self::from_dfa(src.into(), dfa)
                }
                Err(_) => ContentSpec::Hole,
            },
        }
    }

    /// Least upper bound, or `None` when no text satisfies both.
    pub fn join(&self, other: &ContentSpec, cfg: &LatticeConfig) -> Option<ContentSpec> {
        if self.le(other, cfg.state_cap) {
            return Some(other.clone());
        }
        if other.le(self, cfg.state_cap) {
            return Some(self.clone());
        }
        let dfa = self
            .to_dfa()
            .intersect(&other.to_dfa(), cfg.state_cap)
            .ok()?;
        if dfa.is_empty() {
            return None;
        }
        let src = format!("(?:{})&(?:{})", self.source(), other.source());
        Some(Self::from_dfa(src.into(), dfa))
    }
}
