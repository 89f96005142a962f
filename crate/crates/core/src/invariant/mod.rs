//! Structural invariants written in a small modal fixpoint logic over
//! prompt trees, with exact checking and decode-time pruning.

mod eval;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::tree::partial::PartialTree;
use crate::tree::{DeweyPath, XmlTree};

pub use eval::{evaluate, Verdict};
pub use parse::parse_formula;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FormulaError {
    #[error("syntax error at offset {position}: {reason}")]
    Syntax { position: usize, reason: String },
    #[error("variable {0} occurs under a negation")]
    NonMonotone(String),
    #[error("formula cannot be decided on prefixes: {0}")]
    NotSafetyShaped(String),
    #[error("invariant file line {line}: {reason}")]
    File { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Eq,
    Ge,
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Tag(String),
    Attr {
        name: String,
        cmp: Cmp,
        value: Value,
    },
}

/// Formulas in positive normal form: negation only ever wraps an atom.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    NegAtom(Atom),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    SomeChild(Box<Formula>),
    EveryChild(Box<Formula>),
    SomeDesc(Box<Formula>),
    EveryDesc(Box<Formula>),
    CountChildren(Box<Formula>, usize),
    Var(String),
    Mu(String, Box<Formula>),
    Nu(String, Box<Formula>),
}

impl Formula {
    pub fn parse(src: &str) -> Result<Formula, FormulaError> {
        parse_formula(src)
    }

    pub fn tag(name: impl Into<String>) -> Formula {
        Formula::Atom(Atom::Tag(name.into()))
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(other))
    }

    /// True if a least fixpoint occurs anywhere inside.
    pub fn has_least_fixpoint(&self) -> bool {
        match self {
            Formula::Mu(..) => true,
            Formula::Nu(_, f)
            | Formula::SomeChild(f)
            | Formula::EveryChild(f)
            | Formula::SomeDesc(f)
            | Formula::EveryDesc(f)
            | Formula::CountChildren(f, _) => f.has_least_fixpoint(),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.has_least_fixpoint() || b.has_least_fixpoint()
            }
            _ => false,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        let (own, open, close) = match self {
            Formula::Or(..) => (1, "(", ")"),
            Formula::And(..) => (2, "(", ")"),
            Formula::Mu(..) | Formula::Nu(..) => (0, "(", ")"),
            _ => (3, "", ""),
        };
        let wrap = own < prec;
        if wrap {
            f.write_str(open)?;
        }
        match self {
            Formula::True => f.write_str("true")?,
            Formula::False => f.write_str("false")?,
            Formula::Atom(a) => write!(f, "{a}")?,
            Formula::NegAtom(a) => write!(f, "!{a}")?,
            Formula::And(a, b) => {
                a.write_prec(f, 2)?;
                f.write_str(" & ")?;
                b.write_prec(f, 3)?;
            }
            Formula::Or(a, b) => {
                a.write_prec(f, 1)?;
                f.write_str(" | ")?;
                b.write_prec(f, 2)?;
            }
            Formula::SomeChild(x) => write!(f, "some_child({x})")?,
            Formula::EveryChild(x) => write!(f, "every_child({x})")?,
            Formula::SomeDesc(x) => write!(f, "some_desc({x})")?,
            Formula::EveryDesc(x) => write!(f, "every_desc({x})")?,
            Formula::CountChildren(x, k) => write!(f, "count_children({x}) >= {k}")?,
            Formula::Var(v) => f.write_str(v)?,
            Formula::Mu(v, x) => write!(f, "mu {v}. {x}")?,
            Formula::Nu(v, x) => write!(f, "nu {v}. {x}")?,
        }
        if wrap {
            f.write_str(close)?;
        }
        Ok(())
    }
}

/// Prints in the concrete syntax accepted by [`parse_formula`].
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Tag(t) => write!(f, "tag={t}"),
            Atom::Attr { name, cmp, value } => {
                let op = match cmp {
                    Cmp::Eq => "=",
                    Cmp::Ge => ">=",
                    Cmp::Le => "<=",
                };
                match value {
                    Value::Num(n) => write!(f, "attr {name} {op} {n}"),
                    Value::Str(s) => write!(f, "attr {name} {op} \"{s}\""),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scope {
    /// Every node must satisfy the formula.
    #[default]
    AllNodes,
    /// Only the root must satisfy it.
    Root,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invariant {
    pub name: String,
    pub formula: Formula,
    pub scope: Scope,
}

impl Invariant {
    pub fn new(name: impl Into<String>, formula: Formula) -> Self {
        Invariant {
            name: name.into(),
            formula,
            scope: Scope::AllNodes,
        }
    }

    pub fn at_root(mut self) -> Self {
        self.scope = Scope::Root;
        self
    }
}

/// Outcome of checking one invariant on a finished tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub holds: bool,
    /// First failing node in document order.
    pub violation: Option<DeweyPath>,
}

/// Checks that every node satisfies `f`. The empty tree satisfies anything.
pub fn check_invariant(f: &Formula, t: &XmlTree) -> CheckResult {
    check_scoped(f, Scope::AllNodes, t)
}

pub fn check(inv: &Invariant, t: &XmlTree) -> CheckResult {
    check_scoped(&inv.formula, inv.scope, t)
}

fn check_scoped(f: &Formula, scope: Scope, t: &XmlTree) -> CheckResult {
    let sat = evaluate(f, t);
    let violation = match scope {
        Scope::AllNodes => t.paths().find(|p| !sat.contains(*p)).cloned(),
        Scope::Root => (!t.is_empty() && !sat.contains(&DeweyPath::root())).then(DeweyPath::root),
    };
    CheckResult {
        holds: violation.is_none(),
        violation,
    }
}

/// A decode-time filter derived from a safety-shaped invariant.
#[derive(Debug, Clone)]
pub struct PruningFilter {
    invariant: Invariant,
}

/// Builds a pruning filter. Least fixpoints are rejected because their
/// violations cannot always be seen on a finite prefix.
pub fn pruning_filter(inv: &Invariant) -> Result<PruningFilter, FormulaError> {
    if inv.formula.has_least_fixpoint() {
        return Err(FormulaError::NotSafetyShaped(format!(
            "invariant {} contains a least fixpoint",
            inv.name
        )));
    }
    Ok(PruningFilter {
        invariant: inv.clone(),
    })
}

impl PruningFilter {
    pub fn invariant(&self) -> &Invariant {
        &self.invariant
    }

    pub fn verdict(&self, partial: &PartialTree) -> Verdict {
        eval::prune_verdict(&self.invariant.formula, self.invariant.scope, partial)
    }

    /// Verdict on a raw document prefix. Text that is not a well-formed
    /// prefix yields [`Verdict::Unknown`]; rejecting it is the grammar's job.
    pub fn verdict_text(&self, prefix: &str) -> Verdict {
        match crate::tree::partial::parse_prefix(prefix) {
            Ok(p) => self.verdict(&p),
            Err(_) => Verdict::Unknown,
        }
    }
}

/// Reads an invariant file: `[name]` or `[name:root]` headers, each
/// followed by one formula that may span several lines. `#` starts a comment.
pub fn parse_invariants(text: &str) -> Result<Vec<Invariant>, FormulaError> {
    let mut out = Vec::new();
    let mut current: Option<(String, Scope, usize, String)> = None;
    let finish = |cur: Option<(String, Scope, usize, String)>,
                  out: &mut Vec<Invariant>|
     -> Result<(), FormulaError> {
        if let Some((name, scope, line, body)) = cur {
            if body.trim().is_empty() {
                return Err(FormulaError::File {
                    line,
                    reason: format!("invariant {name} has no formula"),
                });
            }
            let formula = parse_formula(&body).map_err(|e| match e {
                FormulaError::Syntax { position, reason } => FormulaError::File {
                    line: line
                        + body[..position.min(body.len())]
                            .trim_end()
                            .matches('\n')
                            .count()
                        + 1,
                    reason,
                },
                other => other,
            })?;
            out.push(Invariant {
                name,
                formula,
                scope,
            });
        }
        Ok(())
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            if let Some(cur) = current.as_mut() {
                cur.3.push('\n');
            }
            continue;
        }
        if let Some(header) = line.strip_prefix('[') {
            let header = header.strip_suffix(']').ok_or(FormulaError::File {
                line: i + 1,
                reason: "unterminated header".into(),
            })?;
            finish(current.take(), &mut out)?;
            let (name, scope) = match header.split_once(':') {
                Some((n, "root")) => (n, Scope::Root),
                Some((_, other)) => {
                    return Err(FormulaError::File {
                        line: i + 1,
                        reason: format!("unknown scope {other}"),
                    })
                }
                None => (header, Scope::AllNodes),
            };
            if out.iter().any(|inv: &Invariant| inv.name == name) {
                return Err(FormulaError::File {
                    line: i + 1,
                    reason: format!("duplicate invariant {name}"),
                });
            }
            current = Some((name.trim().to_string(), scope, i + 1, String::new()));
        } else {
            match current.as_mut() {
                Some(cur) => {
                    cur.3.push_str(line);
                    cur.3.push('\n');
                }
                None => {
                    return Err(FormulaError::File {
                        line: i + 1,
                        reason: "formula before any [name] header".into(),
                    })
                }
            }
        }
    }
    finish(current, &mut out)?;
    Ok(out)
}

/// Satisfaction set as a plain set of paths, convenient for comparisons.
pub fn satisfying_paths(f: &Formula, t: &XmlTree) -> BTreeSet<DeweyPath> {
    evaluate(f, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::parse_document;

    fn doc(s: &str) -> XmlTree {
        parse_document(s).unwrap()
    }

    #[test]
    fn parse_and_print_round_trip() {
        let srcs = [
            "tag=answer => count_children(tag=evidence & attr conf >= 0.8) >= 2",
            "nu X. (tag=step | tag=plan) & every_child(X)",
            "mu Y. tag=answer | some_child(Y)",
            "!tag=a | attr kind = \"x y\"",
            "every_desc(!tag=counterexample)",
        ];
        for s in srcs {
            let f = parse_formula(s).unwrap();
            let again = parse_formula(&f.to_string()).unwrap();
            assert_eq!(f, again, "{s}");
        }
    }

    #[test]
    fn implication_binds_loosest_and_right() {
        let f = parse_formula("tag=a => tag=b => tag=c | tag=d").unwrap();
        let expected =
            Formula::NegAtom(Atom::Tag("a".into()))
                .or(Formula::NegAtom(Atom::Tag("b".into()))
                    .or(Formula::tag("c").or(Formula::tag("d"))));
        assert_eq!(f, expected);
    }

    #[test]
    fn fixpoint_body_extends_right() {
        let f = parse_formula("mu X. tag=a | some_child(X)").unwrap();
        assert!(matches!(f, Formula::Mu(_, ref b) if matches!(**b, Formula::Or(..))));
    }

    #[test]
    fn syntax_errors_and_monotonicity() {
        assert!(matches!(
            parse_formula("tag="),
            Err(FormulaError::Syntax { .. })
        ));
        assert!(matches!(parse_formula("mu X. !X"), Err(FormulaError::NonMonotone(v)) if v == "X"));
        assert!(matches!(
            parse_formula("nu X. X => tag=a"),
            Err(FormulaError::NonMonotone(_))
        ));
        assert!(matches!(
            parse_formula("!(tag=a & tag=b)"),
            Err(FormulaError::Syntax { position: 0, .. })
        ));
        assert!(matches!(
            parse_formula("some_child(Z)"),
            Err(FormulaError::Syntax { position: 11, .. })
        ));
        assert!(matches!(
            parse_formula("attr conf >= high"),
            Err(FormulaError::Syntax { .. })
        ));
        assert!(matches!(
            parse_formula("tag=a tag=b"),
            Err(FormulaError::Syntax { .. })
        ));
    }

    #[test]
    fn evidence_invariant_on_finished_trees() {
        let f = parse_formula("tag=answer => count_children(tag=evidence & attr conf >= 0.8) >= 2")
            .unwrap();
        let good = doc(
            r#"<turn><answer>x<evidence ref="a" conf="0.9"/><evidence ref="b" conf="0.80"/></answer></turn>"#,
        );
        assert!(check_invariant(&f, &good).holds);
        let weak = doc(
            r#"<turn><answer>x<evidence ref="a" conf="0.9"/><evidence ref="b" conf="0.5"/></answer></turn>"#,
        );
        let r = check_invariant(&f, &weak);
        assert_eq!(r.violation, Some(DeweyPath::new(vec![1])));
        let junk =
            doc(r#"<turn><answer>x<evidence conf="high"/><evidence conf="0.9"/></answer></turn>"#);
        assert!(!check_invariant(&f, &junk).holds);
    }

    #[test]
    fn bottom_satisfies_everything() {
        assert!(check_invariant(&Formula::False, &XmlTree::bottom()).holds);
        assert!(!check_invariant(&Formula::False, &doc("<a/>")).holds);
    }

    #[test]
    fn fixpoints_reach_and_all_paths() {
        let t = doc("<a><b><c/></b><d/></a>");
        let reach_c = parse_formula("mu X. tag=c | some_child(X)").unwrap();
        let s = evaluate(&reach_c, &t);
        let expect: BTreeSet<_> = [vec![], vec![1], vec![1, 1]]
            .into_iter()
            .map(DeweyPath::new)
            .collect();
        assert_eq!(s, expect);
        let no_d_below = parse_formula("nu X. !tag=d & every_child(X)").unwrap();
        let s = evaluate(&no_d_below, &t);
        let expect: BTreeSet<_> = [vec![1], vec![1, 1]]
            .into_iter()
            .map(DeweyPath::new)
            .collect();
        assert_eq!(s, expect);
    }

    #[test]
    fn invariant_file_stanzas() {
        let text = "# checks\n[evidence]\ntag=answer =>\n  count_children(tag=evidence) >= 1\n\n[rooted:root]\ntag=turn\n";
        let invs = parse_invariants(text).unwrap();
        assert_eq!(invs.len(), 2);
        assert_eq!(invs[1].scope, Scope::Root);
        let t = doc("<turn><answer>x<evidence/></answer></turn>");
        assert!(invs.iter().all(|i| check(i, &t).holds));
        let err = parse_invariants("[a]\ntag=x\n[b]\ntag=\n").unwrap_err();
        assert!(matches!(err, FormulaError::File { line: 4, .. }), "{err:?}");
        assert!(parse_invariants("tag=a").is_err());
        assert!(parse_invariants("[a]\ntag=a\n[a]\ntag=b").is_err());
    }

    #[test]
    fn pruning_rejects_least_fixpoints() {
        let inv = Invariant::new(
            "reach",
            parse_formula("mu X. tag=a | some_child(X)").unwrap(),
        );
        assert!(matches!(
            pruning_filter(&inv),
            Err(FormulaError::NotSafetyShaped(_))
        ));
    }

    #[test]
    fn pruning_on_prefixes() {
        let f = parse_formula("tag=answer => count_children(tag=evidence & attr conf >= 0.8) >= 2")
            .unwrap();
        let filt = pruning_filter(&Invariant::new("ev", f)).unwrap();
        assert_eq!(
            filt.verdict_text(r#"<turn><answer>x<evidence ref="a" conf="0.9"/>"#),
            Verdict::Unknown
        );
        assert_eq!(
            filt.verdict_text(r#"<turn><answer>x<evidence ref="a" conf="0.9"/></answer>"#),
            Verdict::Prune
        );
        assert_eq!(
            filt.verdict_text(
                r#"<turn><answer>x<evidence ref="a" conf="0.9"/><evidence ref="b" conf="0.85"/></answer></turn>"#
            ),
            Verdict::Keep
        );
        let rooted =
            pruning_filter(&Invariant::new("r", Formula::tag("dialog")).at_root()).unwrap();
        assert_eq!(rooted.verdict_text("<dialog><turn>"), Verdict::Keep);
        assert_eq!(rooted.verdict_text("<turn>"), Verdict::Prune);
        assert_eq!(rooted.verdict_text(""), Verdict::Unknown);
    }
}
