use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::grammar::{constrained_sample, Grammar, SampleOutcome, SmallestTokenPolicy, Vocabulary};
use crate::tree::join_label;
use crate::tree::{ContentSpec, DeweyPath, LatticeConfig, Node, NodeLabel, XmlTree};

use super::EngineError;

pub type GuardFn = Arc<dyn Fn(&XmlTree, &DeweyPath) -> bool + Send + Sync>;
pub type ResolverFn = Arc<dyn Fn(&XmlTree, &DeweyPath) -> ContentSpec + Send + Sync>;
pub type RewriteFn = Arc<dyn Fn(&XmlTree, &DeweyPath) -> XmlTree + Send + Sync>;

/// Where a rule fires.
///
/// Guards that stay true when the tree is refined are *upward closed*;
/// only those count towards the monotonicity certificate.
#[derive(Clone)]
pub enum Guard {
    Always,
    IsRoot,
    Tag(String),
    /// Path depth at most `k`.
    MaxDepth(usize),
    /// The node's own child index is at most `k`. Holds at the root.
    MaxIndex(u32),
    At(DeweyPath),
    HasChild(String),
    HasAttr(String),
    /// The node at this absolute path exists and has literal content.
    LiteralAt(DeweyPath),
    /// The parent exists and has literal content. False at the root.
    ParentLiteral,
    LacksChild(String),
    ContentIsHole,
    And(Vec<Guard>),
    Or(Vec<Guard>),
    Not(Box<Guard>),
    Custom {
        name: String,
        f: GuardFn,
    },
}

impl Guard {
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(&XmlTree, &DeweyPath) -> bool + Send + Sync + 'static,
    ) -> Self {
        Guard::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn and(self, other: Guard) -> Guard {
        Guard::And(vec![self, other])
    }

    pub fn holds(&self, t: &XmlTree, p: &DeweyPath) -> bool {
        let label = t.get(p);
        match self {
            Guard::Always => true,
            Guard::IsRoot => p.is_root(),
            Guard::Tag(tag) => label.is_some_and(|l| &l.tag == tag),
            Guard::MaxDepth(k) => p.depth() <= *k,
            Guard::MaxIndex(k) => p.last().is_none_or(|i| i <= *k),
            Guard::At(q) => p == q,
            Guard::HasChild(tag) => label.is_some() && t.count_children_tagged(p, tag) > 0,
            Guard::HasAttr(name) => label.is_some_and(|l| l.attrs.contains_key(name)),
            Guard::LiteralAt(q) => t.get(q).is_some_and(|l| l.content.is_literal()),
            Guard::ParentLiteral => p
                .parent()
                .and_then(|q| t.get(&q))
                .is_some_and(|l| l.content.is_literal()),
            Guard::LacksChild(tag) => label.is_some() && t.count_children_tagged(p, tag) == 0,
            Guard::ContentIsHole => label.is_some_and(|l| l.content.is_hole()),
            Guard::And(gs) => gs.iter().all(|g| g.holds(t, p)),
            Guard::Or(gs) => gs.iter().any(|g| g.holds(t, p)),
            Guard::Not(g) => !g.holds(t, p),
            Guard::Custom { f, .. } => f(t, p),
        }
    }

    pub fn is_upward_closed(&self) -> bool {
        match self {
            Guard::LacksChild(_) | Guard::ContentIsHole | Guard::Not(_) | Guard::Custom { .. } => {
                false
            }
            Guard::And(gs) | Guard::Or(gs) => gs.iter().all(Guard::is_upward_closed),
            _ => true,
        }
    }
}

impl fmt::Debug for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Always => write!(f, "Always"),
            Guard::IsRoot => write!(f, "IsRoot"),
            Guard::Tag(t) => write!(f, "Tag({t})"),
            Guard::MaxDepth(k) => write!(f, "MaxDepth({k})"),
            Guard::MaxIndex(k) => write!(f, "MaxIndex({k})"),
            Guard::At(p) => write!(f, "At({p})"),
            Guard::HasChild(t) => write!(f, "HasChild({t})"),
            Guard::HasAttr(a) => write!(f, "HasAttr({a})"),
            Guard::LiteralAt(p) => write!(f, "LiteralAt({p})"),
            Guard::ParentLiteral => write!(f, "ParentLiteral"),
            Guard::LacksChild(t) => write!(f, "LacksChild({t})"),
            Guard::ContentIsHole => write!(f, "ContentIsHole"),
            Guard::And(gs) => f.debug_tuple("And").field(gs).finish(),
            Guard::Or(gs) => f.debug_tuple("Or").field(gs).finish(),
            Guard::Not(g) => f.debug_tuple("Not").field(g).finish(),
            Guard::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// The position a patch is placed at, relative to the matched node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Anchor {
    SelfNode,
    Child(u32),
    NextSibling,
    /// After the current last child. Depends on the child count, so it is
    /// not covered by the monotonicity certificate.
    Append,
}

impl Anchor {
    fn resolve(&self, t: &XmlTree, p: &DeweyPath) -> Option<DeweyPath> {
        match self {
            Anchor::SelfNode => Some(p.clone()),
            Anchor::Child(i) => Some(p.child(*i)),
            Anchor::NextSibling => Some(p.parent()?.child(p.last()? + 1)),
            Anchor::Append => Some(p.child(t.child_count(p) + 1)),
        }
    }
}

#[derive(Clone)]
pub enum Resolver {
    Constant(ContentSpec),
    Computed { name: String, f: ResolverFn },
}

impl fmt::Debug for Resolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolver::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Resolver::Computed { name, .. } => write!(f, "Computed({name})"),
        }
    }
}

/// What a rule contributes at a matched node.
///
/// Every action except [`Action::Rewrite`] produces a patch that is joined
/// into the tree, so it can only add nodes and attributes or narrow content.
#[derive(Clone)]
pub enum Action {
    /// Places the template at the root. Fires once per pass, even on ⊥.
    Seed(Node),
    ExpandChildren {
        anchor: Anchor,
        template: Node,
    },
    Annotate {
        name: String,
        value: ContentSpec,
    },
    FillHole(Resolver),
    /// Fills the content at `target` (relative to the match) with a member
    /// of the grammar's language, or rejects literal content outside it.
    EnforceGrammar {
        grammar: Arc<Grammar>,
        target: DeweyPath,
        witness: String,
    },
    InsertEvidence {
        anchor: Anchor,
        reference: String,
        conf: f64,
    },
    /// Replaces the tree wholesale. Not certified; exists so tests can build
    /// deliberately broken transformers.
    Rewrite {
        name: String,
        f: RewriteFn,
    },
}

impl Action {
    /// Prepares an [`Action::EnforceGrammar`], computing the witness text.
    pub fn enforce_grammar(
        grammar: Arc<Grammar>,
        target: DeweyPath,
    ) -> Result<Action, EngineError> {
        let vocab = Vocabulary::printable_ascii();
        let witness = match constrained_sample(&grammar, &vocab, &mut SmallestTokenPolicy, 4096) {
            Ok(SampleOutcome::Complete(s)) if !s.contains(['<', '>']) => s,
            _ => return Err(EngineError::NoWitness(grammar.start_name().to_string())),
        };
        Ok(Action::EnforceGrammar {
            grammar,
            target,
            witness,
        })
    }

    pub fn rewrite(
        name: impl Into<String>,
        f: impl Fn(&XmlTree, &DeweyPath) -> XmlTree + Send + Sync + 'static,
    ) -> Self {
        Action::Rewrite {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    fn is_monotone(&self) -> Result<(), String> {
        match self {
            Action::ExpandChildren {
                anchor: Anchor::Append,
                ..
            }
            | Action::InsertEvidence {
                anchor: Anchor::Append,
                ..
            } => Err("appends after the last child".into()),
            Action::FillHole(Resolver::Computed { name, .. }) => {
                Err(format!("computed resolver {name}"))
            }
            Action::EnforceGrammar { .. } => Err("keeps member literals but fills holes".into()),
            Action::Rewrite { name, .. } => Err(format!("arbitrary rewrite {name}")),
            _ => Ok(()),
        }
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Seed(n) => f.debug_tuple("Seed").field(&n.label.tag).finish(),
            Action::ExpandChildren { anchor, template } => f
                .debug_struct("ExpandChildren")
                .field("anchor", anchor)
                .field("tag", &template.label.tag)
                .finish(),
            Action::Annotate { name, value } => f
                .debug_struct("Annotate")
                .field("name", name)
                .field("value", value)
                .finish(),
            Action::FillHole(r) => f.debug_tuple("FillHole").field(r).finish(),
            Action::EnforceGrammar {
                grammar, target, ..
            } => f
                .debug_struct("EnforceGrammar")
                .field("start", &grammar.start_name())
                .field("target", target)
                .finish(),
            Action::InsertEvidence {
                anchor,
                reference,
                conf,
            } => f
                .debug_struct("InsertEvidence")
                .field("anchor", anchor)
                .field("ref", reference)
                .field("conf", conf)
                .finish(),
            Action::Rewrite { name, .. } => write!(f, "Rewrite({name})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RewriteRule {
    pub name: String,
    pub guard: Guard,
    pub action: Action,
    /// Maximum number of changing edits per tree level in one pass.
    pub edit_budget: Option<usize>,
}

impl RewriteRule {
    pub fn new(name: impl Into<String>, guard: Guard, action: Action) -> Self {
        RewriteRule {
            name: name.into(),
            guard,
            action,
            edit_budget: None,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.edit_budget = Some(budget);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PassPolicy {
    #[default]
    SinglePass,
    /// Repeats a stage until it no longer changes the tree, at most `max_rounds` times.
    Quiescence { max_rounds: usize },
}

#[derive(Debug, Clone)]
struct Stage {
    rules: Vec<RewriteRule>,
    policy: PassPolicy,
}

/// The syntactic evidence that a transformer is inflationary and monotone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub inflationary: bool,
    pub monotone: bool,
    /// One entry per rule that breaks a property.
    pub reasons: Vec<String>,
}

/// An ordered sequence of rule stages applied as one deterministic map.
#[derive(Debug, Clone)]
pub struct Transformer {
    stages: Vec<Stage>,
    lattice: LatticeConfig,
}

impl Default for Transformer {
    fn default() -> Self {
        Transformer::identity()
    }
}

impl Transformer {
    pub fn new(rules: Vec<RewriteRule>) -> Self {
        Transformer::with_policy(rules, PassPolicy::SinglePass)
    }

    pub fn with_policy(rules: Vec<RewriteRule>, policy: PassPolicy) -> Self {
        Transformer {
            stages: vec![Stage { rules, policy }],
            lattice: LatticeConfig::default(),
        }
    }

    pub fn identity() -> Self {
        Transformer::new(Vec::new())
    }

    pub fn with_lattice(mut self, cfg: LatticeConfig) -> Self {
        self.lattice = cfg;
        self
    }

    pub fn rules(&self) -> impl Iterator<Item = &RewriteRule> {
        self.stages.iter().flat_map(|s| s.rules.iter())
    }

    /// Left-to-right composition: `compose([a, b]).apply(t) == b.apply(a.apply(t))`.
    pub fn compose(ts: &[Transformer]) -> Result<Transformer, EngineError> {
        let first = ts.first().ok_or(EngineError::EmptyComposition)?;
        Ok(Transformer {
            stages: ts.iter().flat_map(|t| t.stages.iter().cloned()).collect(),
            lattice: first.lattice,
        })
    }

    pub fn certificate(&self) -> Certificate {
        let mut reasons = Vec::new();
        let mut inflationary = true;
        let mut monotone = true;
        for r in self.rules() {
            if matches!(r.action, Action::Rewrite { .. }) {
                inflationary = false;
            }
            if !r.guard.is_upward_closed() {
                monotone = false;
                reasons.push(format!(
                    "{}: guard {:?} is not upward closed",
                    r.name, r.guard
                ));
            }
            if let Err(why) = r.action.is_monotone() {
                monotone = false;
                reasons.push(format!("{}: {why}", r.name));
            }
            if r.edit_budget.is_some() {
                monotone = false;
                reasons.push(format!("{}: edit budget truncates matches", r.name));
            }
        }
        Certificate {
            inflationary,
            monotone,
            reasons,
        }
    }

    pub fn apply(&self, t: &XmlTree) -> Result<XmlTree, EngineError> {
        if t.is_top() {
            return Err(EngineError::TopInput);
        }
        let mut cur = t.clone();
        for stage in &self.stages {
            match stage.policy {
                PassPolicy::SinglePass => cur = self.pass(&stage.rules, &cur)?,
                PassPolicy::Quiescence { max_rounds } => {
                    for _ in 0..max_rounds.max(1) {
                        let next = self.pass(&stage.rules, &cur)?;
                        if next == cur {
                            break;
                        }
                        cur = next;
                    }
                }
            }
        }
        Ok(cur)
    }

    fn pass(&self, rules: &[RewriteRule], input: &XmlTree) -> Result<XmlTree, EngineError> {
        let mut cur = input.clone();
        let mut provenance: HashMap<DeweyPath, String> = HashMap::new();
        for rule in rules {
            let matches: Vec<DeweyPath> = match rule.action {
                Action::Seed(_) => vec![DeweyPath::root()],
                _ => input.paths().cloned().collect(),
            };
            let mut spent: HashMap<usize, usize> = HashMap::new();
            for p in matches.iter().filter(|p| rule.guard.holds(input, p)) {
                let (at, node) = match self.patch(rule, &cur, p)? {
                    Patch::None => continue,
                    Patch::Replace(t) => {
                        cur = t;
                        continue;
                    }
                    Patch::Merge(at, node) => (at, node),
                };
                if !closed_position(&cur, &at) {
                    continue;
                }
                let mut changes = Vec::new();
                plan_merge(&cur, &at, &node, &self.lattice, &mut changes).map_err(|path| {
                    EngineError::RuleConflict {
                        first: provenance
                            .get(&path)
                            .cloned()
                            .unwrap_or_else(|| "input".into()),
                        second: rule.name.clone(),
                        path,
                    }
                })?;
                if changes.is_empty() {
                    continue;
                }
                if let Some(budget) = rule.edit_budget {
                    let used = spent.entry(at.depth()).or_insert(0);
                    if *used >= budget {
                        continue;
                    }
                    *used += 1;
                }
                for (path, label) in changes {
                    provenance.insert(path.clone(), rule.name.clone());
                    if !cur.set_label(&path, label.clone()) {
                        cur.graft(&path, Node::new(label));
                    }
                }
            }
        }
        Ok(cur)
    }

    fn patch(
        &self,
        rule: &RewriteRule,
        cur: &XmlTree,
        p: &DeweyPath,
    ) -> Result<Patch, EngineError> {
        let self_with = |f: &dyn Fn(NodeLabel) -> NodeLabel| match cur.get(p) {
            Some(l) => Patch::Merge(p.clone(), Node::new(f(NodeLabel::new(l.tag.clone())))),
            None => Patch::None,
        };
        Ok(match &rule.action {
            Action::Seed(node) => Patch::Merge(DeweyPath::root(), node.clone()),
            Action::ExpandChildren { anchor, template } => match anchor.resolve(cur, p) {
                Some(at) => Patch::Merge(at, template.clone()),
                None => Patch::None,
            },
            Action::InsertEvidence {
                anchor,
                reference,
                conf,
            } => match anchor.resolve(cur, p) {
                Some(at) => Patch::Merge(at, evidence_node(reference, *conf)),
                None => Patch::None,
            },
            Action::Annotate { name, value } => {
                self_with(&|l| l.with_attr(name.clone(), value.clone()))
            }
            Action::FillHole(Resolver::Constant(c)) => self_with(&|l| l.with_content(c.clone())),
            Action::FillHole(Resolver::Computed { f, .. }) => {
                let c = f(cur, p);
                self_with(&|l| l.with_content(c.clone()))
            }
            Action::EnforceGrammar {
                grammar,
                target,
                witness,
            } => {
                let at = p.join(target);
                match cur.get(&at) {
                    None => Patch::None,
                    Some(l) => match &l.content {
                        ContentSpec::Literal(s) if grammar.accepts(s) => Patch::None,
                        ContentSpec::Literal(_) => {
                            return Err(EngineError::GrammarViolation {
                                rule: rule.name.clone(),
                                path: at,
                            })
                        }
                        _ => Patch::Merge(
                            at,
                            Node::new(NodeLabel::new(l.tag.clone()).with_text(witness.clone())),
                        ),
                    },
                }
            }
            Action::Rewrite { f, .. } => Patch::Replace(f(cur, p)),
        })
    }
}

enum Patch {
    None,
    Merge(DeweyPath, Node),
    Replace(XmlTree),
}

/// `<evidence ref=".." conf=".."/>` with the confidence printed to two decimals.
pub fn evidence_node(reference: &str, conf: f64) -> Node {
    Node::new(
        NodeLabel::new("evidence")
            .with_attr("ref", ContentSpec::literal(reference))
            .with_attr("conf", ContentSpec::literal(format!("{conf:.2}")))
            .with_text(""),
    )
}

/// A node may be placed at `at` only if the result stays prefix- and
/// sibling-closed.
fn closed_position(t: &XmlTree, at: &DeweyPath) -> bool {
    if t.contains(at) {
        return true;
    }
    match at.parent() {
        None => t.is_empty(),
        Some(parent) => t.contains(&parent) && at.prev_sibling().is_none_or(|s| t.contains(&s)),
    }
}

/// Collects the labels that joining `node` at `at` would write, in document
/// order. Fails with the conflicting path.
fn plan_merge(
    t: &XmlTree,
    at: &DeweyPath,
    node: &Node,
    cfg: &LatticeConfig,
    out: &mut Vec<(DeweyPath, NodeLabel)>,
) -> Result<(), DeweyPath> {
    match t.get(at) {
        Some(existing) => {
            let joined = join_label(existing, &node.label, cfg).ok_or_else(|| at.clone())?;
            if &joined != existing {
                out.push((at.clone(), joined));
            }
        }
        None => out.push((at.clone(), node.label.clone())),
    }
    for (i, c) in node.children.iter().enumerate() {
        plan_merge(t, &at.child(i as u32 + 1), c, cfg, out)?;
    }
    Ok(())
}
