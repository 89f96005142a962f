use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;

use crate::engine::{evidence_node, trace_report};
use crate::grammar::Grammar;
use crate::invariant::check;
use crate::tree::{
    join, parse_document, serialize, ContentSpec, DeweyPath, Node, NodeLabel, XmlTree,
};

use super::{
    ChannelBus, ProposalRequest, Proposer, ProtocolError, ProtocolKind, ProtocolRun, ProtocolSpec,
    RunFailure, RunStats, RunStatus, Site, ToolInvocation, ToolRegistry, Verifier, VerifierOutcome,
    VerifyRequest,
};

struct Ctx<'a> {
    spec: &'a ProtocolSpec,
    fragments: BTreeMap<Site, Arc<Grammar>>,
    verifier: &'a dyn Verifier,
    tools: Option<&'a ToolRegistry>,
}

/// One place where a plan, its verification and an answer are grown: a
/// turn, or a compare/join node.
#[derive(Debug, Clone)]
struct Unit {
    /// Branch name, or `compare`/`join`; `None` for single-turn runs.
    key: Option<String>,
    root: DeweyPath,
    tool: bool,
    channel: Option<DeweyPath>,
    extra_evidence: Vec<NodeLabel>,
    answered: bool,
    posted: bool,
    tool_failure: Option<String>,
}

impl Unit {
    fn new(key: Option<String>, root: DeweyPath) -> Self {
        Unit {
            key,
            root,
            tool: false,
            channel: None,
            extra_evidence: Vec::new(),
            answered: false,
            posted: false,
            tool_failure: None,
        }
    }

    fn settled(&self) -> bool {
        self.answered || self.tool_failure.is_some()
    }
}

/// Trees after each of the four passes of one round, plus an outgoing
/// message if the unit posted one.
struct RoundOut {
    passes: Vec<XmlTree>,
    outbox: Option<(String, String)>,
    stats: RunStats,
}

fn literal_node(tag: &str, text: &str) -> Node {
    Node::new(NodeLabel::new(tag).with_text(text))
}

fn parse_fragment(text: &str) -> Result<Node, ProtocolError> {
    let t = parse_document(text).map_err(|e| ProtocolError::Fragment(e.to_string()))?;
    t.subtree(&DeweyPath::root())
        .ok_or_else(|| ProtocolError::Fragment("empty fragment".into()))
}

fn has_child_tag(t: &XmlTree, parent: &DeweyPath, tag: &str) -> bool {
    t.count_children_tagged(parent, tag) > 0
}

fn attr_u32(label: &NodeLabel, name: &str, default: u32) -> u32 {
    label
        .attr_text(name)
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn step_coords(label: &NodeLabel) -> (u32, u32) {
    (attr_u32(label, "index", 0), attr_u32(label, "revision", 1))
}

impl Ctx<'_> {
    fn qualifying(&self, t: &XmlTree, step: &DeweyPath) -> Vec<NodeLabel> {
        t.children(step)
            .iter()
            .filter_map(|c| t.get(c))
            .filter(|l| {
                l.tag == "evidence"
                    && l.attr_text("conf")
                        .and_then(|c| c.parse::<f64>().ok())
                        .is_some_and(|c| c >= self.spec.threshold)
            })
            .cloned()
            .collect()
    }

    /// Latest revision of each step index, in index order.
    fn latest_steps(&self, t: &XmlTree, plan: &DeweyPath) -> BTreeMap<u32, (u32, DeweyPath)> {
        let mut latest: BTreeMap<u32, (u32, DeweyPath)> = BTreeMap::new();
        for step in t.children(plan) {
            let Some(label) = t.get(&step).filter(|l| l.tag == "step") else {
                continue;
            };
            let (index, rev) = step_coords(label);
            if latest.get(&index).is_none_or(|(r, _)| rev >= *r) {
                latest.insert(index, (rev, step));
            }
        }
        latest
    }

    /// The evidence the answer will cite, or `None` while the gate is shut.
    fn gate(&self, t: &XmlTree, plan: &DeweyPath) -> Option<Vec<NodeLabel>> {
        let latest = self.latest_steps(t, plan);
        if latest.is_empty() {
            return None;
        }
        let mut cited = Vec::new();
        for (_, path) in latest.values() {
            let ev = self.qualifying(t, path);
            if ev.len() < self.spec.min_step_evidence.max(1) {
                return None;
            }
            cited.extend(ev);
        }
        Some(cited)
    }

    #[allow(clippy::too_many_arguments)]
    fn propose(
        &self,
        p: &mut dyn Proposer,
        tree: &XmlTree,
        path: &DeweyPath,
        site: Site,
        round: usize,
        unit: &Unit,
        step: Option<u32>,
        stats: &mut RunStats,
    ) -> Result<String, ProtocolError> {
        let grammar = &self.fragments[&site];
        let mut reason = String::new();
        for attempt in 0..self.spec.retry_budget {
            stats.proposals += 1;
            let req = ProposalRequest {
                tree,
                path,
                grammar,
                site,
                round,
                branch: unit.key.as_deref(),
                step,
                attempt,
            };
            match p.propose(&req) {
                Ok(text) if grammar.accepts(&text) => return Ok(text),
                Ok(text) => {
                    reason = match grammar.first_dead_offset(&text) {
                        Some(o) => format!("fragment leaves the grammar at offset {o}"),
                        None => "fragment is incomplete".into(),
                    };
                }
                Err(e) => reason = e.to_string(),
            }
            stats.rejected_proposals += 1;
        }
        Err(ProtocolError::ProposerExhausted {
            path: path.clone(),
            site: site.name(),
            reason,
        })
    }

    fn unit_round(
        &self,
        unit: &mut Unit,
        p: &mut dyn Proposer,
        base: &XmlTree,
        round: usize,
        may_answer: bool,
    ) -> Result<RoundOut, ProtocolError> {
        let mut t = base.clone();
        let mut stats = RunStats::default();
        let mut passes = Vec::with_capacity(4);
        let plan = unit.root.child(1);

        if !t.contains(&plan) {
            let text = self.propose(p, &t, &plan, Site::Plan, round, unit, None, &mut stats)?;
            let mut node = parse_fragment(&text)?;
            for (i, step) in node.children.iter_mut().enumerate() {
                step.label
                    .attrs
                    .insert("index".into(), ContentSpec::literal((i + 1).to_string()));
            }
            t.append_child(&unit.root, node);
        } else {
            for (index, (rev, path)) in self.latest_steps(&t, &plan) {
                let annotated = t.children(&path).iter().any(|c| {
                    t.get(c)
                        .is_some_and(|l| l.tag == "evidence" || l.tag == "counterexample")
                });
                if !annotated
                    || self.qualifying(&t, &path).len() >= self.spec.min_step_evidence.max(1)
                {
                    continue;
                }
                let target = plan.child(t.child_count(&plan) + 1);
                let text = self.propose(
                    p,
                    &t,
                    &target,
                    Site::Revise,
                    round,
                    unit,
                    Some(index),
                    &mut stats,
                )?;
                let mut node = parse_fragment(&text)?;
                node.label
                    .attrs
                    .insert("index".into(), ContentSpec::literal(index.to_string()));
                node.label.attrs.insert(
                    "revision".into(),
                    ContentSpec::literal((rev + 1).to_string()),
                );
                t.append_child(&plan, node);
            }
        }
        passes.push(t.clone());

        let (mut checked, mut rejected) = (0, 0);
        for step in t.children(&plan) {
            let Some(label) = t.get(&step) else { continue };
            let annotated = t.children(&step).iter().any(|c| {
                t.get(c)
                    .is_some_and(|l| l.tag == "evidence" || l.tag == "counterexample")
            });
            if annotated {
                continue;
            }
            let (index, revision) = step_coords(label);
            let outcome = self.verifier.verify(&VerifyRequest {
                tree: &t,
                path: &step,
                branch: unit.key.as_deref(),
                index,
                revision,
                round,
                text: label.content.as_literal().unwrap_or(""),
            });
            checked += 1;
            let node = match outcome {
                VerifierOutcome::Evidence { reference, conf } => {
                    evidence_node(&reference, conf.clamp(0.0, 1.0))
                }
                VerifierOutcome::Counterexample(msg) => {
                    rejected += 1;
                    literal_node("counterexample", &msg)
                }
            };
            t.append_child(&step, node);
        }
        stats.counterexamples += rejected;
        if checked > 0 && rejected == checked {
            if self.spec.fail_fast {
                return Err(ProtocolError::VerifierRejectedAll {
                    round,
                    branch: unit.key.clone(),
                });
            }
            stats.warnings.push(format!(
                "verifier rejected every step in round {round}{}",
                unit.key
                    .as_ref()
                    .map(|k| format!(" of {k}"))
                    .unwrap_or_default()
            ));
        }
        passes.push(t.clone());

        let mut outbox = None;
        if unit.tool && !has_child_tag(&t, &unit.root, "toolcall") {
            let target = unit.root.child(t.child_count(&unit.root) + 1);
            let text = self.propose(
                p,
                &t,
                &target,
                Site::ToolCall,
                round,
                unit,
                None,
                &mut stats,
            )?;
            let node = parse_fragment(&text)?;
            let call = invocation(&node);
            let call_path = t.append_child(&unit.root, node).expect("unit root exists");
            let result = match self.tools {
                Some(reg) => reg.invoke(&call),
                None => Err("no tools are registered".into()),
            };
            let output = result.and_then(|markup| {
                let mut wrapper = NodeLabel::new("agent_output").with_text("");
                wrapper
                    .attrs
                    .insert("source".into(), ContentSpec::literal(call.function.clone()));
                let inner = parse_document(&format!("<agent_output>{markup}</agent_output>"))
                    .map_err(|e| format!("tool output is not well-formed: {e}"))?;
                let mut node = inner.subtree(&DeweyPath::root()).expect("root exists");
                node.label = wrapper;
                Ok(node)
            });
            match output {
                Ok(node) => {
                    t.append_child(&unit.root, node);
                }
                Err(msg) => {
                    t.append_child(
                        &call_path,
                        literal_node("counterexample", &format!("tool failure: {msg}")),
                    );
                    unit.tool_failure = Some(msg);
                }
            }
        }
        if let (Some(channel), false) = (&unit.channel, unit.posted) {
            let text = self.propose(p, &t, channel, Site::Post, round, unit, None, &mut stats)?;
            let node = parse_fragment(&text)?;
            let to = node.label.attr_text("to").unwrap_or_default().to_string();
            let body = node
                .label
                .content
                .as_literal()
                .unwrap_or_default()
                .to_string();
            outbox = Some((to, body));
            unit.posted = true;
        }
        passes.push(t.clone());

        let tool_ready = !unit.tool || has_child_tag(&t, &unit.root, "agent_output");
        if !unit.answered && may_answer && tool_ready && unit.tool_failure.is_none() {
            if let Some(cited) = self.gate(&t, &plan) {
                let target = unit.root.child(t.child_count(&unit.root) + 1);
                let text =
                    self.propose(p, &t, &target, Site::Answer, round, unit, None, &mut stats)?;
                let mut node = literal_node("answer", &text);
                for label in cited.into_iter().chain(unit.extra_evidence.iter().cloned()) {
                    node = node.child(Node::new(label));
                }
                t.append_child(&unit.root, node);
                unit.answered = true;
            }
        }
        passes.push(t);
        Ok(RoundOut {
            passes,
            outbox,
            stats,
        })
    }
}

fn invocation(node: &Node) -> ToolInvocation {
    let function = node.children.first();
    ToolInvocation {
        function: function
            .and_then(|f| f.label.attr_text("name"))
            .unwrap_or_default()
            .to_string(),
        args: function
            .map(|f| {
                f.children
                    .iter()
                    .map(|a| {
                        (
                            a.label.attr_text("name").unwrap_or_default().to_string(),
                            a.label.content.as_literal().unwrap_or_default().to_string(),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default(),
    }
}

fn merge_stats(into: &mut RunStats, from: RunStats) {
    into.proposals += from.proposals;
    into.rejected_proposals += from.rejected_proposals;
    into.counterexamples += from.counterexamples;
    into.warnings.extend(from.warnings);
}

struct Driver<'a> {
    ctx: Ctx<'a>,
    tree: XmlTree,
    snapshots: Vec<XmlTree>,
    stats: RunStats,
    bus: Option<ChannelBus>,
}

impl<'a> Driver<'a> {
    fn new(
        spec: &'a ProtocolSpec,
        verifier: &'a dyn Verifier,
        tools: Option<&'a ToolRegistry>,
        skeleton: XmlTree,
    ) -> Result<Self, RunFailure> {
        let fail = |error| RunFailure {
            error,
            snapshots: Vec::new(),
            stats: RunStats::default(),
        };
        spec.validate().map_err(fail)?;
        let mut fragments = BTreeMap::new();
        for site in Site::ALL {
            let g = spec
                .grammar
                .with_start(site.fragment_rule())
                .map_err(|e| fail(ProtocolError::Spec(e.to_string())))?;
            fragments.insert(site, g);
        }
        Ok(Driver {
            ctx: Ctx {
                spec,
                fragments,
                verifier,
                tools,
            },
            tree: skeleton.clone(),
            snapshots: vec![skeleton],
            stats: RunStats::default(),
            bus: None,
        })
    }

    fn snap(&mut self, t: XmlTree) {
        if self.snapshots.last() != Some(&t) {
            self.snapshots.push(t.clone());
        }
        self.tree = t;
    }

    fn fail(self, error: ProtocolError) -> RunFailure {
        RunFailure {
            error,
            snapshots: self.snapshots,
            stats: self.stats,
        }
    }

    fn tag_error(&self, unit: &Unit, e: ProtocolError) -> ProtocolError {
        match (&unit.key, self.ctx.spec.kind) {
            (Some(k), ProtocolKind::MultiBranch | ProtocolKind::ChannelExchange) => {
                ProtocolError::InBranch {
                    branch: k.clone(),
                    source: Box::new(e),
                }
            }
            _ => e,
        }
    }

    /// Runs rounds until every unit has answered or given up, or the budget
    /// is spent. Units of one round see the same starting tree and their
    /// passes are joined, so the order they run in does not matter.
    fn run_units(
        &mut self,
        units: &mut [Unit],
        proposers: &mut [&mut dyn Proposer],
    ) -> Result<(), ProtocolError> {
        for round in 1..=self.ctx.spec.budget {
            if units.iter().all(Unit::settled) {
                break;
            }
            self.stats.rounds += 1;
            let mut may_answer = vec![true; units.len()];
            for (i, u) in units.iter().enumerate() {
                if let (Some(bus), Some(key), Some(_)) = (self.bus.as_mut(), &u.key, &u.channel) {
                    if round >= 2 {
                        bus.consume(key);
                    }
                    may_answer[i] = round >= 2 && bus.pending(key).is_empty();
                }
            }
            let base = self.tree.clone();
            let ctx = &self.ctx;
            let work: Vec<(usize, &mut Unit, &mut &mut dyn Proposer)> = units
                .iter_mut()
                .zip(proposers.iter_mut())
                .enumerate()
                .filter(|(_, (u, _))| !u.settled())
                .map(|(i, (u, p))| (i, u, p))
                .collect();
            let results: Vec<(usize, Result<RoundOut, ProtocolError>)> = if ctx.spec.concurrent
                && work.len() > 1
            {
                thread::scope(|s| {
                    let handles: Vec<_> = work
                        .into_iter()
                        .map(|(i, u, p)| {
                            let base = &base;
                            let may = may_answer[i];
                            s.spawn(move || (i, ctx.unit_round(u, &mut **p, base, round, may)))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("branch worker panicked"))
                        .collect()
                })
            } else {
                work.into_iter()
                    .map(|(i, u, p)| (i, ctx.unit_round(u, &mut **p, &base, round, may_answer[i])))
                    .collect()
            };
            let mut outs = Vec::new();
            for (i, r) in results {
                match r {
                    Ok(o) => outs.push((i, o)),
                    Err(e) => return Err(self.tag_error(&units[i], e)),
                }
            }
            for k in 0..4 {
                let mut trees = vec![base.clone()];
                trees.extend(outs.iter().map(|(_, o)| o.passes[k].clone()));
                let merged = join(&trees);
                if merged.is_top() {
                    return Err(ProtocolError::Spec(
                        "units wrote to overlapping positions".into(),
                    ));
                }
                self.snap(merged);
            }
            let mut posted = self.tree.clone();
            for (i, out) in outs {
                merge_stats(&mut self.stats, out.stats);
                let (Some((to, body)), Some(bus), Some(channel)) =
                    (out.outbox, self.bus.as_mut(), &units[i].channel)
                else {
                    continue;
                };
                let from = units[i].key.clone().unwrap_or_default();
                let msg = bus.post(&from, &to, &body)?;
                let mut label = NodeLabel::new("message").with_text(msg.body.clone());
                for (k, v) in [("id", &msg.id), ("from", &msg.from), ("to", &msg.to)] {
                    label
                        .attrs
                        .insert(k.into(), ContentSpec::literal(v.clone()));
                }
                posted.append_child(channel, Node::new(label));
            }
            self.snap(posted);
        }
        Ok(())
    }

    fn finish(mut self, status: RunStatus) -> Result<ProtocolRun, RunFailure> {
        let text = match serialize(&self.tree) {
            Ok(s) => s,
            Err(e) => return Err(self.fail(ProtocolError::Fragment(e.to_string()))),
        };
        let g = &self.ctx.spec.grammar;
        if !g.accepts(&text) {
            let offset = g.first_dead_offset(&text);
            return Err(self.fail(ProtocolError::GrammarViolation { offset }));
        }
        let mut verdicts = Vec::new();
        for inv in &self.ctx.spec.invariants {
            let r = check(inv, &self.tree);
            if let Some(path) = r.violation.clone() {
                let name = inv.name.clone();
                return Err(self.fail(ProtocolError::InvariantViolated { name, path }));
            }
            verdicts.push((inv.name.clone(), r));
        }
        let answered = status == RunStatus::Answered;
        let report = match trace_report(
            std::mem::take(&mut self.snapshots),
            answered,
            &self.ctx.spec.metric,
        ) {
            Ok(r) => r,
            Err(e) => return Err(self.fail(ProtocolError::Spec(e.to_string()))),
        };
        Ok(ProtocolRun {
            final_tree: self.tree,
            report,
            status,
            stats: self.stats,
            bus: self.bus,
            verdicts,
        })
    }
}

/// `<prompt>` with optional task and guidelines; returns the tree and the
/// index the next child of the root will get.
fn prompt_skeleton(spec: &ProtocolSpec) -> (Node, u32) {
    let mut root = literal_node("prompt", "");
    if let Some(task) = &spec.task {
        root = root.child(literal_node("task", task));
    }
    if let Some(g) = &spec.guidelines {
        root = root.child(literal_node("guidelines", g));
    }
    let next = root.children.len() as u32 + 1;
    (root, next)
}

fn turn() -> Node {
    Node::new(
        NodeLabel::new("turn")
            .with_attr("role", ContentSpec::literal("assistant"))
            .with_text(""),
    )
}

fn expect_kind(spec: &ProtocolSpec, kind: ProtocolKind) -> Result<(), RunFailure> {
    if spec.kind == kind {
        return Ok(());
    }
    Err(RunFailure {
        error: ProtocolError::Spec(format!("expected a {kind:?} spec, got {:?}", spec.kind)),
        snapshots: Vec::new(),
        stats: RunStats::default(),
    })
}

fn single_turn(
    spec: &ProtocolSpec,
    p: &mut dyn Proposer,
    v: &dyn Verifier,
    tools: Option<&ToolRegistry>,
) -> Result<ProtocolRun, RunFailure> {
    let (root, next) = prompt_skeleton(spec);
    let root = root.child(literal_node("dialog", "").child(turn()));
    let mut d = Driver::new(spec, v, tools, XmlTree::from_root(root))?;
    let mut unit = Unit::new(None, DeweyPath::new(vec![next, 1]));
    unit.tool = tools.is_some();
    let mut units = [unit];
    if let Err(e) = d.run_units(&mut units, &mut [p]) {
        return Err(d.fail(e));
    }
    let [unit] = units;
    match (unit.answered, unit.tool_failure) {
        (true, _) => d.finish(RunStatus::Answered),
        (false, Some(msg)) => d.finish(RunStatus::ToolFailed(msg)),
        (false, None) => Err(d.fail(ProtocolError::RoundBudgetExceeded {
            budget: spec.budget,
        })),
    }
}

/// Plan, verify and answer inside a single assistant turn.
///
/// Each round asks for a plan (or revised steps for rejected ones), has
/// every new step verified, and requests the answer once every step's
/// latest revision carries qualifying evidence.
pub fn run_plan_verify_answer(
    spec: &ProtocolSpec,
    p: &mut dyn Proposer,
    v: &dyn Verifier,
) -> Result<ProtocolRun, RunFailure> {
    expect_kind(spec, ProtocolKind::PlanVerifyAnswer)?;
    single_turn(spec, p, v, None)
}

/// Like [`run_plan_verify_answer`], with a `<toolcall>` requested after
/// verification. The stub's output lands in `<agent_output>`; a failure is
/// recorded as a counterexample under the call and no answer is emitted.
pub fn run_tool_call(
    spec: &ProtocolSpec,
    p: &mut dyn Proposer,
    v: &dyn Verifier,
    tools: &ToolRegistry,
) -> Result<ProtocolRun, RunFailure> {
    expect_kind(spec, ProtocolKind::ToolCall)?;
    single_turn(spec, p, v, Some(tools))
}

fn branch_run(
    spec: &ProtocolSpec,
    branch_proposers: &mut [Box<dyn Proposer>],
    coordinator: &mut dyn Proposer,
    v: &dyn Verifier,
    channel: bool,
) -> Result<ProtocolRun, RunFailure> {
    if branch_proposers.len() != spec.branches.len() {
        return Err(RunFailure {
            error: ProtocolError::Spec(format!(
                "{} proposers for {} branches",
                branch_proposers.len(),
                spec.branches.len()
            )),
            snapshots: Vec::new(),
            stats: RunStats::default(),
        });
    }
    let (mut root, mut next) = prompt_skeleton(spec);
    let channel_path = channel.then(|| {
        root.children.push(Node::new(
            NodeLabel::new("channel")
                .with_attr("name", ContentSpec::literal(spec.channel.clone()))
                .with_text(""),
        ));
        next += 1;
        DeweyPath::new(vec![next - 1])
    });
    let mut units = Vec::new();
    for name in &spec.branches {
        root.children.push(
            Node::new(
                NodeLabel::new("branch")
                    .with_attr("name", ContentSpec::literal(name.clone()))
                    .with_text(""),
            )
            .child(turn()),
        );
        let mut u = Unit::new(Some(name.clone()), DeweyPath::new(vec![next, 1]));
        u.channel = channel_path.clone();
        units.push(u);
        next += 1;
    }
    let mut d = Driver::new(spec, v, None, XmlTree::from_root(root))?;
    if channel {
        d.bus = Some(ChannelBus::new(spec.channel.clone(), &spec.branches));
    }
    let mut refs: Vec<&mut dyn Proposer> = branch_proposers
        .iter_mut()
        .map(|b| &mut **b as &mut dyn Proposer)
        .collect();
    if let Err(e) = d.run_units(&mut units, &mut refs) {
        return Err(d.fail(e));
    }
    if let Some(bus) = &d.bus {
        if let Some(b) = spec.branches.iter().find(|b| !bus.pending(b).is_empty()) {
            let b = b.clone();
            return Err(d.fail(ProtocolError::UnconsumedMessages(b)));
        }
    }
    let failed: Vec<String> = units
        .iter()
        .filter(|u| !u.answered)
        .filter_map(|u| u.key.clone())
        .collect();
    if !failed.is_empty() {
        return Err(d.fail(ProtocolError::BranchFailed { branches: failed }));
    }

    let tag = if channel { "join" } else { "compare" };
    let mut extra = Vec::new();
    for u in &units {
        let answer = d
            .tree
            .children(&u.root)
            .into_iter()
            .find(|c| d.tree.get(c).is_some_and(|l| l.tag == "answer"))
            .expect("answered units have an answer");
        for c in d.tree.children(&answer) {
            extra.extend(d.tree.get(&c).filter(|l| l.tag == "evidence").cloned());
        }
    }
    let mut t = d.tree.clone();
    let root_path = t
        .append_child(&DeweyPath::root(), literal_node(tag, ""))
        .expect("root exists");
    d.snap(t);
    let mut coord = Unit::new(Some(tag.to_string()), root_path);
    coord.extra_evidence = extra;
    let mut coord_units = [coord];
    if let Err(e) = d.run_units(&mut coord_units, &mut [coordinator]) {
        return Err(d.fail(e));
    }
    if !coord_units[0].answered {
        let e = ProtocolError::InBranch {
            branch: tag.to_string(),
            source: Box::new(ProtocolError::RoundBudgetExceeded {
                budget: spec.budget,
            }),
        };
        return Err(d.fail(e));
    }
    d.finish(RunStatus::Answered)
}

/// Independent branches, each with its own plan, evidence and answer, then
/// a `<compare>` node whose answer cites every branch's evidence.
pub fn run_multibranch(
    spec: &ProtocolSpec,
    branch_proposers: &mut [Box<dyn Proposer>],
    coordinator: &mut dyn Proposer,
    v: &dyn Verifier,
) -> Result<ProtocolRun, RunFailure> {
    expect_kind(spec, ProtocolKind::MultiBranch)?;
    branch_run(spec, branch_proposers, coordinator, v, false)
}

/// Branches that post one message each in their first round, read what was
/// addressed to them at the start of the next, and only then answer. A
/// `<join>` node closes the run.
pub fn run_channel_exchange(
    spec: &ProtocolSpec,
    branch_proposers: &mut [Box<dyn Proposer>],
    coordinator: &mut dyn Proposer,
    v: &dyn Verifier,
) -> Result<ProtocolRun, RunFailure> {
    expect_kind(spec, ProtocolKind::ChannelExchange)?;
    branch_run(spec, branch_proposers, coordinator, v, true)
}
