//! Random certified transformers over a bounded tag table, and post-fixed
//! point sampling for the least fixed point check.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmlprompt::engine::{
    kleene_iterate, Action, Anchor, Guard, Resolver, RewriteRule, Transformer,
};
use xmlprompt::tree::{join, refines, ContentSpec, DeweyPath, Node, NodeLabel, XmlTree};

use super::trees::oracle_refines;

const MAX_DEPTH: usize = 3;
const MAX_INDEX: u32 = 3;
const ATTRS: [&str; 2] = ["p", "q"];

/// Every position has one possible tag, so rules never disagree on tags.
fn tag(depth: usize, index: u32) -> String {
    format!("t{depth}_{index}")
}

fn fill(tag: &str) -> ContentSpec {
    ContentSpec::literal(format!("v_{tag}"))
}

fn attr_value(tag: &str, name: &str) -> ContentSpec {
    ContentSpec::literal(format!("{tag}.{name}"))
}

fn random_label(rng: &mut ChaCha8Rng, tag: &str) -> NodeLabel {
    let mut l = NodeLabel::new(tag);
    if rng.gen_bool(0.4) {
        l = l.with_content(fill(tag));
    }
    for a in ATTRS {
        if rng.gen_bool(0.25) {
            let v = if rng.gen_bool(0.5) {
                attr_value(tag, a)
            } else {
                ContentSpec::Hole
            };
            l = l.with_attr(a, v);
        }
    }
    l
}

/// A tree that follows the tag table, with random contents and attributes.
fn consistent_node(rng: &mut ChaCha8Rng, depth: usize, index: u32, p_child: f64) -> Node {
    let mut n = Node::new(random_label(rng, &tag(depth, index)));
    if depth < MAX_DEPTH {
        for i in 1..=MAX_INDEX {
            if !rng.gen_bool(p_child) {
                break;
            }
            n.children.push(consistent_node(rng, depth + 1, i, p_child));
        }
    }
    n
}

pub fn consistent_tree(rng: &mut ChaCha8Rng, p_child: f64) -> XmlTree {
    XmlTree::from_root(consistent_node(rng, 0, 1, p_child))
}

fn random_position(rng: &mut ChaCha8Rng) -> (usize, u32) {
    let d = rng.gen_range(0..=MAX_DEPTH);
    let i = if d == 0 {
        1
    } else {
        rng.gen_range(1..=MAX_INDEX)
    };
    (d, i)
}

/// An upward-closed side condition.
fn extra_guard(rng: &mut ChaCha8Rng, depth: usize) -> Guard {
    match rng.gen_range(0..9) {
        0 => Guard::MaxDepth(rng.gen_range(0..=MAX_DEPTH)),
        1 => Guard::MaxIndex(rng.gen_range(1..=MAX_INDEX)),
        2 if depth < MAX_DEPTH => Guard::HasChild(tag(depth + 1, 1)),
        3 => Guard::HasAttr((*ATTRS.choose(rng).unwrap()).into()),
        4 => Guard::LiteralAt(DeweyPath::root()),
        5 => Guard::ParentLiteral,
        6 => Guard::Or(vec![Guard::IsRoot, Guard::ParentLiteral]),
        _ => Guard::Always,
    }
}

fn random_rule(rng: &mut ChaCha8Rng, k: usize) -> RewriteRule {
    let (d, i) = random_position(rng);
    let here = tag(d, i);
    let guard = Guard::Tag(here.clone()).and(extra_guard(rng, d));
    let name = format!("r{k}");
    match rng.gen_range(0..5) {
        0 if d < MAX_DEPTH => {
            let j = rng.gen_range(1..=MAX_INDEX);
            let template = consistent_node(rng, d + 1, j, 0.3);
            RewriteRule::new(
                name,
                guard,
                Action::ExpandChildren {
                    anchor: Anchor::Child(j),
                    template,
                },
            )
        }
        1 if d > 0 && i < MAX_INDEX => {
            let template = consistent_node(rng, d, i + 1, 0.3);
            RewriteRule::new(
                name,
                guard,
                Action::ExpandChildren {
                    anchor: Anchor::NextSibling,
                    template,
                },
            )
        }
        2 => {
            let a = *ATTRS.choose(rng).unwrap();
            RewriteRule::new(
                name,
                guard,
                Action::Annotate {
                    name: a.into(),
                    value: attr_value(&here, a),
                },
            )
        }
        _ => RewriteRule::new(
            name,
            guard,
            Action::FillHole(Resolver::Constant(fill(&here))),
        ),
    }
}

/// A seeded transformer of 3 to 8 rules, always with a root seed rule.
pub fn random_transformer(rng: &mut ChaCha8Rng) -> Transformer {
    let mut rules = vec![RewriteRule::new(
        "seed",
        Guard::Always,
        Action::Seed(consistent_node(rng, 0, 1, 0.4)),
    )];
    for k in 0..rng.gen_range(2..=7) {
        rules.push(random_rule(rng, k));
    }
    rules.shuffle(rng);
    Transformer::new(rules)
}

pub struct KleeneOutcome {
    pub steps: usize,
    pub post_fixed: usize,
    pub violations: Vec<String>,
}

/// Runs Kleene iteration from bottom and compares the result with sampled
/// post-fixed points.
pub fn check_kleene(seed: u64, wanted: usize) -> KleeneOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = random_transformer(&mut rng);
    let mut out = KleeneOutcome {
        steps: 0,
        post_fixed: 0,
        violations: Vec::new(),
    };
    let cert = t.certificate();
    if !(cert.inflationary && cert.monotone) {
        out.violations
            .push(format!("not certified: {:?}", cert.reasons));
        return out;
    }
    let report = match kleene_iterate(&t, XmlTree::bottom(), 100) {
        Ok(r) => r,
        Err(e) => {
            out.violations
                .push(format!("kleene from bottom failed: {e}"));
            return out;
        }
    };
    out.steps = report.steps;
    let lfp = report.fixed_point.expect("fixed point on success");
    if t.apply(&lfp).as_ref() != Ok(&lfp) {
        out.violations.push("result is not a fixed point".into());
    }
    for w in report.iterates.windows(2) {
        if !refines(&w[0], &w[1]) {
            out.violations.push("Kleene chain is not ascending".into());
        }
    }
    for _ in 0..wanted * 25 {
        if out.post_fixed >= wanted {
            break;
        }
        let candidate = match rng.gen_range(0..3) {
            0 => consistent_tree(&mut rng, 0.5),
            1 => join(&[lfp.clone(), consistent_tree(&mut rng, 0.4)]),
            _ => {
                let start = consistent_tree(&mut rng, 0.35);
                match kleene_iterate(&t, start, 100) {
                    Ok(r) => r.fixed_point.expect("fixed point on success"),
                    Err(_) => continue,
                }
            }
        };
        if candidate.is_top() {
            continue;
        }
        let Ok(image) = t.apply(&candidate) else {
            continue;
        };
        if !oracle_refines(&image, &candidate) {
            continue;
        }
        out.post_fixed += 1;
        if !(refines(&lfp, &candidate) && oracle_refines(&lfp, &candidate)) {
            out.violations.push(format!(
                "least fixed point {lfp:?} is not below post-fixed {candidate:?}"
            ));
        }
    }
    if out.post_fixed < wanted {
        out.violations
            .push(format!("only {} post-fixed points sampled", out.post_fixed));
    }
    out
}
