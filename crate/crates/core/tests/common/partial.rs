//! Document prefixes and the bounded refinement enumeration that confirms
//! pruning verdicts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmlprompt::grammar::{compile_ebnf, constrained_sample_filtered, UniformPolicy, Vocabulary};
use xmlprompt::invariant::{check, parse_invariants, pruning_filter, Invariant, Verdict};
use xmlprompt::tree::partial::{parse_prefix, PartialTree};
use xmlprompt::tree::{parse_document, serialize, ContentSpec, Node, NodeLabel, XmlTree};

pub const INVARIANTS: &str = "\
[answer_support]
tag=answer => count_children(tag=evidence & attr conf >= 0.8) >= 2
[steps_checked]
tag=step => some_child(tag=evidence) | some_child(tag=counterexample)
[no_counterexample]
!tag=counterexample
[answers_cite_only]
tag=answer => every_child(tag=evidence)
[strong_everywhere:root]
nu X. (!tag=evidence | attr conf >= 0.8) & every_child(X)
";

pub fn invariants() -> Vec<Invariant> {
    parse_invariants(INVARIANTS).expect("valid invariants")
}

fn evidence(conf: &str) -> Node {
    Node::new(
        NodeLabel::new("evidence")
            .with_attr("conf", ContentSpec::literal(conf))
            .with_text(""),
    )
}

fn element(tag: &str, children: Vec<Node>) -> Node {
    let mut n = Node::new(NodeLabel::new(tag).with_text("t"));
    n.children = children;
    n
}

fn random_note(rng: &mut ChaCha8Rng) -> Node {
    match rng.gen_range(0..3) {
        0 => evidence("0.90"),
        1 => evidence("0.50"),
        _ => element("counterexample", Vec::new()),
    }
}

/// A finished `<task>` document with steps, answers and annotations.
pub fn random_document(rng: &mut ChaCha8Rng) -> XmlTree {
    let mut items = Vec::new();
    for _ in 0..rng.gen_range(0..=4) {
        let item = match rng.gen_range(0..3) {
            0 => element(
                "step",
                (0..rng.gen_range(0..=2))
                    .map(|_| random_note(rng))
                    .collect(),
            ),
            1 => element(
                "answer",
                (0..rng.gen_range(0..=3))
                    .map(|_| random_note(rng))
                    .collect(),
            ),
            _ => random_note(rng),
        };
        items.push(item);
    }
    XmlTree::from_root(element("task", items))
}

/// A random non-empty prefix of a random document, parsed.
pub fn random_partial(rng: &mut ChaCha8Rng) -> (String, PartialTree) {
    loop {
        let text = serialize(&random_document(rng)).expect("concrete tree");
        let cut = rng.gen_range(1..=text.len());
        if !text.is_char_boundary(cut) {
            continue;
        }
        let prefix = text[..cut].to_string();
        if let Ok(p) = parse_prefix(&prefix) {
            if !p.tree.is_empty() {
                return (prefix, p);
            }
        }
    }
}

/// Subtrees that completions may append under an open element.
fn pool() -> Vec<Node> {
    vec![
        evidence("0.90"),
        evidence("0.50"),
        element("counterexample", Vec::new()),
        element("step", vec![evidence("0.90")]),
        element("answer", vec![evidence("0.90"), evidence("0.90")]),
    ]
}

/// Every completion that appends at most `per_node` pool subtrees under each
/// open element and then closes it.
pub fn completions(p: &PartialTree, per_node: usize) -> Vec<XmlTree> {
    let pool = pool();
    let mut seqs: Vec<Vec<usize>> = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..per_node {
        let mut next = Vec::new();
        for s in &frontier {
            for i in 0..pool.len() {
                let mut s2: Vec<usize> = s.clone();
                s2.push(i);
                next.push(s2);
            }
        }
        seqs.extend(next.iter().cloned());
        frontier = next;
    }
    let mut out = vec![p.tree.clone()];
    for open in p.open.iter().rev() {
        let mut grown = Vec::with_capacity(out.len() * seqs.len());
        for t in &out {
            for s in &seqs {
                let mut t2 = t.clone();
                for &i in s {
                    t2.append_child(open, pool[i].clone());
                }
                grown.push(t2);
            }
        }
        out = grown;
    }
    out
}

#[derive(Default, Debug)]
pub struct PruneStats {
    pub instances: usize,
    pub pruned: usize,
    pub kept: usize,
    pub completions_checked: usize,
    pub filtered_runs: usize,
    pub filtered_complete: usize,
    pub unfiltered_violations: usize,
    pub failures: Vec<String>,
}

/// Checks verdicts on `n` random prefixes against enumerated completions.
pub fn check_pruning(seed: u64, n: usize, stats: &mut PruneStats) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let invs = invariants();
    for k in 0..n {
        let inv = &invs[k % invs.len()];
        let filter = pruning_filter(inv).expect("safety-shaped");
        let (prefix, partial) = random_partial(&mut rng);
        stats.instances += 1;
        let verdict = filter.verdict(&partial);
        if verdict != filter.verdict_text(&prefix) {
            stats
                .failures
                .push(format!("verdict_text disagrees on {prefix:?}"));
        }
        let expect_hold = match verdict {
            Verdict::Prune => false,
            Verdict::Keep => true,
            Verdict::Unknown => continue,
        };
        if expect_hold {
            stats.kept += 1;
        } else {
            stats.pruned += 1;
        }
        for c in completions(&partial, 2) {
            stats.completions_checked += 1;
            if check(inv, &c).holds != expect_hold {
                stats.failures.push(format!(
                    "{}: verdict {verdict:?} on {prefix:?} contradicted by completion {}",
                    inv.name,
                    serialize(&c).unwrap_or_default()
                ));
                break;
            }
        }
    }
}

const TASK_GRAMMAR: &str = r#"grammar Tasks
  Doc  = '<task>' Item* '</task>' ;
  Item = '<step>' Note* '</step>' | '<answer>' Note* '</answer>' | Note ;
  Note = '<evidence conf="0.90"/>' | '<evidence conf="0.50"/>' | '<counterexample></counterexample>' ;
end
"#;

const TASK_TOKENS: [&str; 9] = [
    "<task>",
    "</task>",
    "<step>",
    "</step>",
    "<answer>",
    "</answer>",
    r#"<evidence conf="0.90"/>"#,
    r#"<evidence conf="0.50"/>"#,
    "<counterexample></counterexample>",
];

/// Samples `n` documents with and without the pruning filters. Every
/// completed filtered document must satisfy every invariant.
pub fn check_filtered_runs(n: u64, stats: &mut PruneStats) {
    let g = compile_ebnf(TASK_GRAMMAR).expect("task grammar");
    let vocab = Vocabulary::new(TASK_TOKENS).expect("distinct tokens");
    let invs: Vec<Invariant> = invariants()
        .into_iter()
        .filter(|i| i.name != "no_counterexample")
        .collect();
    let filters: Vec<_> = invs
        .iter()
        .map(|i| pruning_filter(i).expect("safety-shaped"))
        .collect();
    for seed in 0..n {
        stats.filtered_runs += 1;
        let mut keep = |text: &str| {
            filters
                .iter()
                .all(|f| f.verdict_text(text) != Verdict::Prune)
        };
        let mut policy = UniformPolicy::new(seed, 0.2);
        if let Ok(out) = constrained_sample_filtered(&g, &vocab, &mut policy, 40, &mut keep) {
            if out.is_complete() {
                stats.filtered_complete += 1;
                let doc = parse_document(out.text()).expect("grammar output is a document");
                for inv in &invs {
                    if !check(inv, &doc).holds {
                        stats.failures.push(format!(
                            "filtered run {seed} violates {}: {}",
                            inv.name,
                            out.text()
                        ));
                    }
                }
            }
        }
        let mut policy = UniformPolicy::new(seed, 0.2);
        let mut open = |_: &str| true;
        if let Ok(out) = constrained_sample_filtered(&g, &vocab, &mut policy, 40, &mut open) {
            if out.is_complete() {
                let doc = parse_document(out.text()).expect("grammar output is a document");
                if invs.iter().any(|i| !check(i, &doc).holds) {
                    stats.unfiltered_violations += 1;
                }
            }
        }
    }
}

/// A random pool member, for tests that want one completion quickly.
pub fn some_completion(rng: &mut ChaCha8Rng, p: &PartialTree) -> XmlTree {
    let pool = pool();
    let mut t = p.tree.clone();
    for open in p.open.iter().rev() {
        for _ in 0..rng.gen_range(0..=2) {
            t.append_child(open, pool.choose(rng).unwrap().clone());
        }
    }
    t
}
