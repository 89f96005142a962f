//! Random formulas over small trees and a fixpoint oracle that enumerates
//! every node subset instead of iterating.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use xmlprompt::invariant::{Atom, Cmp, Formula, Value};
use xmlprompt::tree::{ContentSpec, DeweyPath, Node, NodeLabel, XmlTree};

/// A random tree with at most `max_nodes` nodes, built by attaching each new
/// node as the next child of a random existing one.
pub fn small_tree(rng: &mut ChaCha8Rng, max_nodes: usize) -> XmlTree {
    let n = rng.gen_range(1..=max_nodes);
    let mut t = XmlTree::from_root(Node::new(small_label(rng)));
    for _ in 1..n {
        let paths: Vec<DeweyPath> = t.paths().cloned().collect();
        let parent = paths.choose(rng).unwrap().clone();
        t.append_child(&parent, Node::new(small_label(rng)));
    }
    t
}

fn small_label(rng: &mut ChaCha8Rng) -> NodeLabel {
    let mut l = NodeLabel::new(*["a", "b", "c"].choose(rng).unwrap()).with_text("");
    if rng.gen_bool(0.5) {
        l = l.with_attr(
            "conf",
            ContentSpec::literal(*["0.30", "0.80", "0.95"].choose(rng).unwrap()),
        );
    }
    if rng.gen_bool(0.3) {
        l = l.with_attr(
            "kind",
            ContentSpec::literal(*["x", "y"].choose(rng).unwrap()),
        );
    }
    l
}

fn random_atom(rng: &mut ChaCha8Rng) -> Atom {
    match rng.gen_range(0..3) {
        0 => Atom::Tag((*["a", "b", "c"].choose(rng).unwrap()).into()),
        1 => Atom::Attr {
            name: "conf".into(),
            cmp: *[Cmp::Ge, Cmp::Le, Cmp::Eq].choose(rng).unwrap(),
            value: Value::Num(*[0.3, 0.5, 0.8, 0.95].choose(rng).unwrap()),
        },
        _ => Atom::Attr {
            name: "kind".into(),
            cmp: Cmp::Eq,
            value: Value::Str((*["x", "y"].choose(rng).unwrap()).into()),
        },
    }
}

/// A random formula of nesting depth at most `depth`, in positive normal
/// form so every bound variable occurs positively.
pub fn random_formula(rng: &mut ChaCha8Rng, depth: usize) -> Formula {
    gen(rng, depth, &mut Vec::new(), &mut 0)
}

fn gen(rng: &mut ChaCha8Rng, depth: usize, vars: &mut Vec<String>, fresh: &mut usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.2) {
        return match rng.gen_range(0..8) {
            0 => Formula::True,
            1 => Formula::False,
            2 | 3 if !vars.is_empty() => Formula::Var(vars.choose(rng).unwrap().clone()),
            4 => Formula::NegAtom(random_atom(rng)),
            _ => Formula::Atom(random_atom(rng)),
        };
    }
    // At most two nested binders keep the subset enumeration affordable.
    let op = rng.gen_range(0..if vars.len() < 2 { 9 } else { 7 });
    if op >= 7 {
        let name = format!("X{fresh}");
        *fresh += 1;
        vars.push(name.clone());
        let body = Box::new(gen(rng, depth - 1, vars, fresh));
        vars.pop();
        return if op == 7 {
            Formula::Mu(name, body)
        } else {
            Formula::Nu(name, body)
        };
    }
    let mut sub = |rng: &mut ChaCha8Rng| Box::new(gen(rng, depth - 1, vars, fresh));
    match op {
        0 => Formula::And(sub(rng), sub(rng)),
        1 => Formula::Or(sub(rng), sub(rng)),
        2 => Formula::SomeChild(sub(rng)),
        3 => Formula::EveryChild(sub(rng)),
        4 => Formula::SomeDesc(sub(rng)),
        5 => Formula::EveryDesc(sub(rng)),
        _ => {
            let g = sub(rng);
            Formula::CountChildren(g, rng.gen_range(1..=3))
        }
    }
}

/// Nodes in document order with child and descendant lists.
pub struct Model {
    pub paths: Vec<DeweyPath>,
    labels: Vec<NodeLabel>,
    children: Vec<Vec<usize>>,
    descendants: Vec<Vec<usize>>,
}

impl Model {
    pub fn new(t: &XmlTree) -> Model {
        let paths: Vec<DeweyPath> = t.paths().cloned().collect();
        let labels = paths.iter().map(|p| t.get(p).unwrap().clone()).collect();
        let rel = |pred: &dyn Fn(&DeweyPath, &DeweyPath) -> bool| -> Vec<Vec<usize>> {
            paths
                .iter()
                .map(|p| (0..paths.len()).filter(|&j| pred(p, &paths[j])).collect())
                .collect()
        };
        let children = rel(&|p, q| q.parent().as_ref() == Some(p));
        let descendants = rel(&|p, q| p != q && p.is_prefix_of(q));
        Model {
            paths,
            labels,
            children,
            descendants,
        }
    }

    fn n(&self) -> usize {
        self.paths.len()
    }

    fn all(&self) -> u32 {
        (1u32 << self.n()) - 1
    }
}

fn atom_holds(a: &Atom, l: &NodeLabel) -> bool {
    match a {
        Atom::Tag(t) => l.tag == *t,
        Atom::Attr { name, cmp, value } => {
            let Some(ContentSpec::Literal(s)) = l.attrs.get(name) else {
                return false;
            };
            match value {
                Value::Str(v) => *cmp == Cmp::Eq && s == v,
                Value::Num(v) => s.parse::<f64>().is_ok_and(|x| match cmp {
                    Cmp::Eq => x == *v,
                    Cmp::Ge => x >= *v,
                    Cmp::Le => x <= *v,
                }),
            }
        }
    }
}

/// Node set of `f` as a bitmask. Fixpoints are the intersection of all
/// pre-fixed sets (least) or the union of all post-fixed sets (greatest).
pub fn oracle_eval(f: &Formula, m: &Model, env: &mut Vec<(String, u32)>) -> u32 {
    let bits = |pred: &dyn Fn(usize) -> bool| {
        (0..m.n())
            .filter(|&i| pred(i))
            .fold(0u32, |acc, i| acc | 1 << i)
    };
    match f {
        Formula::True => m.all(),
        Formula::False => 0,
        Formula::Atom(a) => bits(&|i| atom_holds(a, &m.labels[i])),
        Formula::NegAtom(a) => bits(&|i| !atom_holds(a, &m.labels[i])),
        Formula::And(a, b) => oracle_eval(a, m, env) & oracle_eval(b, m, env),
        Formula::Or(a, b) => oracle_eval(a, m, env) | oracle_eval(b, m, env),
        Formula::SomeChild(g) => {
            let s = oracle_eval(g, m, env);
            bits(&|i| m.children[i].iter().any(|&c| s >> c & 1 == 1))
        }
        Formula::EveryChild(g) => {
            let s = oracle_eval(g, m, env);
            bits(&|i| m.children[i].iter().all(|&c| s >> c & 1 == 1))
        }
        Formula::CountChildren(g, k) => {
            let s = oracle_eval(g, m, env);
            bits(&|i| m.children[i].iter().filter(|&&c| s >> c & 1 == 1).count() >= *k)
        }
        Formula::SomeDesc(g) => {
            let s = oracle_eval(g, m, env);
            bits(&|i| m.descendants[i].iter().any(|&c| s >> c & 1 == 1))
        }
        Formula::EveryDesc(g) => {
            let s = oracle_eval(g, m, env);
            bits(&|i| m.descendants[i].iter().all(|&c| s >> c & 1 == 1))
        }
        Formula::Var(v) => env.iter().rev().find(|(n, _)| n == v).expect("bound").1,
        Formula::Mu(v, body) | Formula::Nu(v, body) => {
            let least = matches!(f, Formula::Mu(..));
            let mut acc = if least { m.all() } else { 0 };
            for s in 0..=m.all() {
                env.push((v.clone(), s));
                let fs = oracle_eval(body, m, env);
                env.pop();
                if least && fs & !s == 0 {
                    acc &= s;
                } else if !least && s & !fs == 0 {
                    acc |= s;
                }
            }
            acc
        }
    }
}

pub fn oracle_paths(f: &Formula, t: &XmlTree) -> BTreeSet<DeweyPath> {
    let m = Model::new(t);
    let s = oracle_eval(f, &m, &mut Vec::new());
    (0..m.n())
        .filter(|&i| s >> i & 1 == 1)
        .map(|i| m.paths[i].clone())
        .collect()
}
