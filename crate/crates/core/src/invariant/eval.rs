use std::collections::{BTreeSet, HashMap};

use crate::tree::partial::PartialTree;
use crate::tree::{ContentSpec, DeweyPath, NodeLabel, XmlTree};

use super::{Atom, Cmp, Formula, Scope, Value};

/// Three-way answer of a pruning filter on a prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Every completion violates the invariant.
    Prune,
    /// Every completion satisfies it.
    Keep,
    Unknown,
}

/// Document-order view of a tree with child lists and subtree extents.
struct Indexed<'a> {
    paths: Vec<&'a DeweyPath>,
    labels: Vec<&'a NodeLabel>,
    children: Vec<Vec<usize>>,
    /// Descendants of node `i` are exactly `i+1..end[i]`.
    end: Vec<usize>,
    open: Vec<bool>,
}

impl<'a> Indexed<'a> {
    fn new(t: &'a XmlTree, open_paths: &[DeweyPath]) -> Self {
        let paths: Vec<&DeweyPath> = t.paths().collect();
        let labels = paths
            .iter()
            .map(|p| t.get(p).expect("path from the tree"))
            .collect();
        let index: HashMap<&DeweyPath, usize> =
            paths.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let n = paths.len();
        let mut children = vec![Vec::new(); n];
        for (i, p) in paths.iter().enumerate() {
            if let Some(parent) = p.parent() {
                children[index[&parent]].push(i);
            }
        }
        let mut end = vec![0; n];
        for i in (0..n).rev() {
            end[i] = children[i].last().map_or(i + 1, |&c| end[c]);
        }
        let mut open = vec![false; n];
        for p in open_paths {
            if let Some(&i) = index.get(p) {
                open[i] = true;
            }
        }
        Indexed {
            paths,
            labels,
            children,
            end,
            open,
        }
    }

    fn len(&self) -> usize {
        self.paths.len()
    }
}

/// Truth of an atom: `Some(b)` when decided, `None` when an attribute is
/// still a hole or pattern and could go either way.
fn atom_truth(a: &Atom, l: &NodeLabel) -> Option<bool> {
    match a {
        Atom::Tag(t) => Some(&l.tag == t),
        Atom::Attr { name, cmp, value } => match l.attrs.get(name) {
            None => Some(false),
            Some(ContentSpec::Literal(s)) => Some(compare(s, *cmp, value)),
            Some(_) => None,
        },
    }
}

fn compare(actual: &str, cmp: Cmp, value: &Value) -> bool {
    match value {
        Value::Str(v) => cmp == Cmp::Eq && actual == v,
        Value::Num(v) => match actual.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => match cmp {
                Cmp::Eq => x == *v,
                Cmp::Ge => x >= *v,
                Cmp::Le => x <= *v,
            },
            _ => false,
        },
    }
}

/// Definitely-true and possibly-true node sets. On a finished tree the two
/// coincide.
#[derive(Clone, PartialEq)]
struct Sets {
    def: Vec<bool>,
    poss: Vec<bool>,
}

impl Sets {
    fn uniform(n: usize, v: bool) -> Sets {
        Sets {
            def: vec![v; n],
            poss: vec![v; n],
        }
    }
}

fn eval3(f: &Formula, ix: &Indexed, env: &mut Vec<(String, Sets)>) -> Sets {
    let n = ix.len();
    match f {
        Formula::True => Sets::uniform(n, true),
        Formula::False => Sets::uniform(n, false),
        Formula::Atom(a) | Formula::NegAtom(a) => {
            let neg = matches!(f, Formula::NegAtom(_));
            let mut s = Sets::uniform(n, false);
            for i in 0..n {
                let (d, p) = match atom_truth(a, ix.labels[i]) {
                    Some(b) => (b != neg, b != neg),
                    None => (false, true),
                };
                s.def[i] = d;
                s.poss[i] = p;
            }
            s
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            let x = eval3(a, ix, env);
            let y = eval3(b, ix, env);
            let and = matches!(f, Formula::And(..));
            let op = |p: bool, q: bool| if and { p && q } else { p || q };
            Sets {
                def: x.def.iter().zip(&y.def).map(|(&p, &q)| op(p, q)).collect(),
                poss: x
                    .poss
                    .iter()
                    .zip(&y.poss)
                    .map(|(&p, &q)| op(p, q))
                    .collect(),
            }
        }
        Formula::SomeChild(g) | Formula::EveryChild(g) | Formula::CountChildren(g, _) => {
            let x = eval3(g, ix, env);
            let mut s = Sets::uniform(n, false);
            for i in 0..n {
                let kids = &ix.children[i];
                let open = ix.open[i];
                let nd = kids.iter().filter(|&&c| x.def[c]).count();
                let np = kids.iter().filter(|&&c| x.poss[c]).count();
                let (d, p) = match f {
                    Formula::SomeChild(_) => (nd > 0, np > 0 || open),
                    Formula::EveryChild(_) => (!open && nd == kids.len(), np == kids.len()),
                    Formula::CountChildren(_, k) => (nd >= *k, open || np >= *k),
                    _ => unreachable!(),
                };
                s.def[i] = d;
                s.poss[i] = p;
            }
            s
        }
        Formula::SomeDesc(g) | Formula::EveryDesc(g) => {
            let x = eval3(g, ix, env);
            let some = matches!(f, Formula::SomeDesc(_));
            let mut s = Sets::uniform(n, false);
            for i in 0..n {
                let range = i + 1..ix.end[i];
                if some {
                    s.def[i] = range.clone().any(|j| x.def[j]);
                    s.poss[i] = ix.open[i] || range.clone().any(|j| x.poss[j]);
                } else {
                    s.def[i] = !ix.open[i] && range.clone().all(|j| x.def[j]);
                    s.poss[i] = range.clone().all(|j| x.poss[j]);
                }
            }
            s
        }
        Formula::Var(v) => env
            .iter()
            .rev()
            .find(|(name, _)| name == v)
            .map(|(_, s)| s.clone())
            .expect("variables are bound by the parser"),
        Formula::Mu(v, body) | Formula::Nu(v, body) => {
            let start = matches!(f, Formula::Nu(..));
            env.push((v.clone(), Sets::uniform(n, start)));
            loop {
                let next = eval3(body, ix, env);
                let slot = &mut env.last_mut().expect("pushed above").1;
                if *slot == next {
                    break;
                }
                *slot = next;
            }
            env.pop().expect("pushed above").1
        }
    }
}

/// The set of nodes of `t` satisfying `f`.
pub fn evaluate(f: &Formula, t: &XmlTree) -> BTreeSet<DeweyPath> {
    let ix = Indexed::new(t, &[]);
    let s = eval3(f, &ix, &mut Vec::new());
    ix.paths
        .iter()
        .zip(&s.def)
        .filter(|(_, &d)| d)
        .map(|(p, _)| (*p).clone())
        .collect()
}

pub(super) fn prune_verdict(f: &Formula, scope: Scope, partial: &PartialTree) -> Verdict {
    if partial.tree.is_empty() {
        return Verdict::Unknown;
    }
    let ix = Indexed::new(&partial.tree, &partial.open);
    let s = eval3(f, &ix, &mut Vec::new());
    match scope {
        Scope::Root => {
            if s.def[0] {
                Verdict::Keep
            } else if !s.poss[0] {
                Verdict::Prune
            } else {
                Verdict::Unknown
            }
        }
        Scope::AllNodes => {
            if s.poss.iter().any(|&p| !p) {
                Verdict::Prune
            } else if partial.open.is_empty() && s.def.iter().all(|&d| d) {
                Verdict::Keep
            } else {
                Verdict::Unknown
            }
        }
    }
}
