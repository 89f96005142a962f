//! Random trees with a controllable amount of shared structure, an
//! independent set-semantics refinement oracle, and the lattice law checks.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use xmlprompt::tree::{
    join_with, meet_with, refines_with, ContentSpec, DeweyPath, LatticeConfig, LggMode, Node,
    NodeLabel, XmlTree,
};

const CAP: usize = 10_000;

pub struct TreeGen {
    pub tags: Vec<&'static str>,
    pub attrs: Vec<&'static str>,
    pub literals: Vec<&'static str>,
    pub patterns: Vec<ContentSpec>,
    /// Deepest path depth; the root is at depth 0.
    pub max_depth: usize,
    pub max_children: usize,
}

impl TreeGen {
    /// Holes and literals only.
    pub fn plain() -> Self {
        TreeGen {
            tags: vec!["a", "b", "c"],
            attrs: vec!["k", "m"],
            literals: vec!["x", "y", "xy", ""],
            patterns: Vec::new(),
            max_depth: 3,
            max_children: 3,
        }
    }

    /// Adds a small pool of regular patterns.
    pub fn with_patterns() -> Self {
        let patterns = ["x*", "y+", "x|y", "[xy]z?", "(xy)*"]
            .iter()
            .map(|s| ContentSpec::pattern(s, CAP).expect("valid pattern"))
            .collect();
        TreeGen {
            patterns,
            ..TreeGen::plain()
        }
    }

    pub fn content(&self, rng: &mut ChaCha8Rng) -> ContentSpec {
        let r: f64 = rng.gen();
        if r < 0.3 {
            ContentSpec::Hole
        } else if r < 0.55 && !self.patterns.is_empty() {
            self.patterns.choose(rng).unwrap().clone()
        } else {
            ContentSpec::literal(*self.literals.choose(rng).unwrap())
        }
    }

    pub fn label(&self, rng: &mut ChaCha8Rng) -> NodeLabel {
        let mut l = NodeLabel::new(*self.tags.choose(rng).unwrap()).with_content(self.content(rng));
        for a in &self.attrs {
            if rng.gen_bool(0.35) {
                l = l.with_attr(*a, self.content(rng));
            }
        }
        l
    }

    pub fn node(&self, rng: &mut ChaCha8Rng, depth: usize) -> Node {
        let mut n = Node::new(self.label(rng));
        if depth < self.max_depth {
            let k = rng.gen_range(0..=self.max_children);
            for _ in 0..k {
                if rng.gen_bool(0.6) {
                    n.children.push(self.node(rng, depth + 1));
                }
            }
        }
        n
    }

    /// A random tree, occasionally bottom.
    pub fn tree(&self, rng: &mut ChaCha8Rng) -> XmlTree {
        if rng.gen_bool(0.03) {
            XmlTree::bottom()
        } else {
            XmlTree::from_root(self.node(rng, 0))
        }
    }

    /// A random tree below `t`: subtrees dropped, contents and attributes
    /// coarsened.
    pub fn generalize(&self, rng: &mut ChaCha8Rng, t: &XmlTree) -> XmlTree {
        if t.is_top() {
            return self.tree(rng);
        }
        let mut kept: Vec<(DeweyPath, NodeLabel)> = Vec::new();
        for (p, l) in t.nodes() {
            let parent_ok = p.parent().is_none_or(|q| kept.iter().any(|(k, _)| *k == q));
            let sib_ok = p
                .prev_sibling()
                .is_none_or(|q| kept.iter().any(|(k, _)| *k == q));
            if !(parent_ok && sib_ok) || (!p.is_root() && rng.gen_bool(0.2)) {
                continue;
            }
            let mut l = l.clone();
            if rng.gen_bool(0.3) {
                l.content = self.coarser(rng, &l.content);
            }
            let names: Vec<String> = l.attrs.keys().cloned().collect();
            for k in names {
                if rng.gen_bool(0.25) {
                    l.attrs.shift_remove(&k);
                } else if rng.gen_bool(0.25) {
                    let c = self.coarser(rng, &l.attrs[&k]);
                    l.attrs.insert(k, c);
                }
            }
            kept.push((p.clone(), l));
        }
        XmlTree::from_nodes(kept).expect("closed by construction")
    }

    /// A content at most as specific as `c`.
    fn coarser(&self, rng: &mut ChaCha8Rng, c: &ContentSpec) -> ContentSpec {
        let above: Vec<&ContentSpec> = self
            .patterns
            .iter()
            .filter(|p| p.le(c, CAP) && *p != c)
            .collect();
        match above.choose(rng) {
            Some(p) if rng.gen_bool(0.5) => (*p).clone(),
            _ => ContentSpec::Hole,
        }
    }

    /// A content at least as specific as `c`.
    fn finer(&self, rng: &mut ChaCha8Rng, c: &ContentSpec) -> ContentSpec {
        let below: Vec<ContentSpec> = self
            .literals
            .iter()
            .map(|s| ContentSpec::literal(*s))
            .chain(self.patterns.iter().cloned())
            .filter(|x| c.le(x, CAP))
            .collect();
        below.choose(rng).cloned().unwrap_or_else(|| c.clone())
    }

    /// A random tree above `t`: holes narrowed, attributes and children added.
    pub fn specialize(&self, rng: &mut ChaCha8Rng, t: &XmlTree) -> XmlTree {
        if t.is_top() || t.is_empty() {
            return if rng.gen_bool(0.5) {
                t.clone()
            } else {
                self.tree(rng)
            };
        }
        let mut out = t.clone();
        let paths: Vec<DeweyPath> = t.paths().cloned().collect();
        for p in &paths {
            let l = out.label_mut(p).unwrap();
            if rng.gen_bool(0.3) {
                l.content = self.finer(rng, &l.content);
            }
            let names: Vec<String> = l.attrs.keys().cloned().collect();
            for k in names {
                if rng.gen_bool(0.25) {
                    let c = self.finer(rng, &l.attrs[&k]);
                    l.attrs.insert(k, c);
                }
            }
            for a in &self.attrs {
                if !l.attrs.contains_key(*a) && rng.gen_bool(0.15) {
                    l.attrs.insert((*a).to_string(), self.content(rng));
                }
            }
        }
        for p in &paths {
            if p.depth() < self.max_depth
                && out.child_count(p) < self.max_children as u32
                && rng.gen_bool(0.15)
            {
                let child = self.node(rng, self.max_depth);
                out.append_child(p, child);
            }
        }
        out
    }

    /// Three trees that are often comparable with each other.
    pub fn correlated(&self, rng: &mut ChaCha8Rng) -> [XmlTree; 3] {
        let base = self.tree(rng);
        let pick = |rng: &mut ChaCha8Rng| match rng.gen_range(0..6) {
            0 => base.clone(),
            1 => self.generalize(rng, &base),
            2 => self.specialize(rng, &base),
            3 => {
                let g = self.generalize(rng, &base);
                self.specialize(rng, &g)
            }
            4 => {
                let s = self.specialize(rng, &base);
                self.specialize(rng, &s)
            }
            _ if rng.gen_bool(0.1) => XmlTree::top(),
            _ => self.tree(rng),
        };
        [pick(rng), pick(rng), pick(rng)]
    }
}

/// Probe texts for language inclusion: every string over `xyzq` up to length
/// 3 plus a few longer ones.
fn probes() -> &'static [String] {
    use std::sync::OnceLock;
    static PROBES: OnceLock<Vec<String>> = OnceLock::new();
    PROBES.get_or_init(|| {
        let mut out = vec![String::new()];
        let mut frontier = vec![String::new()];
        for _ in 0..3 {
            let mut next = Vec::new();
            for s in &frontier {
                for c in ['x', 'y', 'z', 'q'] {
                    next.push(format!("{s}{c}"));
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out.extend(["xyxy", "xxxx", "yyyy", "xyxyxy", "xz"].map(String::from));
        out
    })
}

thread_local! {
    static LE_CACHE: RefCell<HashMap<String, bool>> = RefCell::new(HashMap::new());
}

/// `a ⊑ b` read as "every probe text admitted by `b` is admitted by `a`".
pub fn oracle_content_le(a: &ContentSpec, b: &ContentSpec) -> bool {
    let key = format!("{a:?}|{b:?}");
    if let Some(v) = LE_CACHE.with(|c| c.borrow().get(&key).copied()) {
        return v;
    }
    let extra = b.as_literal().map(String::from);
    let v = probes()
        .iter()
        .chain(extra.iter())
        .all(|s| !admits(b, s) || admits(a, s));
    LE_CACHE.with(|c| c.borrow_mut().insert(key, v));
    v
}

fn admits(c: &ContentSpec, s: &str) -> bool {
    match c {
        ContentSpec::Hole => !s.contains(['<', '>']),
        ContentSpec::Literal(l) => l == s,
        ContentSpec::Pattern(p) => p.matches(s),
    }
}

/// Refinement from its definition, without the library's order code.
pub fn oracle_refines(a: &XmlTree, b: &XmlTree) -> bool {
    if b.is_top() {
        return true;
    }
    if a.is_top() {
        return false;
    }
    a.nodes().iter().all(|(p, la)| {
        b.get(p).is_some_and(|lb| {
            la.tag == lb.tag
                && oracle_content_le(&la.content, &lb.content)
                && la
                    .attrs
                    .iter()
                    .all(|(k, v)| lb.attrs.get(k).is_some_and(|w| oracle_content_le(v, w)))
        })
    })
}

pub fn lattice_config(union: bool) -> LatticeConfig {
    LatticeConfig {
        lgg: if union {
            LggMode::Union
        } else {
            LggMode::Coarse
        },
        state_cap: CAP,
    }
}

/// Checks every lattice law on one triple. Returns the first failed law.
pub fn check_lattice_laws(cfg: &LatticeConfig, [a, b, c]: &[XmlTree; 3]) -> Result<(), String> {
    let le = |x: &XmlTree, y: &XmlTree| refines_with(cfg, x, y);
    let meet = |x: &XmlTree, y: &XmlTree| meet_with(cfg, &[x.clone(), y.clone()]);
    let join = |x: &XmlTree, y: &XmlTree| join_with(cfg, &[x.clone(), y.clone()]);
    let fail = |law: &str| Err(format!("{law} fails on a={a:?} b={b:?} c={c:?}"));

    for (x, y) in [(a, b), (b, c), (a, c), (b, a)] {
        if le(x, y) != oracle_refines(x, y) {
            return fail("refines agrees with the set-semantics oracle");
        }
    }
    if !(le(a, a) && le(b, b)) {
        return fail("reflexivity");
    }
    if le(a, b) && le(b, a) && a != b {
        return fail("antisymmetry");
    }
    if le(a, b) && le(b, c) && !le(a, c) {
        return fail("transitivity");
    }
    if meet(a, a) != *a || join(a, a) != *a {
        return fail("idempotence");
    }
    let m = meet(a, b);
    let j = join(a, b);
    if m != meet(b, a) || j != join(b, a) {
        return fail("commutativity");
    }
    if meet(&m, c) != meet(a, &meet(b, c)) || join(&j, c) != join(a, &join(b, c)) {
        return fail("associativity");
    }
    if meet(a, &j) != *a || join(a, &m) != *a {
        return fail("absorption");
    }
    if le(a, b) != (m == *a) || le(a, b) != (j == *b) {
        return fail("adjunction");
    }
    if !(oracle_refines(&m, a) && oracle_refines(&m, b)) {
        return fail("meet is a lower bound");
    }
    if !(oracle_refines(a, &j) && oracle_refines(b, &j)) {
        return fail("join is an upper bound");
    }
    // Greatest lower bound and least upper bound against the third tree.
    if le(c, a) && le(c, b) && !le(c, &m) {
        return fail("meet is greatest");
    }
    if le(a, c) && le(b, c) && !le(&j, c) {
        return fail("join is least");
    }
    Ok(())
}
