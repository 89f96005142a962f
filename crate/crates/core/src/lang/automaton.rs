//! Finite automata over character intervals.
//!
//! [`Dfa`] values are always kept in canonical form: minimal, trimmed of the
//! dead state, states numbered in breadth-first order from the start state and
//! transitions stored as maximal intervals. Two canonical DFAs are equal exactly
//! when their languages are equal, which is what lets content patterns compare
//! structurally.

use std::collections::{BTreeMap, HashMap, VecDeque};

use super::charset::{partition, CharSet};
use super::regex::Regex;

/// The state budget for one construction was exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapExceeded;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct DState {
    accepting: bool,
    /// Sorted, disjoint `(lo, hi, target)` intervals.
    trans: Vec<(u32, u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dfa {
    /// Empty vector means the empty language; otherwise state 0 is the start.
    states: Vec<DState>,
}

impl Dfa {
    pub fn empty_language() -> Dfa {
        Dfa { states: Vec::new() }
    }

    pub fn universal(universe: &CharSet) -> Dfa {
        let trans = universe
            .ranges()
            .iter()
            .map(|&(lo, hi)| (lo, hi, 0))
            .collect();
        Dfa {
            states: vec![DState {
                accepting: true,
                trans,
            }],
        }
    }

    pub fn literal(s: &str) -> Dfa {
        let chars: Vec<char> = s.chars().collect();
        let mut states = Vec::with_capacity(chars.len() + 1);
        for (i, &c) in chars.iter().enumerate() {
            states.push(DState {
                accepting: false,
                trans: vec![(c as u32, c as u32, (i + 1) as u32)],
            });
        }
        states.push(DState {
            accepting: true,
            trans: Vec::new(),
        });
        Dfa { states }
    }

    pub fn from_regex(re: &Regex, universe: &CharSet, cap: usize) -> Result<Dfa, CapExceeded> {
        let mut nfa = Nfa::default();
        let start = nfa.add();
        let end = nfa.add();
        nfa.build(re, start, end, universe, cap)?;
        let raw = nfa.determinize(start, end, cap)?;
        Ok(raw.minimize())
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn step(&self, state: u32, c: u32) -> Option<u32> {
        let trans = &self.states[state as usize].trans;
        let idx = trans.partition_point(|&(_, hi, _)| hi < c);
        trans
            .get(idx)
            .filter(|&&(lo, _, _)| lo <= c)
            .map(|&(_, _, t)| t)
    }

    pub fn accepts(&self, s: &str) -> bool {
        if self.states.is_empty() {
            return false;
        }
        let mut st = 0u32;
        for c in s.chars() {
            match self.step(st, c as u32) {
                Some(n) => st = n,
                None => return false,
            }
        }
        self.states[st as usize].accepting
    }

    /// The unique member if the language has exactly one string.
    pub fn singleton(&self) -> Option<String> {
        if self.states.is_empty() {
            return None;
        }
        let mut out = String::new();
        let mut st = 0usize;
        let mut seen = vec![false; self.states.len()];
        loop {
            if seen[st] {
                return None;
            }
            seen[st] = true;
            let s = &self.states[st];
            match (s.accepting, s.trans.as_slice()) {
                (true, []) => return Some(out),
                (false, [(lo, hi, t)]) if lo == hi => {
                    out.push(char::from_u32(*lo)?);
                    st = *t as usize;
                }
                _ => return None,
            }
        }
    }

    pub fn union(&self, other: &Dfa, cap: usize) -> Result<Dfa, CapExceeded> {
        product(self, other, cap, |a, b| a || b)
    }

    pub fn intersect(&self, other: &Dfa, cap: usize) -> Result<Dfa, CapExceeded> {
        product(self, other, cap, |a, b| a && b)
    }

    /// Decides `L(sub) ⊆ L(self)`.
    pub fn includes(&self, sub: &Dfa, cap: usize) -> Result<bool, CapExceeded> {
        if sub.states.is_empty() {
            return Ok(true);
        }
        let mut seen: HashMap<(u32, Option<u32>), ()> = HashMap::new();
        let mut queue = VecDeque::new();
        let start = (
            0u32,
            if self.states.is_empty() {
                None
            } else {
                Some(0)
            },
        );
        seen.insert(start, ());
        queue.push_back(start);
        while let Some((b, a)) = queue.pop_front() {
            let b_state = &sub.states[b as usize];
            let a_acc = a.is_some_and(|a| self.states[a as usize].accepting);
            if b_state.accepting && !a_acc {
                return Ok(false);
            }
            for &(lo, hi, bt) in &b_state.trans {
                // Split the interval along the boundaries of `a`'s transitions.
                let mut cuts = vec![lo];
                if let Some(a) = a {
                    for &(alo, ahi, _) in &self.states[a as usize].trans {
                        if alo > lo && alo <= hi {
                            cuts.push(alo);
                        }
                        if ahi >= lo && ahi < hi {
                            cuts.push(ahi + 1);
                        }
                    }
                }
                cuts.sort_unstable();
                cuts.dedup();
                for c in cuts {
                    let next = (bt, a.and_then(|a| self.step(a, c)));
                    if seen.insert(next, ()).is_none() {
                        if seen.len() > cap {
                            return Err(CapExceeded);
                        }
                        queue.push_back(next);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Converts the automaton back into an (unreadable but exact) regex.
    pub fn to_regex(&self) -> Regex {
        if self.states.is_empty() {
            return Regex::Set(CharSet::empty());
        }
        // State elimination over a generalized NFA with one start and one final state.
        let n = self.states.len();
        let (s, f) = (n, n + 1);
        let mut edge: BTreeMap<(usize, usize), Regex> = BTreeMap::new();
        let add = |edge: &mut BTreeMap<(usize, usize), Regex>, k: (usize, usize), r: Regex| {
            let merged = match edge.remove(&k) {
                Some(prev) => alt2(prev, r),
                None => r,
            };
            edge.insert(k, merged);
        };
        add(&mut edge, (s, 0), Regex::Empty);
        for (i, st) in self.states.iter().enumerate() {
            if st.accepting {
                add(&mut edge, (i, f), Regex::Empty);
            }
            let mut by_target: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
            for &(lo, hi, t) in &st.trans {
                by_target.entry(t).or_default().push((lo, hi));
            }
            for (t, ranges) in by_target {
                add(
                    &mut edge,
                    (i, t as usize),
                    Regex::Set(CharSet::from_ranges(ranges)),
                );
            }
        }
        for k in 0..n {
            let self_loop = edge.remove(&(k, k));
            let ins: Vec<(usize, Regex)> = edge
                .iter()
                .filter(|((a, b), _)| *b == k && *a != k)
                .map(|((a, _), r)| (*a, r.clone()))
                .collect();
            let outs: Vec<(usize, Regex)> = edge
                .iter()
                .filter(|((a, b), _)| *a == k && *b != k)
                .map(|((_, b), r)| (*b, r.clone()))
                .collect();
            edge.retain(|(a, b), _| *a != k && *b != k);
            for (i, rin) in &ins {
                for (o, rout) in &outs {
                    let mut parts = vec![rin.clone()];
                    if let Some(l) = &self_loop {
                        parts.push(Regex::star(l.clone()));
                    }
                    parts.push(rout.clone());
                    add(&mut edge, (*i, *o), Regex::Concat(parts));
                }
            }
        }
        edge.remove(&(s, f)).unwrap_or(Regex::Set(CharSet::empty()))
    }
}

fn alt2(a: Regex, b: Regex) -> Regex {
    match a {
        Regex::Alt(mut xs) => {
            xs.push(b);
            Regex::Alt(xs)
        }
        a => Regex::Alt(vec![a, b]),
    }
}

/// A DFA before minimization; transitions are over arbitrary disjoint intervals.
struct RawDfa {
    accepting: Vec<bool>,
    trans: Vec<Vec<(u32, u32, usize)>>,
}

impl RawDfa {
    fn minimize(self) -> Dfa {
        let n = self.accepting.len();
        if n == 0 {
            return Dfa::empty_language();
        }
        // Complete the automaton over a common atom partition, with `dead = n`.
        let sets: Vec<CharSet> = self
            .trans
            .iter()
            .flatten()
            .map(|&(lo, hi, _)| CharSet::from_ranges([(lo, hi)]))
            .collect();
        let refs: Vec<&CharSet> = sets.iter().collect();
        let atoms = partition(&refs);
        let dead = n;
        let lookup = |s: usize, c: u32| -> usize {
            if s == dead {
                return dead;
            }
            let t = &self.trans[s];
            let idx = t.partition_point(|&(_, hi, _)| hi < c);
            match t.get(idx) {
                Some(&(lo, _, tgt)) if lo <= c => tgt,
                _ => dead,
            }
        };
        let table: Vec<Vec<usize>> = (0..=n)
            .map(|s| atoms.iter().map(|&(lo, _)| lookup(s, lo)).collect())
            .collect();
        let mut class: Vec<usize> = (0..=n)
            .map(|s| usize::from(s < n && self.accepting[s]))
            .collect();
        loop {
            let mut sig_ids: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
            let next: Vec<usize> = (0..=n)
                .map(|s| {
                    let sig = (class[s], table[s].iter().map(|&t| class[t]).collect());
                    let len = sig_ids.len();
                    *sig_ids.entry(sig).or_insert(len)
                })
                .collect();
            let stable =
                sig_ids.len() == class.iter().collect::<std::collections::HashSet<_>>().len();
            class = next;
            if stable {
                break;
            }
        }
        // Classes that can reach an accepting class.
        let n_classes = class.iter().max().map_or(0, |m| m + 1);
        let mut class_acc = vec![false; n_classes];
        let mut class_succ: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for s in 0..=n {
            if s < n && self.accepting[s] {
                class_acc[class[s]] = true;
            }
            for &t in &table[s] {
                class_succ[class[s]].push(class[t]);
            }
        }
        let mut live = class_acc.clone();
        loop {
            let mut changed = false;
            for c in 0..n_classes {
                if !live[c] && class_succ[c].iter().any(|&d| live[d]) {
                    live[c] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let start_class = class[0];
        if !live[start_class] {
            return Dfa::empty_language();
        }
        // Representative state for each class.
        let mut rep = vec![usize::MAX; n_classes];
        for s in (0..=n).rev() {
            rep[class[s]] = s;
        }
        let mut number: HashMap<usize, u32> = HashMap::new();
        let mut order = vec![start_class];
        number.insert(start_class, 0);
        let mut states = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let c = order[i];
            let r = rep[c];
            let mut trans: Vec<(u32, u32, u32)> = Vec::new();
            for (ai, &(lo, hi)) in atoms.iter().enumerate() {
                let tc = class[table[r][ai]];
                if !live[tc] {
                    continue;
                }
                let id = *number.entry(tc).or_insert_with(|| {
                    order.push(tc);
                    (order.len() - 1) as u32
                });
                match trans.last_mut() {
                    Some(last) if last.2 == id && last.1 + 1 == lo => last.1 = hi,
                    _ => trans.push((lo, hi, id)),
                }
            }
            states.push(DState {
                accepting: class_acc[c],
                trans,
            });
            i += 1;
        }
        Dfa { states }
    }
}

fn product(
    a: &Dfa,
    b: &Dfa,
    cap: usize,
    accept: impl Fn(bool, bool) -> bool,
) -> Result<Dfa, CapExceeded> {
    let mut index: HashMap<(Option<u32>, Option<u32>), usize> = HashMap::new();
    let mut order: Vec<(Option<u32>, Option<u32>)> = Vec::new();
    let start = (
        (!a.states.is_empty()).then_some(0),
        (!b.states.is_empty()).then_some(0),
    );
    index.insert(start, 0);
    order.push(start);
    let mut raw = RawDfa {
        accepting: Vec::new(),
        trans: Vec::new(),
    };
    let mut i = 0;
    while i < order.len() {
        let (sa, sb) = order[i];
        let acc_a = sa.is_some_and(|s| a.states[s as usize].accepting);
        let acc_b = sb.is_some_and(|s| b.states[s as usize].accepting);
        raw.accepting.push(accept(acc_a, acc_b));
        // One set per transition interval, so adjacent intervals with
        // different targets stay separate atoms.
        let sets: Vec<CharSet> = sa
            .map(|s| &a.states[s as usize].trans)
            .into_iter()
            .chain(sb.map(|s| &b.states[s as usize].trans))
            .flatten()
            .map(|&(l, h, _)| CharSet::from_ranges([(l, h)]))
            .collect();
        let refs: Vec<&CharSet> = sets.iter().collect();
        let cuts = partition(&refs);
        let mut trans = Vec::new();
        for (lo, hi) in cuts {
            let na = sa.and_then(|s| a.step(s, lo));
            let nb = sb.and_then(|s| b.step(s, lo));
            if na.is_none() && nb.is_none() {
                continue;
            }
            let key = (na, nb);
            let id = match index.get(&key) {
                Some(&id) => id,
                None => {
                    let id = order.len();
                    if id >= cap {
                        return Err(CapExceeded);
                    }
                    index.insert(key, id);
                    order.push(key);
                    id
                }
            };
            trans.push((lo, hi, id));
        }
        raw.trans.push(trans);
        i += 1;
    }
    Ok(raw.minimize())
}

#[derive(Default)]
struct Nfa {
    eps: Vec<Vec<usize>>,
    trans: Vec<Vec<(CharSet, usize)>>,
}

impl Nfa {
    fn add(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.trans.push(Vec::new());
        self.eps.len() - 1
    }

    fn build(
        &mut self,
        re: &Regex,
        from: usize,
        to: usize,
        universe: &CharSet,
        cap: usize,
    ) -> Result<(), CapExceeded> {
        if self.eps.len() > cap * 4 {
            return Err(CapExceeded);
        }
        match re {
            Regex::Empty => self.eps[from].push(to),
            Regex::Set(s) => {
                let s = s.intersect(universe);
                if !s.is_empty() {
                    self.trans[from].push((s, to));
                }
            }
            Regex::Concat(items) => {
                let mut cur = from;
                for (i, item) in items.iter().enumerate() {
                    let next = if i + 1 == items.len() { to } else { self.add() };
                    self.build(item, cur, next, universe, cap)?;
                    cur = next;
                }
                if items.is_empty() {
                    self.eps[from].push(to);
                }
            }
            Regex::Alt(alts) => {
                for alt in alts {
                    self.build(alt, from, to, universe, cap)?;
                }
            }
            Regex::Repeat { inner, min, max } => {
                let mut cur = from;
                for _ in 0..*min {
                    let next = self.add();
                    self.build(inner, cur, next, universe, cap)?;
                    cur = next;
                }
                match max {
                    None => {
                        let hub = self.add();
                        self.eps[cur].push(hub);
                        let back = self.add();
                        self.build(inner, hub, back, universe, cap)?;
                        self.eps[back].push(hub);
                        self.eps[hub].push(to);
                    }
                    Some(max) => {
                        for _ in *min..*max {
                            let next = self.add();
                            self.build(inner, cur, next, universe, cap)?;
                            self.eps[cur].push(to);
                            cur = next;
                        }
                        self.eps[cur].push(to);
                    }
                }
            }
            Regex::Inter(parts) => {
                let mut acc = Dfa::universal(universe);
                for p in parts {
                    let d = Dfa::from_regex(p, universe, cap)?;
                    acc = acc.intersect(&d, cap)?;
                }
                self.embed(&acc, from, to);
            }
        }
        Ok(())
    }

    fn embed(&mut self, dfa: &Dfa, from: usize, to: usize) {
        if dfa.states.is_empty() {
            return;
        }
        let base: Vec<usize> = (0..dfa.states.len()).map(|_| self.add()).collect();
        self.eps[from].push(base[0]);
        for (i, st) in dfa.states.iter().enumerate() {
            if st.accepting {
                self.eps[base[i]].push(to);
            }
            for &(lo, hi, t) in &st.trans {
                self.trans[base[i]].push((CharSet::from_ranges([(lo, hi)]), base[t as usize]));
            }
        }
    }

    fn closure(&self, set: &mut Vec<usize>) {
        let mut stack: Vec<usize> = set.clone();
        let mut seen: std::collections::HashSet<usize> = set.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for &t in &self.eps[s] {
                if seen.insert(t) {
                    stack.push(t);
                    set.push(t);
                }
            }
        }
        set.sort_unstable();
        set.dedup();
    }

    fn determinize(&self, start: usize, end: usize, cap: usize) -> Result<RawDfa, CapExceeded> {
        let mut init = vec![start];
        self.closure(&mut init);
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut order: Vec<Vec<usize>> = vec![init.clone()];
        index.insert(init, 0);
        let mut raw = RawDfa {
            accepting: Vec::new(),
            trans: Vec::new(),
        };
        let mut i = 0;
        while i < order.len() {
            let set = order[i].clone();
            raw.accepting.push(set.binary_search(&end).is_ok());
            let out_sets: Vec<&CharSet> = set
                .iter()
                .flat_map(|&s| self.trans[s].iter().map(|(cs, _)| cs))
                .collect();
            let atoms = partition(&out_sets);
            let mut trans = Vec::new();
            for (lo, hi) in atoms {
                let mut next: Vec<usize> = set
                    .iter()
                    .flat_map(|&s| self.trans[s].iter())
                    .filter(|(cs, _)| cs.contains_u32(lo))
                    .map(|&(_, t)| t)
                    .collect();
                if next.is_empty() {
                    continue;
                }
                self.closure(&mut next);
                let id = match index.get(&next) {
                    Some(&id) => id,
                    None => {
                        let id = order.len();
                        if id >= cap {
                            return Err(CapExceeded);
                        }
                        index.insert(next.clone(), id);
                        order.push(next);
                        id
                    }
                };
                trans.push((lo, hi, id));
            }
            raw.trans.push(trans);
            i += 1;
        }
        Ok(raw)
    }
}
