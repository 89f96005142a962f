//! Character-level Earley recognition with persistent columns.
//!
//! Each column is immutable once built and shared through `Arc`, so a parser
//! state is cheap to clone and advancing never mutates its input. Items point
//! at the column they started in; only columns still referenced stay alive.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::lang::CharSet;

use super::{Grammar, Symbol};

#[derive(Clone)]
struct Item {
    prod: u32,
    dot: u32,
    /// `None` means the item started in the column that holds it.
    origin: Option<Arc<Column>>,
}

impl Item {
    fn key(&self) -> (u32, u32, usize) {
        let o = self.origin.as_ref().map_or(0, |c| Arc::as_ptr(c) as usize);
        (self.prod, self.dot, o)
    }
}

struct Column {
    index: usize,
    items: Vec<Item>,
    /// Items waiting on each nonterminal, by position in `items`.
    waiting: HashMap<usize, Vec<u32>>,
    /// `(terminal, item)` pairs for items expecting a terminal.
    scanners: Vec<(u32, u32)>,
    scan_set: CharSet,
    accepting: bool,
}

impl Column {
    fn empty(index: usize) -> Column {
        Column {
            index,
            items: Vec::new(),
            waiting: HashMap::new(),
            scanners: Vec::new(),
            scan_set: CharSet::empty(),
            accepting: false,
        }
    }

    fn build(g: &Grammar, index: usize, seeds: Vec<Item>) -> Column {
        let mut items: Vec<Item> = Vec::new();
        let mut seen: HashSet<(u32, u32, usize)> = HashSet::new();
        let mut predicted: HashSet<usize> = HashSet::new();
        let push = |items: &mut Vec<Item>, seen: &mut HashSet<_>, it: Item| {
            if seen.insert(it.key()) {
                items.push(it);
            }
        };
        for s in seeds {
            push(&mut items, &mut seen, s);
        }
        let mut i = 0;
        while i < items.len() {
            let item = items[i].clone();
            i += 1;
            let prod = &g.prods[item.prod as usize];
            match prod.rhs.get(item.dot as usize) {
                None => {
                    // Completions within this column are covered by the
                    // nullable shortcut during prediction.
                    let Some(origin) = &item.origin else { continue };
                    if let Some(ws) = origin.waiting.get(&prod.lhs) {
                        for &w in ws {
                            let parent = &origin.items[w as usize];
                            let adv = Item {
                                prod: parent.prod,
                                dot: parent.dot + 1,
                                origin: parent.origin.clone().or_else(|| Some(origin.clone())),
                            };
                            push(&mut items, &mut seen, adv);
                        }
                    }
                }
                Some(&Symbol::N(b)) => {
                    if predicted.insert(b) {
                        for &p in &g.by_lhs[b] {
                            let it = Item {
                                prod: p as u32,
                                dot: 0,
                                origin: None,
                            };
                            push(&mut items, &mut seen, it);
                        }
                    }
                    if g.nullable[b] {
                        let adv = Item {
                            prod: item.prod,
                            dot: item.dot + 1,
                            origin: item.origin.clone(),
                        };
                        push(&mut items, &mut seen, adv);
                    }
                }
                Some(&Symbol::T(_)) => {}
            }
        }
        let mut waiting: HashMap<usize, Vec<u32>> = HashMap::new();
        let mut scanners = Vec::new();
        let mut terms: Vec<usize> = Vec::new();
        let mut accepting = false;
        for (k, it) in items.iter().enumerate() {
            let prod = &g.prods[it.prod as usize];
            match prod.rhs.get(it.dot as usize) {
                Some(&Symbol::N(b)) => waiting.entry(b).or_default().push(k as u32),
                Some(&Symbol::T(t)) => {
                    scanners.push((t as u32, k as u32));
                    terms.push(t);
                }
                None => {
                    let from_start = it.origin.as_ref().map_or(index, |c| c.index) == 0;
                    if prod.lhs == g.start && from_start {
                        accepting = true;
                    }
                }
            }
        }
        terms.sort_unstable();
        terms.dedup();
        let scan_set = terms
            .iter()
            .fold(CharSet::empty(), |acc, &t| acc.union(&g.terminals[t]));
        Column {
            index,
            items,
            waiting,
            scanners,
            scan_set,
            accepting,
        }
    }
}

/// An incremental recognizer state: the prefix read so far, summarized.
#[derive(Clone)]
pub struct ParserState {
    grammar: Arc<Grammar>,
    col: Arc<Column>,
    consumed: usize,
}

impl std::fmt::Debug for ParserState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParserState")
            .field("consumed", &self.consumed)
            .field("viable", &self.is_viable())
            .field("accepting", &self.is_accepting())
            .finish()
    }
}

impl ParserState {
    pub(crate) fn initial(grammar: Arc<Grammar>) -> ParserState {
        let seeds = grammar.by_lhs[grammar.start]
            .iter()
            .map(|&p| Item {
                prod: p as u32,
                dot: 0,
                origin: None,
            })
            .collect();
        let col = Column::build(&grammar, 0, seeds);
        ParserState {
            grammar,
            col: Arc::new(col),
            consumed: 0,
        }
    }

    pub fn grammar(&self) -> &Arc<Grammar> {
        &self.grammar
    }

    /// Number of characters consumed.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Some member of the language starts with the consumed prefix.
    pub fn is_viable(&self) -> bool {
        !self.col.items.is_empty()
    }

    /// The consumed prefix is itself a member of the language.
    pub fn is_accepting(&self) -> bool {
        self.col.accepting
    }

    /// Characters that keep the state viable.
    pub fn next_chars(&self) -> &CharSet {
        &self.col.scan_set
    }

    pub fn allows(&self, c: char) -> bool {
        self.col.scan_set.contains(c)
    }

    pub fn advance_char(&self, c: char) -> ParserState {
        let index = self.col.index + 1;
        let col = if self.col.scan_set.contains(c) {
            let g = &self.grammar;
            let seeds = self
                .col
                .scanners
                .iter()
                .filter(|(t, _)| g.terminals[*t as usize].contains(c))
                .map(|&(_, k)| {
                    let it = &self.col.items[k as usize];
                    Item {
                        prod: it.prod,
                        dot: it.dot + 1,
                        origin: it.origin.clone().or_else(|| Some(self.col.clone())),
                    }
                })
                .collect();
            Column::build(g, index, seeds)
        } else {
            Column::empty(index)
        };
        ParserState {
            grammar: self.grammar.clone(),
            col: Arc::new(col),
            consumed: self.consumed + 1,
        }
    }

    /// Consumes `chunk` one character at a time.
    pub fn advance(&self, chunk: &str) -> ParserState {
        let mut s = self.clone();
        for c in chunk.chars() {
            s = s.advance_char(c);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use crate::grammar::compile_ebnf;

    #[test]
    fn dead_states_stay_dead() {
        let g = compile_ebnf("S = 'ab' ;").unwrap();
        let s = g.initial_state().unwrap().advance("x");
        assert!(!s.is_viable());
        for c in ['a', 'b', 'x'] {
            assert!(!s.advance_char(c).is_viable());
        }
        assert_eq!(s.advance("ab").consumed(), 3);
    }

    #[test]
    fn empty_chunk_is_identity() {
        let g = compile_ebnf("S = 'ab' ;").unwrap();
        let s = g.initial_state().unwrap().advance("a");
        let t = s.advance("");
        assert_eq!(t.consumed(), s.consumed());
        assert_eq!(t.is_viable(), s.is_viable());
        assert!(t.allows('b'));
    }

    #[test]
    fn ambiguous_and_left_recursive() {
        let g = compile_ebnf("E = E '+' E | E E | 'n' ;").unwrap();
        assert!(g.accepts("n+nn+n"));
        assert!(!g.accepts("n++n"));
        let h = compile_ebnf("S = A ; A = A 'a' | ;").unwrap();
        assert!(h.accepts(""));
        assert!(h.accepts("aaaa"));
    }

    #[test]
    fn text_splits_are_tracked() {
        let g = compile_ebnf("S = '<t>' T '</t>' ; T = {any chars except '<' and '>'} ;").unwrap();
        let s = g.initial_state().unwrap().advance("<t>abc");
        assert!(s.allows('<'));
        assert!(s.allows('z'));
        assert!(!s.allows('>'));
        assert!(s.advance("</t>").is_accepting());
    }
}
