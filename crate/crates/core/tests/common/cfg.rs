//! Small random context-free grammars and an exact viability oracle that
//! intersects the grammar with the regular language `w·Σ*`.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use xmlprompt::grammar::{compile_ebnf, token_mask, Grammar, Vocabulary};

pub const ALPHABET: [char; 4] = ['a', 'b', '<', '>'];
const NAMES: [&str; 3] = ["S", "A", "B"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sym {
    T(char),
    N(usize),
}

#[derive(Debug, Clone)]
pub struct Cfg {
    /// `rules[n]` lists the alternatives of nonterminal `n`; `0` is the start.
    pub rules: Vec<Vec<Vec<Sym>>>,
}

impl Cfg {
    pub fn random(rng: &mut ChaCha8Rng) -> Cfg {
        let n = rng.gen_range(1..=NAMES.len());
        let rules = (0..n)
            .map(|_| {
                (0..rng.gen_range(1..=3))
                    .map(|_| {
                        (0..rng.gen_range(0..=3))
                            .map(|_| {
                                if rng.gen_bool(0.6) {
                                    Sym::T(*ALPHABET.choose(rng).unwrap())
                                } else {
                                    Sym::N(rng.gen_range(0..n))
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Cfg { rules }
    }

    pub fn to_ebnf(&self) -> String {
        let mut out = String::from("grammar Random\n");
        for (n, alts) in self.rules.iter().enumerate() {
            let alts: Vec<String> = alts
                .iter()
                .map(|seq| {
                    seq.iter()
                        .map(|s| match s {
                            Sym::T(c) => format!("'{c}'"),
                            Sym::N(m) => NAMES[*m].to_string(),
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            out.push_str(&format!("  {} = {} ;\n", NAMES[n], alts.join(" | ")));
        }
        out.push_str("end\n");
        out
    }

    pub fn compile(&self) -> Arc<Grammar> {
        compile_ebnf(&self.to_ebnf()).unwrap_or_else(|e| panic!("{e}\n{}", self.to_ebnf()))
    }

    /// Some member of the language starts with `w`.
    pub fn viable(&self, w: &str) -> bool {
        self.derives_into(w, true)
    }

    pub fn accepts(&self, w: &str) -> bool {
        self.derives_into(w, false)
    }

    /// Productive-nonterminal fixpoint over the product with the automaton
    /// reading `w` (and then anything when `open_end`).
    fn derives_into(&self, w: &str, open_end: bool) -> bool {
        let w: Vec<char> = w.chars().collect();
        let m = w.len();
        let states = m + 1;
        let step = |s: usize, c: char| -> Option<usize> {
            if s < m {
                (w[s] == c).then_some(s + 1)
            } else if open_end {
                Some(m)
            } else {
                None
            }
        };
        let n = self.rules.len();
        let mut prod = vec![vec![vec![false; states]; states]; n];
        loop {
            let mut changed = false;
            for (a, alts) in self.rules.iter().enumerate() {
                for seq in alts {
                    for p in 0..states {
                        let mut cur = vec![false; states];
                        cur[p] = true;
                        for sym in seq {
                            let mut next = vec![false; states];
                            for s in (0..states).filter(|&s| cur[s]) {
                                match *sym {
                                    Sym::T(c) => {
                                        if let Some(t) = step(s, c) {
                                            next[t] = true;
                                        }
                                    }
                                    Sym::N(b) => {
                                        for t in 0..states {
                                            next[t] |= prod[b][s][t];
                                        }
                                    }
                                }
                            }
                            cur = next;
                        }
                        for q in 0..states {
                            if cur[q] && !prod[a][p][q] {
                                prod[a][p][q] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        prod[0][0][m]
    }

    /// A random viable prefix of at most `max_len` characters.
    pub fn random_prefix(&self, rng: &mut ChaCha8Rng, max_len: usize) -> String {
        let target = rng.gen_range(0..=max_len);
        let mut w = String::new();
        while w.chars().count() < target {
            let next: Vec<char> = ALPHABET
                .iter()
                .copied()
                .filter(|c| self.viable(&format!("{w}{c}")))
                .collect();
            match next.choose(rng) {
                Some(c) => w.push(*c),
                None => break,
            }
        }
        w
    }
}

/// Distinct random tokens over the alphabet, one to three characters long.
pub fn random_vocab(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < size {
        let len = rng.gen_range(1..=3);
        let t: String = (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect();
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

pub struct MaskStats {
    pub states: usize,
    pub tokens_checked: usize,
    pub disagreements: Vec<String>,
}

/// Compares `token_mask` with the oracle on `n_states` viable prefixes.
/// Returns `None` when the grammar's language is empty.
pub fn check_mask_exactness(seed: u64, n_states: usize, vocab_size: usize) -> Option<MaskStats> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = Cfg::random(&mut rng);
    if !cfg.viable("") {
        return None;
    }
    let g = cfg.compile();
    let tokens = random_vocab(&mut rng, vocab_size);
    let vocab = Vocabulary::new(tokens.clone()).expect("distinct tokens");
    let mut stats = MaskStats {
        states: 0,
        tokens_checked: 0,
        disagreements: Vec::new(),
    };
    for _ in 0..n_states {
        let w = cfg.random_prefix(&mut rng, 8);
        let state = g.initial_state().expect("nonempty grammar").advance(&w);
        stats.states += 1;
        let mask = match token_mask(&state, &vocab) {
            Ok(m) => m,
            Err(e) => {
                stats
                    .disagreements
                    .push(format!("prefix {w:?} is viable but masking failed: {e}"));
                continue;
            }
        };
        for (i, t) in tokens.iter().enumerate() {
            stats.tokens_checked += 1;
            let expected = cfg.viable(&format!("{w}{t}"));
            if mask.is_allowed(i) != expected {
                stats.disagreements.push(format!(
                    "grammar {:?} prefix {w:?} token {t:?}: mask {} oracle {expected}",
                    cfg.to_ebnf(),
                    mask.is_allowed(i)
                ));
            }
        }
        if g.accepts(&w) != cfg.accepts(&w) {
            stats
                .disagreements
                .push(format!("accepts({w:?}) disagrees with the oracle"));
        }
    }
    Some(stats)
}
