use std::collections::{BTreeMap, HashSet};
use std::fmt;

use thiserror::Error;

use super::ParserState;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("empty token at position {0}")]
    EmptyToken(usize),
    #[error("duplicate token {0:?}")]
    Duplicate(String),
    #[error("bad escape on line {0}")]
    BadEscape(usize),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("the parser state is not viable")]
    NonViableState,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<char, usize>,
    token: Option<usize>,
}

/// An ordered list of distinct, nonempty tokens with a prefix trie.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    trie: Vec<TrieNode>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(
        tokens: impl IntoIterator<Item = S>,
    ) -> Result<Self, VocabularyError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        let mut trie = vec![TrieNode::default()];
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(VocabularyError::EmptyToken(i));
            }
            if !seen.insert(t.as_str()) {
                return Err(VocabularyError::Duplicate(t.clone()));
            }
            let mut node = 0;
            for c in t.chars() {
                node = match trie[node].children.get(&c) {
                    Some(&n) => n,
                    None => {
                        trie.push(TrieNode::default());
                        let n = trie.len() - 1;
                        trie[node].children.insert(c, n);
                        n
                    }
                };
            }
            trie[node].token = Some(i);
        }
        Ok(Vocabulary { tokens, trie })
    }

    /// One character per token, for every printable ASCII character.
    pub fn printable_ascii() -> Self {
        Vocabulary::new((0x20u8..0x7f).map(|b| (b as char).to_string())).expect("distinct")
    }

    /// Reads the file format: one token per line, with `\n`, `\t` and `\\`
    /// escapes. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self, VocabularyError> {
        let mut tokens = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                continue;
            }
            let mut tok = String::new();
            let mut chars = line.chars();
            while let Some(c) = chars.next() {
                if c != '\\' {
                    tok.push(c);
                    continue;
                }
                match chars.next() {
                    Some('n') => tok.push('\n'),
                    Some('t') => tok.push('\t'),
                    Some('\\') => tok.push('\\'),
                    _ => return Err(VocabularyError::BadEscape(ln + 1)),
                }
            }
            tokens.push(tok);
        }
        Vocabulary::new(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// The set of allowed token ids at one decoding step.
#[derive(Clone, PartialEq, Eq)]
pub struct TokenMask {
    bits: Vec<u64>,
    len: usize,
}

impl TokenMask {
    pub fn none(len: usize) -> Self {
        TokenMask {
            bits: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len);
        self.bits[i / 64] |= 1 << (i % 64);
    }

    pub fn clear(&mut self, i: usize) {
        assert!(i < self.len);
        self.bits[i / 64] &= !(1 << (i % 64));
    }

    pub fn is_allowed(&self, i: usize) -> bool {
        i < self.len && self.bits[i / 64] & (1 << (i % 64)) != 0
    }

    /// Vocabulary size the mask ranges over.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Allowed ids in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.is_allowed(i))
    }
}

impl fmt::Debug for TokenMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Token `i` is allowed iff consuming it keeps `s` viable.
///
/// Walks the vocabulary trie so shared token prefixes are recognized once; a
/// trie edge whose character cannot be scanned prunes the whole subtree, and
/// leaves need no parser step at all.
pub fn token_mask(s: &ParserState, v: &Vocabulary) -> Result<TokenMask, MaskError> {
    if !s.is_viable() {
        return Err(MaskError::NonViableState);
    }
    let mut mask = TokenMask::none(v.len());
    let mut stack: Vec<(usize, ParserState)> = vec![(0, s.clone())];
    while let Some((node, state)) = stack.pop() {
        for (&c, &child) in &v.trie[node].children {
            if !state.allows(c) {
                continue;
            }
            let n = &v.trie[child];
            if let Some(t) = n.token {
                mask.set(t);
            }
            if !n.children.is_empty() {
                stack.push((child, state.advance_char(c)));
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::compile_ebnf;

    #[test]
    fn vocabulary_file_format() {
        let v = Vocabulary::parse("a\n\\n\n\\t\\\\\n\nb\r\n").unwrap();
        assert_eq!(v.tokens(), ["a", "\n", "\t\\", "b"]);
        assert!(matches!(
            Vocabulary::parse("a\na\n"),
            Err(VocabularyError::Duplicate(_))
        ));
        assert!(matches!(
            Vocabulary::parse("\\q\n"),
            Err(VocabularyError::BadEscape(1))
        ));
    }

    #[test]
    fn mask_matches_per_token_advance() {
        let g = compile_ebnf("S = 'ab' 'c'* | 'b' ;").unwrap();
        let v = Vocabulary::new(["a", "ab", "abc", "abd", "b", "ba", "c"]).unwrap();
        let s = g.initial_state().unwrap();
        let m = token_mask(&s, &v).unwrap();
        let expected: Vec<usize> = (0..v.len())
            .filter(|&i| s.advance(v.token(i)).is_viable())
            .collect();
        assert_eq!(m.iter().collect::<Vec<_>>(), expected);
        assert_eq!(expected, vec![0, 1, 2, 4]);
    }

    #[test]
    fn empty_vocabulary_and_dead_state() {
        let g = compile_ebnf("S = 'a' ;").unwrap();
        let s = g.initial_state().unwrap();
        let empty = Vocabulary::new(Vec::<String>::new()).unwrap();
        assert!(token_mask(&s, &empty).unwrap().is_empty());
        assert_eq!(
            token_mask(&s.advance("z"), &empty),
            Err(MaskError::NonViableState)
        );
    }
}
