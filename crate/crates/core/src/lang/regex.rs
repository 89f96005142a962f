//! A small regular-expression language shared by content patterns and the
//! quoted terminals of grammar files.

use super::charset::CharSet;
use thiserror::Error;

/// Upper bound on counted repetition; keeps `{n,m}` expansion finite.
const MAX_REPEAT: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Regex {
    /// The empty string.
    Empty,
    Set(CharSet),
    Concat(Vec<Regex>),
    Alt(Vec<Regex>),
    Repeat {
        inner: Box<Regex>,
        min: u32,
        max: Option<u32>,
    },
    /// Language intersection; only produced by the pattern flavor (`a&b`).
    Inter(Vec<Regex>),
}

/// Which surface syntax the parser accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Content patterns: `|` alternation, `&` intersection, `\|` literal pipe.
    Pattern,
    /// Quoted terminals in grammar files: `\"` is a quote, and `word\|word`
    /// alternates the two adjacent words (so `"xml\|json"` means `(xml|json)`).
    Terminal,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("regex syntax error at offset {offset}: {reason}")]
pub struct RegexError {
    pub offset: usize,
    pub reason: String,
}

impl Regex {
    pub fn literal(s: &str) -> Regex {
        Regex::Concat(s.chars().map(|c| Regex::Set(CharSet::single(c))).collect())
    }

    pub fn star(inner: Regex) -> Regex {
        Regex::Repeat {
            inner: Box::new(inner),
            min: 0,
            max: None,
        }
    }

    /// True if the expression mentions no intersection.
    pub fn is_intersection_free(&self) -> bool {
        match self {
            Regex::Empty | Regex::Set(_) => true,
            Regex::Concat(xs) | Regex::Alt(xs) => xs.iter().all(Regex::is_intersection_free),
            Regex::Repeat { inner, .. } => inner.is_intersection_free(),
            Regex::Inter(_) => false,
        }
    }
}

pub fn parse(src: &str, flavor: Flavor) -> Result<Regex, RegexError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut p = Parser {
        chars,
        pos: 0,
        flavor,
        len: src.len(),
    };
    let re = p.parse_inter()?;
    if p.pos < p.chars.len() {
        return Err(p.err("unbalanced ')'"));
    }
    Ok(re)
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    flavor: Flavor,
    len: usize,
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars
            .get(self.pos)
            .map(|&(o, _)| o)
            .unwrap_or(self.len)
    }

    fn err(&self, reason: &str) -> RegexError {
        RegexError {
            offset: self.offset(),
            reason: reason.to_string(),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn parse_inter(&mut self) -> Result<Regex, RegexError> {
        let first = self.parse_alt()?;
        if self.flavor != Flavor::Pattern || self.peek() != Some('&') {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.peek() == Some('&') {
            self.bump();
            parts.push(self.parse_alt()?);
        }
        Ok(Regex::Inter(parts))
    }

    fn parse_alt(&mut self) -> Result<Regex, RegexError> {
        let mut alts = vec![self.parse_concat()?];
        while self.peek() == Some('|') {
            self.bump();
            alts.push(self.parse_concat()?);
        }
        Ok(if alts.len() == 1 {
            alts.pop().unwrap()
        } else {
            Regex::Alt(alts)
        })
    }

    fn at_word_alternation(&self) -> bool {
        self.flavor == Flavor::Terminal && self.peek() == Some('\\') && self.peek_at(1) == Some('|')
    }

    fn parse_concat(&mut self) -> Result<Regex, RegexError> {
        let mut items: Vec<Regex> = Vec::new();
        // Length of the trailing run of single word characters in `items`.
        let mut word_run = 0usize;
        loop {
            match self.peek() {
                None | Some('|') | Some(')') => break,
                Some('&') if self.flavor == Flavor::Pattern => break,
                _ => {}
            }
            if self.at_word_alternation() {
                if word_run == 0 {
                    return Err(self.err("'\\|' must follow a word"));
                }
                let left: String = items
                    .drain(items.len() - word_run..)
                    .map(|r| match r {
                        Regex::Set(s) => s.sample().unwrap_or('?'),
                        _ => unreachable!("word run holds single characters"),
                    })
                    .collect();
                let mut words = vec![Regex::literal(&left)];
                while self.at_word_alternation() {
                    self.pos += 2;
                    let mut right = String::new();
                    while let Some(c) = self.peek().filter(|c| is_word(*c)) {
                        right.push(c);
                        self.pos += 1;
                    }
                    if right.is_empty() {
                        return Err(self.err("'\\|' must precede a word"));
                    }
                    words.push(Regex::literal(&right));
                }
                items.push(Regex::Alt(words));
                word_run = 0;
                continue;
            }
            let (atom, word_char) = self.parse_atom()?;
            let repeated = self.parse_postfix(atom)?;
            let plain = matches!(repeated, Regex::Set(_));
            items.push(repeated);
            word_run = if word_char && plain { word_run + 1 } else { 0 };
        }
        Ok(match items.len() {
            0 => Regex::Empty,
            1 => items.pop().unwrap(),
            _ => Regex::Concat(items),
        })
    }

    fn parse_postfix(&mut self, mut atom: Regex) -> Result<Regex, RegexError> {
        loop {
            let (min, max) = match self.peek() {
                Some('*') => {
                    self.bump();
                    (0, None)
                }
                Some('+') => {
                    self.bump();
                    (1, None)
                }
                Some('?') => {
                    self.bump();
                    (0, Some(1))
                }
                Some('{') if self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) => {
                    self.bump();
                    let min = self.parse_number()?;
                    let max = if self.peek() == Some(',') {
                        self.bump();
                        if self.peek() == Some('}') {
                            None
                        } else {
                            Some(self.parse_number()?)
                        }
                    } else {
                        Some(min)
                    };
                    if self.bump() != Some('}') {
                        return Err(self.err("expected '}'"));
                    }
                    if max.is_some_and(|m| m < min) {
                        return Err(self.err("repetition bounds out of order"));
                    }
                    if min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
                        return Err(self.err("repetition count too large"));
                    }
                    (min, max)
                }
                _ => return Ok(atom),
            };
            atom = Regex::Repeat {
                inner: Box::new(atom),
                min,
                max,
            };
        }
    }

    fn parse_number(&mut self) -> Result<u32, RegexError> {
        let mut n: u32 = 0;
        let mut any = false;
        while let Some(d) = self.peek().and_then(|c| c.to_digit(10)) {
            n = n.saturating_mul(10).saturating_add(d);
            self.bump();
            any = true;
        }
        if !any {
            return Err(self.err("expected a number"));
        }
        Ok(n)
    }

    /// Returns the atom and whether it is a literal word character (for `\|`).
    fn parse_atom(&mut self) -> Result<(Regex, bool), RegexError> {
        let c = self.bump().ok_or_else(|| self.err("unexpected end"))?;
        match c {
            '(' => {
                if self.peek() == Some('?') && self.peek_at(1) == Some(':') {
                    self.pos += 2;
                }
                let inner = self.parse_inter()?;
                if self.bump() != Some(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok((inner, false))
            }
            '[' => Ok((Regex::Set(self.parse_class()?), false)),
            '.' => Ok((Regex::Set(CharSet::any()), false)),
            '*' | '+' | '?' => Err(self.err("repetition operator without operand")),
            '\\' => {
                let e = self.bump().ok_or_else(|| self.err("dangling escape"))?;
                Ok((Regex::Set(escape_set(e)), false))
            }
            c => Ok((Regex::Set(CharSet::single(c)), is_word(c))),
        }
    }

    fn parse_class(&mut self) -> Result<CharSet, RegexError> {
        let negated = if self.peek() == Some('^') {
            self.bump();
            true
        } else {
            false
        };
        let mut set = CharSet::empty();
        let mut first = true;
        loop {
            let c = self
                .bump()
                .ok_or_else(|| self.err("unterminated character class"))?;
            if c == ']' && !first {
                break;
            }
            first = false;
            let lo = if c == '\\' {
                let e = self.bump().ok_or_else(|| self.err("dangling escape"))?;
                let s = escape_set(e);
                match single_char(&s) {
                    Some(ch) => ch,
                    None => {
                        set = set.union(&s);
                        continue;
                    }
                }
            } else {
                c
            };
            if self.peek() == Some('-') && self.peek_at(1).is_some_and(|n| n != ']') {
                self.bump();
                let hc = self.bump().ok_or_else(|| self.err("unterminated range"))?;
                let hi = if hc == '\\' {
                    let e = self.bump().ok_or_else(|| self.err("dangling escape"))?;
                    single_char(&escape_set(e)).ok_or_else(|| self.err("class escape in range"))?
                } else {
                    hc
                };
                if hi < lo {
                    return Err(self.err("character range out of order"));
                }
                set = set.union(&CharSet::range(lo, hi));
            } else {
                set = set.union(&CharSet::single(lo));
            }
        }
        Ok(if negated { set.complement() } else { set })
    }
}

fn single_char(s: &CharSet) -> Option<char> {
    match s.ranges() {
        [(lo, hi)] if lo == hi => char::from_u32(*lo),
        _ => None,
    }
}

fn escape_set(e: char) -> CharSet {
    match e {
        'n' => CharSet::single('\n'),
        't' => CharSet::single('\t'),
        'r' => CharSet::single('\r'),
        'd' => CharSet::range('0', '9'),
        'w' => CharSet::range('a', 'z')
            .union(&CharSet::range('A', 'Z'))
            .union(&CharSet::range('0', '9'))
            .union(&CharSet::single('_')),
        's' => CharSet::from_ranges([(' ' as u32, ' ' as u32), (9, 10), (13, 13)]),
        other => CharSet::single(other),
    }
}

/// Renders a string as a pattern-flavor regex matching exactly that string.
pub fn escape_literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if "\\.|&()[]{}*+?^$".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}
