//! Reader for the EBNF subset and its lowering to a plain CFG.
//!
//! ```text
//! grammar Name          (optional header)
//!   Rule = expr ;
//! end                   (optional footer)
//! ```
//!
//! Expressions: rule names, `"regex terminal"`, `'literal'`, `[class]`,
//! grouping, `|`, postfix `* + ?`, and the prose set
//! `{any UTF-8 chars except 'x' and 'y'}`. Line comments start with `//` or `#`.

use std::collections::HashMap;

use crate::lang::regex::{self, Flavor, Regex};
use crate::lang::CharSet;

use super::{GrammarError, Symbol};

#[derive(Debug, Clone)]
pub(crate) enum Expr {
    Name(String, usize),
    Re(Regex),
    Seq(Vec<Expr>),
    Alt(Vec<Expr>),
    Star(Box<Expr>),
    Plus(Box<Expr>),
    Opt(Box<Expr>),
}

pub(crate) struct RuleDef {
    pub name: String,
    pub expr: Expr,
}

pub(crate) struct Parsed {
    pub name: Option<String>,
    pub rules: Vec<RuleDef>,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn line(&self) -> usize {
        self.line_at(self.pos)
    }

    fn line_at(&self, pos: usize) -> usize {
        self.src[..pos.min(self.src.len())].matches('\n').count() + 1
    }

    fn err(&self, reason: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.line(),
            reason: reason.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            while self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            }
            if self.rest().starts_with("//") || self.rest().starts_with('#') {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
                continue;
            }
            return;
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_trivia();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            self.bump();
        }
        Some(self.src[start..self.pos].to_string())
    }

    fn peek_ident(&mut self) -> Option<String> {
        let save = self.pos;
        let id = self.ident();
        self.pos = save;
        id
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_trivia();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }
}

pub(crate) fn parse(src: &str) -> Result<Parsed, GrammarError> {
    let mut lx = Lexer { src, pos: 0 };
    let mut name = None;
    if lx.peek_ident().as_deref() == Some("grammar") {
        lx.ident();
        name = Some(
            lx.ident()
                .ok_or_else(|| lx.err("expected a grammar name"))?,
        );
    }
    let mut rules = Vec::new();
    loop {
        lx.skip_trivia();
        if lx.peek().is_none() {
            break;
        }
        let line = lx.line();
        let Some(id) = lx.ident() else {
            return Err(lx.err(format!(
                "expected a rule name, found {:?}",
                lx.peek().unwrap()
            )));
        };
        if id == "end" && !lx.rest().trim_start().starts_with('=') {
            lx.skip_trivia();
            if lx.peek().is_some() {
                return Err(lx.err("text after 'end'"));
            }
            break;
        }
        if !lx.eat('=') {
            return Err(lx.err(format!("expected '=' after rule name {id}")));
        }
        let expr = parse_alt(&mut lx)?;
        if !lx.eat(';') {
            return Err(lx.err(format!("expected ';' to end rule {id}")));
        }
        if rules.iter().any(|r: &RuleDef| r.name == id) {
            return Err(GrammarError::Syntax {
                line,
                reason: format!("rule {id} defined twice"),
            });
        }
        rules.push(RuleDef { name: id, expr });
    }
    if rules.is_empty() {
        return Err(lx.err("grammar defines no rules"));
    }
    Ok(Parsed { name, rules })
}

fn parse_alt(lx: &mut Lexer) -> Result<Expr, GrammarError> {
    let mut alts = vec![parse_seq(lx)?];
    while lx.eat('|') {
        alts.push(parse_seq(lx)?);
    }
    Ok(if alts.len() == 1 {
        alts.pop().unwrap()
    } else {
        Expr::Alt(alts)
    })
}

fn parse_seq(lx: &mut Lexer) -> Result<Expr, GrammarError> {
    let mut items = Vec::new();
    loop {
        lx.skip_trivia();
        match lx.peek() {
            None | Some(';' | '|' | ')') => break,
            _ => {}
        }
        let mut atom = parse_atom(lx)?;
        loop {
            match lx.peek() {
                Some('*') => atom = Expr::Star(Box::new(atom)),
                Some('+') => atom = Expr::Plus(Box::new(atom)),
                Some('?') => atom = Expr::Opt(Box::new(atom)),
                _ => break,
            }
            lx.bump();
        }
        items.push(atom);
    }
    Ok(if items.len() == 1 {
        items.pop().unwrap()
    } else {
        Expr::Seq(items)
    })
}

fn parse_atom(lx: &mut Lexer) -> Result<Expr, GrammarError> {
    lx.skip_trivia();
    let line = lx.line();
    match lx.peek() {
        Some('(') => {
            lx.bump();
            let e = parse_alt(lx)?;
            if !lx.eat(')') {
                return Err(lx.err("expected ')'"));
            }
            Ok(e)
        }
        Some('"') => {
            lx.bump();
            let start = lx.pos;
            loop {
                match lx.bump() {
                    None | Some('\n') => {
                        return Err(GrammarError::Syntax {
                            line,
                            reason: "unterminated string".into(),
                        })
                    }
                    Some('\\') => {
                        lx.bump();
                    }
                    Some('"') => break,
                    _ => {}
                }
            }
            let body = &lx.src[start..lx.pos - 1];
            let re = regex::parse(body, Flavor::Terminal).map_err(|e| GrammarError::Syntax {
                line,
                reason: format!("in terminal \"{body}\": {e}"),
            })?;
            Ok(Expr::Re(re))
        }
        Some('\'') => {
            lx.bump();
            let mut s = String::new();
            loop {
                match lx.bump() {
                    None | Some('\n') => {
                        return Err(GrammarError::Syntax {
                            line,
                            reason: "unterminated string".into(),
                        })
                    }
                    Some('\\') => match lx.bump() {
                        Some('n') => s.push('\n'),
                        Some('t') => s.push('\t'),
                        Some(c) => s.push(c),
                        None => return Err(lx.err("dangling escape")),
                    },
                    Some('\'') => break,
                    Some(c) => s.push(c),
                }
            }
            Ok(Expr::Re(Regex::literal(&s)))
        }
        Some('[') => {
            let start = lx.pos;
            lx.bump();
            let mut first = true;
            loop {
                match lx.bump() {
                    None => return Err(lx.err("unterminated character class")),
                    Some('\\') => {
                        lx.bump();
                    }
                    Some(']') if !first => break,
                    _ => {}
                }
                first = false;
            }
            let body = &lx.src[start..lx.pos];
            let re = regex::parse(body, Flavor::Terminal).map_err(|e| GrammarError::Syntax {
                line,
                reason: format!("in class {body}: {e}"),
            })?;
            Ok(Expr::Re(re))
        }
        Some('{') => {
            lx.bump();
            let start = lx.pos;
            let Some(len) = lx.rest().find('}') else {
                return Err(lx.err("unterminated '{'"));
            };
            let prose = &lx.src[start..start + len];
            lx.pos = start + len + 1;
            let set = prose_set(prose).ok_or_else(|| GrammarError::Syntax {
                line,
                reason: format!("unsupported set description {{{prose}}}"),
            })?;
            Ok(Expr::Star(Box::new(Expr::Re(Regex::Set(set)))))
        }
        _ => match lx.ident() {
            Some(id) => Ok(Expr::Name(id, line)),
            None => Err(lx.err(format!("unexpected {:?}", lx.peek().unwrap_or(' ')))),
        },
    }
}

/// `any [UTF-8] chars except 'a' and 'b'` → all characters minus those quoted.
fn prose_set(prose: &str) -> Option<CharSet> {
    let words: Vec<&str> = prose.split_whitespace().collect();
    if words.first() != Some(&"any") {
        return None;
    }
    let mut set = CharSet::any();
    if let Some(i) = prose.find("except") {
        let tail = &prose[i + "except".len()..];
        let mut found = false;
        let mut rest = tail;
        while let Some(q) = rest.find('\'') {
            let after = &rest[q + 1..];
            let end = after.find('\'')?;
            let quoted = &after[..end];
            let mut chars = quoted.chars();
            let c = chars.next()?;
            if chars.next().is_some() {
                return None;
            }
            set = set.difference(&CharSet::single(c));
            found = true;
            rest = &after[end + 1..];
        }
        if !found {
            return None;
        }
    }
    Some(set)
}

/// Lowered grammar: nonterminal names, terminal sets and productions.
pub(crate) struct Lowered {
    pub names: Vec<String>,
    pub terminals: Vec<CharSet>,
    pub prods: Vec<(usize, Vec<Symbol>)>,
}

struct Lowerer {
    index: HashMap<String, usize>,
    names: Vec<String>,
    terminals: Vec<CharSet>,
    term_index: HashMap<CharSet, usize>,
    prods: Vec<(usize, Vec<Symbol>)>,
    fresh: usize,
}

impl Lowerer {
    fn fresh(&mut self, base: &str) -> usize {
        self.fresh += 1;
        self.names.push(format!("{base}#{}", self.fresh));
        self.names.len() - 1
    }

    fn term(&mut self, set: CharSet) -> Symbol {
        if let Some(&i) = self.term_index.get(&set) {
            return Symbol::T(i);
        }
        self.terminals.push(set.clone());
        self.term_index.insert(set, self.terminals.len() - 1);
        Symbol::T(self.terminals.len() - 1)
    }

    fn star(&mut self, base: &str, body: Vec<Symbol>) -> Symbol {
        // Left recursion keeps Earley columns small for long repetitions.
        let n = self.fresh(base);
        self.prods.push((n, Vec::new()));
        let mut rhs = vec![Symbol::N(n)];
        rhs.extend(body);
        self.prods.push((n, rhs));
        Symbol::N(n)
    }

    fn regex(&mut self, base: &str, re: &Regex, out: &mut Vec<Symbol>) {
        match re {
            Regex::Empty => {}
            Regex::Set(s) => {
                let t = self.term(s.clone());
                out.push(t);
            }
            Regex::Concat(xs) => {
                for x in xs {
                    self.regex(base, x, out);
                }
            }
            Regex::Alt(xs) => {
                let n = self.fresh(base);
                for x in xs {
                    let mut rhs = Vec::new();
                    self.regex(base, x, &mut rhs);
                    self.prods.push((n, rhs));
                }
                out.push(Symbol::N(n));
            }
            Regex::Repeat { inner, min, max } => {
                let mut body = Vec::new();
                self.regex(base, inner, &mut body);
                for _ in 0..*min {
                    out.extend(body.iter().cloned());
                }
                match max {
                    None => {
                        let s = self.star(base, body);
                        out.push(s);
                    }
                    Some(max) if *max > *min => {
                        // Opt_k = ε | body Opt_{k-1}
                        let mut tail: Option<usize> = None;
                        for _ in *min..*max {
                            let n = self.fresh(base);
                            self.prods.push((n, Vec::new()));
                            let mut rhs = body.clone();
                            if let Some(t) = tail {
                                rhs.push(Symbol::N(t));
                            }
                            self.prods.push((n, rhs));
                            tail = Some(n);
                        }
                        out.push(Symbol::N(tail.unwrap()));
                    }
                    Some(_) => {}
                }
            }
            Regex::Inter(_) => unreachable!("terminal flavor has no intersection"),
        }
    }

    fn expr(&mut self, base: &str, e: &Expr, out: &mut Vec<Symbol>) {
        match e {
            Expr::Name(n, _) => out.push(Symbol::N(self.index[n])),
            Expr::Re(re) => self.regex(base, re, out),
            Expr::Seq(xs) => {
                for x in xs {
                    self.expr(base, x, out);
                }
            }
            Expr::Alt(xs) => {
                let n = self.fresh(base);
                for x in xs {
                    let mut rhs = Vec::new();
                    self.expr(base, x, &mut rhs);
                    self.prods.push((n, rhs));
                }
                out.push(Symbol::N(n));
            }
            Expr::Star(x) => {
                let mut body = Vec::new();
                self.expr(base, x, &mut body);
                let s = self.star(base, body);
                out.push(s);
            }
            Expr::Plus(x) => {
                let mut body = Vec::new();
                self.expr(base, x, &mut body);
                out.extend(body.iter().cloned());
                let s = self.star(base, body);
                out.push(s);
            }
            Expr::Opt(x) => {
                let n = self.fresh(base);
                self.prods.push((n, Vec::new()));
                let mut rhs = Vec::new();
                self.expr(base, x, &mut rhs);
                self.prods.push((n, rhs));
                out.push(Symbol::N(n));
            }
        }
    }
}

fn first_undefined(e: &Expr, defined: &HashMap<String, usize>) -> Option<(String, usize)> {
    match e {
        Expr::Name(n, line) => (!defined.contains_key(n)).then(|| (n.clone(), *line)),
        Expr::Re(_) => None,
        Expr::Seq(xs) | Expr::Alt(xs) => xs.iter().find_map(|x| first_undefined(x, defined)),
        Expr::Star(x) | Expr::Plus(x) | Expr::Opt(x) => first_undefined(x, defined),
    }
}

pub(crate) fn lower(parsed: &Parsed) -> Result<Lowered, GrammarError> {
    let index: HashMap<String, usize> = parsed
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| (r.name.clone(), i))
        .collect();
    for r in &parsed.rules {
        if let Some((name, _)) = first_undefined(&r.expr, &index) {
            return Err(GrammarError::UndefinedNonterminal(name));
        }
    }
    let mut lw = Lowerer {
        names: parsed.rules.iter().map(|r| r.name.clone()).collect(),
        index,
        terminals: Vec::new(),
        term_index: HashMap::new(),
        prods: Vec::new(),
        fresh: 0,
    };
    for (i, r) in parsed.rules.iter().enumerate() {
        // A top-level alternation becomes several productions of the rule itself.
        let alts: Vec<&Expr> = match &r.expr {
            Expr::Alt(xs) => xs.iter().collect(),
            e => vec![e],
        };
        for alt in alts {
            let mut rhs = Vec::new();
            lw.expr(&r.name, alt, &mut rhs);
            lw.prods.push((i, rhs));
        }
    }
    Ok(Lowered {
        names: lw.names,
        terminals: lw.terminals,
        prods: lw.prods,
    })
}
