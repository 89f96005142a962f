use super::{Atom, Cmp, Formula, FormulaError, Value};

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    bound: Vec<String>,
}

const KEYWORDS: &[&str] = &[
    "tag",
    "attr",
    "some_child",
    "every_child",
    "some_desc",
    "every_desc",
    "count_children",
    "mu",
    "nu",
    "true",
    "false",
];

/// Parses the concrete formula syntax.
///
/// Precedence from loosest: `=>` (right associative, atomic left side),
/// `|`, `&`, then `!` on atoms. A fixpoint body extends as far right as
/// possible.
pub fn parse_formula(src: &str) -> Result<Formula, FormulaError> {
    let mut p = Parser {
        src,
        pos: 0,
        bound: Vec::new(),
    };
    let f = p.implication()?;
    p.ws();
    if p.pos < src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}

impl<'a> Parser<'a> {
    fn err(&self, reason: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            position: self.pos,
            reason: reason.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<(), FormulaError> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(format!("expected {tok:?}")))
        }
    }

    fn peek_ident(&mut self, dotted: bool) -> Option<&'a str> {
        self.ws();
        let r = self.rest();
        let end = r
            .char_indices()
            .find(|&(i, c)| {
                !(c.is_alphanumeric() || c == '_' || (dotted && i > 0 && matches!(c, '-' | '.')))
            })
            .map_or(r.len(), |(i, _)| i);
        let first = r.chars().next()?;
        (end > 0 && (first.is_alphabetic() || first == '_')).then(|| &r[..end])
    }

    fn ident(&mut self) -> Result<&'a str, FormulaError> {
        self.name(false)
    }

    /// XML names may contain `-` and `.`; keywords and variables may not.
    fn name(&mut self, dotted: bool) -> Result<&'a str, FormulaError> {
        let id = self
            .peek_ident(dotted)
            .ok_or_else(|| self.err("expected a name"))?;
        self.pos += id.len();
        Ok(id)
    }

    fn number(&mut self) -> Result<f64, FormulaError> {
        self.ws();
        let r = self.rest();
        let end = r
            .char_indices()
            .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && c == '-')))
            .map_or(r.len(), |(i, _)| i);
        let v = r[..end]
            .parse::<f64>()
            .map_err(|_| self.err("expected a number"))?;
        self.pos += end;
        Ok(v)
    }

    fn implication(&mut self) -> Result<Formula, FormulaError> {
        let start = self.pos;
        let lhs = self.disjunction()?;
        if !self.eat("=>") {
            return Ok(lhs);
        }
        let negated = match lhs {
            Formula::Atom(a) => Formula::NegAtom(a),
            Formula::NegAtom(a) => Formula::Atom(a),
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Var(v) => return Err(FormulaError::NonMonotone(v)),
            _ => {
                return Err(FormulaError::Syntax {
                    position: start,
                    reason: "the left side of => must be an atom".into(),
                })
            }
        };
        let rhs = self.implication()?;
        Ok(Formula::Or(Box::new(negated), Box::new(rhs)))
    }

    fn disjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut f = self.conjunction()?;
        loop {
            self.ws();
            if self.rest().starts_with("|") {
                self.pos += 1;
                let g = self.conjunction()?;
                f = Formula::Or(Box::new(f), Box::new(g));
            } else {
                return Ok(f);
            }
        }
    }

    fn conjunction(&mut self) -> Result<Formula, FormulaError> {
        let mut f = self.unary()?;
        while self.eat("&") {
            let g = self.unary()?;
            f = Formula::And(Box::new(f), Box::new(g));
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, FormulaError> {
        self.ws();
        let start = self.pos;
        if !self.eat("!") {
            return self.primary();
        }
        match self.unary()? {
            Formula::Atom(a) => Ok(Formula::NegAtom(a)),
            Formula::NegAtom(a) => Ok(Formula::Atom(a)),
            Formula::True => Ok(Formula::False),
            Formula::False => Ok(Formula::True),
            Formula::Var(v) => Err(FormulaError::NonMonotone(v)),
            _ => Err(FormulaError::Syntax {
                position: start,
                reason: "negation applies to atoms only".into(),
            }),
        }
    }

    fn primary(&mut self) -> Result<Formula, FormulaError> {
        self.ws();
        if self.eat("(") {
            let f = self.implication()?;
            self.expect(")")?;
            return Ok(f);
        }
        let start = self.pos;
        let id = self.ident()?;
        match id {
            "true" => Ok(Formula::True),
            "false" => Ok(Formula::False),
            "tag" => {
                self.expect("=")?;
                Ok(Formula::Atom(Atom::Tag(self.name(true)?.to_string())))
            }
            "attr" => {
                let name = self.name(true)?.to_string();
                let cmp = if self.eat(">=") {
                    Cmp::Ge
                } else if self.eat("<=") {
                    Cmp::Le
                } else if self.eat("=") {
                    Cmp::Eq
                } else {
                    return Err(self.err("expected =, >= or <="));
                };
                self.ws();
                let value = match self.rest().chars().next() {
                    Some('"') => Value::Str(self.quoted()?),
                    Some(c) if c.is_ascii_digit() || c == '-' || c == '.' => {
                        Value::Num(self.number()?)
                    }
                    _ => Value::Str(self.name(true)?.to_string()),
                };
                if cmp != Cmp::Eq && matches!(value, Value::Str(_)) {
                    return Err(self.err("ordered comparison needs a number"));
                }
                Ok(Formula::Atom(Atom::Attr { name, cmp, value }))
            }
            "some_child" | "every_child" | "some_desc" | "every_desc" | "count_children" => {
                self.expect("(")?;
                let inner = Box::new(self.implication()?);
                self.expect(")")?;
                Ok(match id {
                    "some_child" => Formula::SomeChild(inner),
                    "every_child" => Formula::EveryChild(inner),
                    "some_desc" => Formula::SomeDesc(inner),
                    "every_desc" => Formula::EveryDesc(inner),
                    _ => {
                        self.expect(">=")?;
                        let k = self.number()?;
                        if k < 0.0 || k.fract() != 0.0 {
                            return Err(self.err("count must be a nonnegative integer"));
                        }
                        Formula::CountChildren(inner, k as usize)
                    }
                })
            }
            "mu" | "nu" => {
                let var = self.ident()?.to_string();
                if KEYWORDS.contains(&var.as_str()) {
                    return Err(self.err("a keyword cannot be a variable"));
                }
                self.expect(".")?;
                self.bound.push(var.clone());
                let body = self.implication();
                self.bound.pop();
                let body = Box::new(body?);
                Ok(if id == "mu" {
                    Formula::Mu(var, body)
                } else {
                    Formula::Nu(var, body)
                })
            }
            v if self.bound.iter().any(|b| b == v) => Ok(Formula::Var(v.to_string())),
            v => Err(FormulaError::Syntax {
                position: start,
                reason: format!("unbound variable {v}"),
            }),
        }
    }

    fn quoted(&mut self) -> Result<String, FormulaError> {
        self.pos += 1;
        let r = self.rest();
        let end = r.find('"').ok_or_else(|| self.err("unterminated string"))?;
        let s = r[..end].to_string();
        self.pos += end + 1;
        Ok(s)
    }
}
