//! Recursive-descent parser; the grammar is documented in `docs/grammar.md`.

use std::fmt;

use super::{default_trig_domain, Expr, Node, NamedConst};
use crate::rationals::{Integer, Rational};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// Character offset of the offending token (input length at end of input).
    pub position: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "parse error at position {}: expected one of [{}], found {}",
            self.position,
            self.expected.join(", "),
            self.found
        )
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(q) => write!(f, "number {q}"),
            Tok::Ident(s) => write!(f, "identifier {s:?}"),
            Tok::Sym(c) => write!(f, "{c:?}"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let int: String = chars[start..i].iter().collect();
            let mut q = Rational::from(int.parse::<Integer>().expect("digits"));
            if i < chars.len() && chars[i] == '.' {
                i += 1;
                let fs = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                if fs == i {
                    return Err(ParseError {
                        position: i,
                        expected: vec!["digit".into()],
                        found: chars.get(i).map_or("end of input".into(), |c| format!("{c:?}")),
                    });
                }
                let frac: String = chars[fs..i].iter().collect();
                let scale = Integer::from(Integer::u_pow_u(10, frac.len() as u32));
                q += Rational::from((frac.parse::<Integer>().expect("digits"), scale));
            }
            out.push((start, Tok::Num(q)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^(),[]".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ParseError {
                position: i,
                expected: vec!["expression".into()],
                found: format!("{c:?}"),
            });
        }
    }
    out.push((chars.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

const EXPR_START: &[&str] = &["number", "identifier", "'('", "'-'"];

fn indexed(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn here(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> ParseError {
        ParseError {
            position: self.here(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().to_string(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&[&format!("'{c}'")]))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat('-') {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::mul(lhs, self.unary()?);
            } else if self.eat('/') {
                lhs = Expr::div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::neg(self.unary()?));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::pow(base, self.unary()?));
        }
        Ok(base)
    }

    fn signed_rational(&mut self) -> Result<Rational, ParseError> {
        let neg = self.eat('-');
        let mut q = match self.bump() {
            Tok::Num(q) => q,
            _ => {
                self.pos -= 1;
                return Err(self.error(&["number"]));
            }
        };
        if self.eat('/') {
            match self.peek().clone() {
                Tok::Num(d) if d != 0 => {
                    self.bump();
                    q /= d;
                }
                _ => return Err(self.error(&["nonzero number"])),
            }
        }
        Ok(if neg { -q } else { q })
    }

    fn args(&mut self, n: usize) -> Result<Vec<Expr>, ParseError> {
        self.expect('(')?;
        let mut out = vec![self.expr()?];
        while out.len() < n {
            self.expect(',')?;
            out.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Num(q) => {
                self.bump();
                Ok(Expr::constant(q))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                self.ident(&name)
            }
            _ => Err(self.error(EXPR_START)),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Expr, ParseError> {
        match name {
            "exp" => Ok(Expr::exp(self.args(1)?.remove(0))),
            "log" => Ok(Expr::log(self.args(1)?.remove(0))),
            "sqrt" => Ok(Expr::pow(self.args(1)?.remove(0), Expr::constant(Rational::from((1, 2))))),
            "pow" => {
                let mut a = self.args(2)?;
                let e = a.pop().expect("two args");
                Ok(Expr::pow(a.pop().expect("two args"), e))
            }
            "sin" | "cos" => {
                let (lo, hi) = if self.eat('[') {
                    let lo = self.signed_rational()?;
                    self.expect(',')?;
                    let hi = self.signed_rational()?;
                    self.expect(']')?;
                    if lo > hi {
                        return Err(self.error(&["nonempty domain"]));
                    }
                    (lo, hi)
                } else {
                    default_trig_domain()
                };
                let a = self.args(1)?.remove(0);
                Ok(if name == "sin" {
                    Expr::sin(a, lo, hi)
                } else {
                    Expr::cos(a, lo, hi)
                })
            }
            "e" => Ok(Expr::new(Node::Named(NamedConst::E))),
            "pi" => Ok(Expr::new(Node::Named(NamedConst::Pi))),
            _ => {
                if let Some(i) = indexed(name, 'x') {
                    Ok(Expr::var(i))
                } else if let Some(j) = indexed(name, 'f').or_else(|| indexed(name, 'y')) {
                    Ok(Expr::chain(j))
                } else {
                    Ok(Expr::param(name))
                }
            }
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.error(&["operator", "end of input"]));
    }
    Ok(e)
}
