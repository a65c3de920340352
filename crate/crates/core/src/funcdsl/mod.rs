//! Expression language for the definable functions used by the experiments:
//! parsing, rigorous evaluation, symbolic differentiation and membership oracles.

mod compiled;
mod diff;
mod enclosure;
mod eval;
mod membership;
mod parse;

use rug::ops::Pow;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::rationals::Rational;

pub use compiled::{pair_interval, F64Program};
pub use diff::{diff, diff_in, diff_multi, substitute, DiffError};
pub use enclosure::{Enclosure, F64Interval, LogFailure, MpInterval};
pub use eval::{eval_f64, eval_rigorous, eval_with, Env, EvalError, RigorousValue, Val53, MAX_PRECISION};
pub use membership::{BuildError, GraphFibre, MembershipOracle, ToleranceMode};
pub use parse::{parse, ParseError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NamedConst {
    E,
    Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trig {
    Sin,
    Cos,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const(Rational),
    Named(NamedConst),
    /// `x_i`, 1-based.
    Var(usize),
    Param(String),
    /// Chain function `f_j`, 1-based.
    Chain(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Apply(Func, Expr),
    /// Restricted sine or cosine with its closed domain.
    Trig(Trig, Expr, Rational, Rational),
}

/// Immutable, cheaply cloneable expression DAG.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expr(Arc<Node>);

/// Domain used for `sin(e)` / `cos(e)` written without an explicit `[lo,hi]`.
pub fn default_trig_domain() -> (Rational, Rational) {
    (Rational::from(-4), Rational::from(4))
}

impl Expr {
    pub fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    pub(crate) fn shared(&self) -> bool {
        Arc::strong_count(&self.0) > 1
    }

    pub fn constant(q: impl Into<Rational>) -> Self {
        Expr::new(Node::Const(q.into()))
    }

    pub fn int(v: i64) -> Self {
        Expr::constant(Rational::from(v))
    }

    pub fn var(i: usize) -> Self {
        assert!(i >= 1, "variables are 1-based");
        Expr::new(Node::Var(i))
    }

    pub fn param(name: &str) -> Self {
        Expr::new(Node::Param(name.to_string()))
    }

    pub fn chain(j: usize) -> Self {
        assert!(j >= 1, "chain functions are 1-based");
        Expr::new(Node::Chain(j))
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self.node() {
            Node::Const(q) => Some(q),
            _ => None,
        }
    }

    fn is_const(&self, v: i32) -> bool {
        self.as_const().is_some_and(|q| *q == v)
    }

    pub fn neg(a: Expr) -> Expr {
        match a.node() {
            Node::Const(q) => Expr::constant(Rational::from(-q)),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::new(Node::Neg(a)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_const(0) {
            return b;
        }
        if b.is_const(0) {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(Rational::from(x + y));
        }
        Expr::new(Node::Add(a, b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_const(0) {
            return a;
        }
        if a.is_const(0) {
            return Expr::neg(b);
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(Rational::from(x - y));
        }
        Expr::new(Node::Sub(a, b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_const(0) || b.is_const(0) {
            return Expr::int(0);
        }
        if a.is_const(1) {
            return b;
        }
        if b.is_const(1) {
            return a;
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            return Expr::constant(Rational::from(x * y));
        }
        Expr::new(Node::Mul(a, b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if b.is_const(1) {
            return a;
        }
        if a.is_const(0) && !b.is_const(0) {
            return Expr::int(0);
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if *y != 0 {
                return Expr::constant(Rational::from(x / y));
            }
        }
        Expr::new(Node::Div(a, b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if b.is_const(0) {
            return Expr::int(1);
        }
        if b.is_const(1) {
            return a;
        }
        if a.is_const(1) {
            return Expr::int(1);
        }
        if let (Some(x), Some(y)) = (a.as_const(), b.as_const()) {
            if y.denom() == &1u32 && *x != 0 {
                if let Some(k) = y.numer().to_i32() {
                    if k.unsigned_abs() <= 64 {
                        return Expr::constant(pow_rational(x, k));
                    }
                }
            }
        }
        Expr::new(Node::Pow(a, b))
    }

    pub fn exp(a: Expr) -> Expr {
        if a.is_const(0) {
            return Expr::int(1);
        }
        Expr::new(Node::Apply(Func::Exp, a))
    }

    pub fn log(a: Expr) -> Expr {
        if a.is_const(1) {
            return Expr::int(0);
        }
        Expr::new(Node::Apply(Func::Log, a))
    }

    pub fn sin(a: Expr, lo: Rational, hi: Rational) -> Expr {
        if a.is_const(0) && lo <= 0 && hi >= 0 {
            return Expr::int(0);
        }
        Expr::new(Node::Trig(Trig::Sin, a, lo, hi))
    }

    pub fn cos(a: Expr, lo: Rational, hi: Rational) -> Expr {
        if a.is_const(0) && lo <= 0 && hi >= 0 {
            return Expr::int(1);
        }
        Expr::new(Node::Trig(Trig::Cos, a, lo, hi))
    }

    /// Largest variable index used (0 if none).
    pub fn max_var(&self) -> usize {
        let mut best = 0;
        self.visit(&mut |n| {
            if let Node::Var(i) = n {
                best = best.max(*i);
            }
        });
        best
    }

    /// Largest chain index used (0 if none).
    pub fn max_chain(&self) -> usize {
        let mut best = 0;
        self.visit(&mut |n| {
            if let Node::Chain(j) = n {
                best = best.max(*j);
            }
        });
        best
    }

    pub fn params(&self) -> Vec<String> {
        let mut out = std::collections::BTreeSet::new();
        self.visit(&mut |n| {
            if let Node::Param(p) = n {
                out.insert(p.clone());
            }
        });
        out.into_iter().collect()
    }

    fn visit(&self, f: &mut impl FnMut(&Node)) {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            f(e.node());
            stack.extend(e.children().into_iter().cloned());
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Named(_) | Node::Var(_) | Node::Param(_) | Node::Chain(_) => {
                vec![]
            }
            Node::Neg(a) | Node::Apply(_, a) | Node::Trig(_, a, _, _) => vec![a],
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                vec![a, b]
            }
        }
    }

    /// Number of distinct nodes in the DAG.
    pub fn dag_size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }

    /// Joint degree in the variables and chain references when the expression is
    /// a polynomial in them (parameters and named constants count as degree 0).
    pub fn poly_degree(&self) -> Option<u32> {
        match self.node() {
            Node::Const(_) | Node::Named(_) | Node::Param(_) => Some(0),
            Node::Var(_) | Node::Chain(_) => Some(1),
            Node::Neg(a) => a.poly_degree(),
            Node::Add(a, b) | Node::Sub(a, b) => Some(a.poly_degree()?.max(b.poly_degree()?)),
            Node::Mul(a, b) => Some(a.poly_degree()? + b.poly_degree()?),
            Node::Div(a, b) => {
                if b.poly_degree()? == 0 {
                    a.poly_degree()
                } else {
                    None
                }
            }
            Node::Pow(a, b) => {
                let k = b.as_const()?;
                if k.denom() != &1u32 || *k < 0 {
                    return None;
                }
                Some(a.poly_degree()? * k.numer().to_u32()?)
            }
            Node::Apply(..) | Node::Trig(..) => {
                if self.max_var() == 0 && self.max_chain() == 0 {
                    Some(0)
                } else {
                    None
                }
            }
        }
    }
}

pub(crate) fn pow_rational(x: &Rational, k: i32) -> Rational {
    let mut r = Rational::from(Pow::pow(x, k.unsigned_abs() as i32));
    if k < 0 {
        r.recip_mut();
    }
    r
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

// Precedence levels: 1 additive, 2 multiplicative, 3 unary minus, 4 atom.
fn prec_of(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        _ => 4,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if prec_of(e.node()) < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, q: &Rational) -> fmt::Result {
    if *q < 0 || q.denom() != &1u32 {
        write!(f, "({q})")
    } else {
        write!(f, "{q}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(q) => write_const(f, q),
            Node::Named(NamedConst::E) => write!(f, "e"),
            Node::Named(NamedConst::Pi) => write!(f, "pi"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Param(p) => write!(f, "{p}"),
            Node::Chain(j) => write!(f, "f{j}"),
            Node::Neg(a) => {
                write!(f, "-")?;
                write_at(f, a, 4)
            }
            Node::Add(a, b) => {
                write_at(f, a, 1)?;
                write!(f, " + ")?;
                write_at(f, b, 2)
            }
            Node::Sub(a, b) => {
                write_at(f, a, 1)?;
                write!(f, " - ")?;
                write_at(f, b, 2)
            }
            Node::Mul(a, b) => {
                write_at(f, a, 2)?;
                write!(f, "*")?;
                write_at(f, b, 3)
            }
            Node::Div(a, b) => {
                write_at(f, a, 2)?;
                write!(f, "/")?;
                write_at(f, b, 3)
            }
            Node::Pow(a, b) => write!(f, "pow({a}, {b})"),
            Node::Apply(Func::Exp, a) => write!(f, "exp({a})"),
            Node::Apply(Func::Log, a) => write!(f, "log({a})"),
            Node::Trig(t, a, lo, hi) => {
                let name = match t {
                    Trig::Sin => "sin",
                    Trig::Cos => "cos",
                };
                write!(f, "{name}[{lo},{hi}]({a})")
            }
        }
    }
}

/// Parameter bindings for evaluation.
pub type Params = BTreeMap<String, Rational>;

/// A Pfaffian chain: `∂f_j/∂x_i = g[i][j](x, f_1, …, f_j)`.
#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub n: usize,
    pub order: usize,
    pub degree: u32,
    pub domain: SimpleDomain,
    /// `g[i][j]` for variable `i` and chain function `j`, both 0-based here.
    pub g: Vec<Vec<Expr>>,
}

/// The simple domains allowed for Pfaffian chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimpleDomain {
    Plane,
    OpenUnitBox,
    PositiveOrthant,
    OpenUnitBall,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("g[{i}][{j}] has shape mismatch")]
    Shape { i: usize, j: usize },
    #[error("g[{i}][{j}] uses x{var} beyond dimension")]
    VarOutOfRange { i: usize, j: usize, var: usize },
    #[error("g[{i}][{j}] refers to f{chain}, later in the chain")]
    NotTriangular { i: usize, j: usize, chain: usize },
    #[error("g[{i}][{j}] is not a polynomial of degree at most {alpha}")]
    Degree { i: usize, j: usize, alpha: u32 },
}

impl ChainSpec {
    pub fn new(n: usize, degree: u32, domain: SimpleDomain, g: Vec<Vec<Expr>>) -> Result<Self, ChainError> {
        let order = g.first().map_or(0, Vec::len);
        for (i, row) in g.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if row.len() != order {
                    return Err(ChainError::Shape { i, j });
                }
                let v = e.max_var();
                if v > n {
                    return Err(ChainError::VarOutOfRange { i, j, var: v });
                }
                let c = e.max_chain();
                if c > j + 1 {
                    return Err(ChainError::NotTriangular { i, j, chain: c });
                }
                match e.poly_degree() {
                    Some(d) if d <= degree => {}
                    _ => return Err(ChainError::Degree { i, j, alpha: degree }),
                }
            }
        }
        if g.len() != n && order > 0 {
            return Err(ChainError::Shape { i: g.len(), j: 0 });
        }
        Ok(ChainSpec {
            n,
            order,
            degree,
            domain,
            g,
        })
    }

    /// The one-variable chain `f' = g(x, f)`.
    pub fn single(degree: u32, domain: SimpleDomain, g: Expr) -> Result<Self, ChainError> {
        ChainSpec::new(1, degree, domain, vec![vec![g]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_fold() {
        let x = Expr::var(1);
        assert_eq!(Expr::mul(Expr::int(1), x.clone()), x);
        assert_eq!(Expr::add(x.clone(), Expr::int(0)), x);
        assert_eq!(Expr::mul(Expr::int(0), x.clone()), Expr::int(0));
        assert_eq!(Expr::add(Expr::int(2), Expr::int(3)), Expr::int(5));
        assert_eq!(Expr::neg(Expr::neg(x.clone())), x);
        assert_eq!(Expr::pow(Expr::int(2), Expr::int(-2)).as_const().unwrap(), &Rational::from((1, 4)));
    }

    #[test]
    fn degree() {
        let e = parse("x1*x2 + pow(f1, 2)*x1 - t").unwrap();
        assert_eq!(e.poly_degree(), Some(3));
        assert_eq!(parse("exp(x1)").unwrap().poly_degree(), None);
        assert_eq!(parse("x1/2").unwrap().poly_degree(), Some(1));
    }

    #[test]
    fn chain_validation() {
        let ok = ChainSpec::single(1, SimpleDomain::Plane, parse("f1").unwrap());
        assert!(ok.is_ok());
        let later = ChainSpec::new(
            1,
            2,
            SimpleDomain::Plane,
            vec![vec![parse("f2").unwrap(), parse("f2*f1").unwrap()]],
        );
        assert!(matches!(later, Err(ChainError::NotTriangular { .. })));
        let deg = ChainSpec::single(1, SimpleDomain::Plane, parse("f1*f1").unwrap());
        assert!(matches!(deg, Err(ChainError::Degree { .. })));
    }
}
