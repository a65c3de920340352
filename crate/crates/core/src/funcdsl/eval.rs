use std::cmp::Ordering;
use rug::ops::Pow;
use std::collections::HashMap;
use std::fmt;

use rug::Float;
use thiserror::Error;

use super::enclosure::{Enclosure, F64Interval, LogFailure, MpInterval};
use super::{pow_rational, Expr, Func, Node, Params, Trig};
use crate::rationals::{Integer, Rational};

/// Precision cap used by refinement loops.
pub const MAX_PRECISION: u32 = 4096;

/// Exact powers are computed only while the result stays below this many bits.
const EXACT_POW_BITS: u64 = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("precision exhausted")]
    PrecisionExhausted,
    #[error("unbound variable x{0}")]
    UnboundVariable(usize),
    #[error("unbound parameter {0}")]
    UnboundParam(String),
    #[error("unbound chain function f{0}")]
    UnboundChain(usize),
}

/// An exact value, or a ball `[mid − rad, mid + rad]` containing the true value.
#[derive(Debug, Clone, PartialEq)]
pub enum RigorousValue {
    Exact(Rational),
    Ball { mid: Float, rad: Float },
}

impl RigorousValue {
    pub fn radius(&self) -> Float {
        match self {
            RigorousValue::Exact(_) => Float::new(53),
            RigorousValue::Ball { rad, .. } => rad.clone(),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, RigorousValue::Exact(_))
    }

    /// Exact rational endpoints of the enclosure.
    pub fn bounds(&self) -> (Rational, Rational) {
        match self {
            RigorousValue::Exact(q) => (q.clone(), q.clone()),
            RigorousValue::Ball { mid, rad } => {
                let m = mid.to_rational().expect("finite midpoint");
                let r = rad.to_rational().expect("finite radius");
                (Rational::from(&m - &r), m + r)
            }
        }
    }

    pub fn contains(&self, q: &Rational) -> bool {
        let (lo, hi) = self.bounds();
        lo <= *q && *q <= hi
    }

    pub fn contains_float(&self, x: &Float) -> bool {
        match x.to_rational() {
            Some(q) => self.contains(&q),
            None => false,
        }
    }

    /// Sign of the value when the enclosure decides it.
    pub fn sign(&self) -> Option<Ordering> {
        match self {
            RigorousValue::Exact(q) => Some(q.cmp0()),
            RigorousValue::Ball { .. } => {
                let (lo, hi) = self.bounds();
                if lo > 0 {
                    Some(Ordering::Greater)
                } else if hi < 0 {
                    Some(Ordering::Less)
                } else {
                    None
                }
            }
        }
    }

    /// Upper bound on `|value|`.
    pub fn abs_upper(&self) -> Rational {
        let (lo, hi) = self.bounds();
        lo.abs().max(hi.abs())
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            RigorousValue::Exact(q) => q.to_f64(),
            RigorousValue::Ball { mid, .. } => mid.to_f64(),
        }
    }
}

impl fmt::Display for RigorousValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RigorousValue::Exact(q) => write!(f, "{q}"),
            RigorousValue::Ball { mid, rad } => write!(f, "{} ± {:.3e}", mid.to_f64(), rad.to_f64()),
        }
    }
}

/// Evaluation context: the point, parameter bindings and chain solutions.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub point: &'a [Rational],
    pub params: Option<&'a Params>,
    pub chain: &'a [Expr],
}

impl<'a> Env<'a> {
    pub fn point(point: &'a [Rational]) -> Self {
        Env {
            point,
            params: None,
            chain: &[],
        }
    }

    pub fn with_params(mut self, params: &'a Params) -> Self {
        self.params = Some(params);
        self
    }

    pub fn with_chain(mut self, chain: &'a [Expr]) -> Self {
        self.chain = chain;
        self
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Val<E> {
    Exact(Rational),
    Approx(E),
}

fn approx<E: Enclosure>(v: &Val<E>, prec: u32) -> Result<E, EvalError> {
    match v {
        Val::Exact(q) => E::from_rational(q, prec).ok_or(EvalError::PrecisionExhausted),
        Val::Approx(e) => Ok(e.clone()),
    }
}

fn fin<E: Enclosure>(e: E) -> Result<Val<E>, EvalError> {
    if e.is_finite() {
        Ok(Val::Approx(e))
    } else {
        Err(EvalError::PrecisionExhausted)
    }
}

/// `b^(p/q)` when it is rational; `b > 0`, `q > 1`.
fn exact_root_pow(b: &Rational, y: &Rational) -> Option<Rational> {
    let q = y.denom().to_u32()?;
    let (n, d) = (b.numer(), b.denom());
    let root = |v: &Integer| -> Option<Integer> {
        if *v == 1 {
            return Some(Integer::from(1));
        }
        if u64::from(v.significant_bits()) <= u64::from(q) {
            return None;
        }
        let r = Integer::from(v.root_ref(q));
        (Integer::from(Pow::pow(&r, q)) == *v).then_some(r)
    };
    let base = Rational::from((root(n)?, root(d)?));
    let k = y.numer().to_i32()?;
    if u64::from(k.unsigned_abs()) * u64::from(base.numer().significant_bits().max(base.denom().significant_bits())) > EXACT_POW_BITS {
        return None;
    }
    Some(pow_rational(&base, k))
}

fn domain(msg: impl Into<String>) -> EvalError {
    EvalError::DomainViolation(msg.into())
}

pub(crate) fn eval_val<E: Enclosure>(
    e: &Expr,
    env: &Env,
    prec: u32,
    memo: &mut HashMap<*const Node, Val<E>>,
) -> Result<Val<E>, EvalError> {
    let shared = e.shared();
    if shared {
        if let Some(v) = memo.get(&e.ptr()) {
            return Ok(v.clone());
        }
    }
    let v = eval_node(e, env, prec, memo)?;
    if shared {
        memo.insert(e.ptr(), v.clone());
    }
    Ok(v)
}

fn eval_node<E: Enclosure>(
    e: &Expr,
    env: &Env,
    prec: u32,
    memo: &mut HashMap<*const Node, Val<E>>,
) -> Result<Val<E>, EvalError> {
    use Val::{Approx, Exact};
    Ok(match e.node() {
        Node::Const(q) => Exact(q.clone()),
        Node::Named(c) => Approx(E::named(*c, prec).ok_or(EvalError::PrecisionExhausted)?),
        Node::Var(i) => Exact(
            env.point
                .get(i - 1)
                .cloned()
                .ok_or(EvalError::UnboundVariable(*i))?,
        ),
        Node::Param(p) => Exact(
            env.params
                .and_then(|m| m.get(p))
                .cloned()
                .ok_or_else(|| EvalError::UnboundParam(p.clone()))?,
        ),
        Node::Chain(j) => {
            let sol = env.chain.get(j - 1).ok_or(EvalError::UnboundChain(*j))?;
            eval_val(sol, env, prec, memo)?
        }
        Node::Neg(a) => match eval_val(a, env, prec, memo)? {
            Exact(q) => Exact(-q),
            Approx(x) => Approx(x.neg()),
        },
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
            let x = eval_val(a, env, prec, memo)?;
            let y = eval_val(b, env, prec, memo)?;
            if let (Exact(p), Exact(q)) = (&x, &y) {
                return Ok(Exact(match e.node() {
                    Node::Add(..) => Rational::from(p + q),
                    Node::Sub(..) => Rational::from(p - q),
                    Node::Mul(..) => Rational::from(p * q),
                    _ => {
                        if *q == 0 {
                            return Err(domain("division by zero"));
                        }
                        Rational::from(p / q)
                    }
                }));
            }
            if let (Node::Mul(..), Exact(z), _) | (Node::Mul(..), _, Exact(z)) = (e.node(), &x, &y) {
                if *z == 0 {
                    return Ok(Exact(Rational::new()));
                }
            }
            if let (Node::Div(..), Exact(z)) = (e.node(), &y) {
                if *z == 0 {
                    return Err(domain("division by zero"));
                }
            }
            let (x, y) = (approx(&x, prec)?, approx(&y, prec)?);
            fin(match e.node() {
                Node::Add(..) => x.add(&y),
                Node::Sub(..) => x.sub(&y),
                Node::Mul(..) => x.mul(&y),
                _ => x.div(&y).ok_or(EvalError::PrecisionExhausted)?,
            })?
        }
        Node::Pow(a, b) => {
            let x = eval_val(a, env, prec, memo)?;
            let y = eval_val(b, env, prec, memo)?;
            eval_pow(x, y, prec)?
        }
        Node::Apply(f, a) => {
            let x = eval_val(a, env, prec, memo)?;
            match (f, x) {
                (Func::Exp, Exact(q)) if q == 0 => Exact(Rational::from(1)),
                (Func::Log, Exact(q)) if q == 1 => Exact(Rational::new()),
                (Func::Log, Exact(q)) if q <= 0 => return Err(domain(format!("log({q})"))),
                (Func::Exp, x) => {
                    fin(approx(&x, prec)?.exp().ok_or(EvalError::PrecisionExhausted)?)?
                }
                (Func::Log, x) => match approx(&x, prec)?.ln() {
                    Ok(r) => fin(r)?,
                    Err(LogFailure::Domain) => return Err(domain("log of a nonpositive value")),
                    Err(LogFailure::Undecided) => return Err(EvalError::PrecisionExhausted),
                },
            }
        }
        Node::Trig(t, a, lo, hi) => {
            let x = eval_val(a, env, prec, memo)?;
            match &x {
                Exact(q) => {
                    if q < lo || q > hi {
                        return Err(domain(format!("{q} outside [{lo}, {hi}]")));
                    }
                    if *q == 0 {
                        return Ok(Exact(Rational::from(u8::from(*t == Trig::Cos))));
                    }
                }
                Approx(i) => {
                    let (l, h) = (i.lo_rational(), i.hi_rational());
                    if h < *lo || l > *hi {
                        return Err(domain(format!("argument outside [{lo}, {hi}]")));
                    }
                    if l < *lo || h > *hi {
                        return Err(EvalError::PrecisionExhausted);
                    }
                }
            }
            let i = approx(&x, prec)?;
            fin(match t {
                Trig::Sin => i.sin(),
                Trig::Cos => i.cos(),
            })?
        }
    })
}

fn eval_pow<E: Enclosure>(x: Val<E>, y: Val<E>, prec: u32) -> Result<Val<E>, EvalError> {
    use Val::{Approx, Exact};
    if let Exact(q) = &y {
        if *q == 0 {
            return Ok(Exact(Rational::from(1)));
        }
    }
    if let Exact(b) = &x {
        if *b == 1 {
            return Ok(Exact(Rational::from(1)));
        }
        if *b == 0 {
            return match &y {
                Exact(q) if *q > 0 => Ok(Exact(Rational::new())),
                Exact(_) => Err(domain("zero to a negative power")),
                Approx(i) if i.positive() => Ok(Exact(Rational::new())),
                Approx(i) if i.negative() => Err(domain("zero to a negative power")),
                Approx(_) => Err(EvalError::PrecisionExhausted),
            };
        }
    }
    match (&x, &y) {
        (Exact(b), Exact(q)) => {
            if q.denom() == &1u32 {
                if let Some(k) = q.numer().to_i32() {
                    let bits = u64::from(b.numer().significant_bits().max(b.denom().significant_bits()));
                    if u64::from(k.unsigned_abs()) * bits <= EXACT_POW_BITS {
                        return Ok(Exact(pow_rational(b, k)));
                    }
                }
            } else if *b < 0 {
                return Err(domain("negative base with non-integer exponent"));
            } else if let Some(r) = exact_root_pow(b, q) {
                return Ok(Exact(r));
            }
        }
        (Approx(_), Exact(q)) if q.denom() == &1u32 => {
            if let Some(k) = q.numer().to_i64() {
                let bx = approx(&x, prec)?;
                return fin(bx.powi(k).ok_or(EvalError::PrecisionExhausted)?);
            }
        }
        _ => {}
    }
    let bx = approx(&x, prec)?;
    if bx.negative() {
        if let Exact(q) = &y {
            if q.denom() == &1u32 {
                return Err(EvalError::PrecisionExhausted);
            }
        }
        return Err(domain("negative base with non-integer exponent"));
    }
    if !bx.positive() {
        return Err(EvalError::PrecisionExhausted);
    }
    let ly = match bx.ln() {
        Ok(l) => l,
        Err(_) => return Err(EvalError::PrecisionExhausted),
    };
    let yy = approx(&y, prec)?;
    fin(ly.mul(&yy).exp().ok_or(EvalError::PrecisionExhausted)?)
}

fn finish<E: Enclosure>(v: Val<E>) -> RigorousValue {
    match v {
        Val::Exact(q) => RigorousValue::Exact(q),
        Val::Approx(i) => {
            let (mid, rad) = i.to_ball();
            RigorousValue::Ball { mid, rad }
        }
    }
}

/// Rigorous evaluation at `precision` bits. Up to 53 bits double-precision
/// intervals are tried first, with MPFR as the fallback.
pub fn eval_with(e: &Expr, env: &Env, precision: u32) -> Result<RigorousValue, EvalError> {
    if precision <= 53 {
        let mut memo = HashMap::new();
        match eval_val::<F64Interval>(e, env, 53, &mut memo) {
            Err(EvalError::PrecisionExhausted) => {}
            r => return r.map(finish),
        }
    }
    let mut memo = HashMap::new();
    eval_val::<MpInterval>(e, env, precision.max(53), &mut memo).map(finish)
}

pub fn eval_rigorous(e: &Expr, point: &[Rational], precision: u32) -> Result<RigorousValue, EvalError> {
    eval_with(e, &Env::point(point), precision)
}

/// Result of the double-precision tier.
#[derive(Debug, Clone)]
pub enum Val53 {
    Exact(Rational),
    Interval(F64Interval),
}

/// Double-precision interval evaluation only, for hot loops.
pub fn eval_f64(e: &Expr, env: &Env) -> Result<Val53, EvalError> {
    let mut memo = HashMap::new();
    Ok(match eval_val::<F64Interval>(e, env, 53, &mut memo)? {
        Val::Exact(q) => Val53::Exact(q),
        Val::Approx(i) => Val53::Interval(i),
    })
}
