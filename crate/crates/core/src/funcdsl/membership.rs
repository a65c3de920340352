use std::cell::RefCell;
use std::cmp::Ordering;
use std::sync::Arc;

use super::compiled::{pair_interval, F64Program};
use super::enclosure::{Enclosure, F64Interval};
use super::eval::{eval_with, Env, EvalError, RigorousValue, MAX_PRECISION};
use super::{Expr, Params};
use crate::rationals::{
    pair_to_rational, rational_height, simplest_in, simplest_in_i128, Integer, Membership, QPoint, Rational,
    Undecided,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToleranceMode {
    /// Only exact rational evaluation decides; any ball is undecided.
    Exact,
    /// Double the working precision from `start` bits until decided or `max` is passed.
    Refine { start: u32, max: u32 },
}

impl Default for ToleranceMode {
    fn default() -> Self {
        ToleranceMode::Refine {
            start: 53,
            max: MAX_PRECISION,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("equation {index} uses x{var}, beyond dimension {dim}")]
    VarOutOfRange { index: usize, var: usize, dim: usize },
    #[error("equation {index} uses unbound parameter {name}")]
    UnboundParam { index: usize, name: String },
    #[error("equation {index} uses chain function f{chain}")]
    ChainRef { index: usize, chain: usize },
}

fn check(e: &Expr, index: usize, dim: usize, params: &Params) -> Result<(), BuildError> {
    let var = e.max_var();
    if var > dim {
        return Err(BuildError::VarOutOfRange { index, var, dim });
    }
    if let Some(name) = e.params().into_iter().find(|p| !params.contains_key(p)) {
        return Err(BuildError::UnboundParam { index, name });
    }
    let chain = e.max_chain();
    if chain > 0 {
        return Err(BuildError::ChainRef { index, chain });
    }
    Ok(())
}

/// Certified predicate for the common zero set of a list of equations.
#[derive(Debug, Clone)]
pub struct MembershipOracle {
    equations: Vec<Expr>,
    params: Params,
    mode: ToleranceMode,
}

/// Outcome of deciding `e(p) = 0`.
fn zero_test(e: &Expr, env: &Env, mode: ToleranceMode) -> Result<bool, Undecided> {
    let (mut prec, max) = match mode {
        ToleranceMode::Exact => (53, 53),
        ToleranceMode::Refine { start, max } => (start, max),
    };
    loop {
        match eval_with(e, env, prec) {
            Ok(RigorousValue::Exact(q)) => return Ok(q == 0),
            Ok(v) => {
                if v.sign().is_some() {
                    return Ok(false);
                }
                if mode == ToleranceMode::Exact {
                    return Err(Undecided);
                }
            }
            Err(EvalError::DomainViolation(_)) => return Ok(false),
            Err(EvalError::PrecisionExhausted) => {}
            Err(_) => return Err(Undecided),
        }
        if prec >= max {
            return Err(Undecided);
        }
        prec = (prec * 2).min(max);
    }
}

impl MembershipOracle {
    pub fn new(
        equations: Vec<Expr>,
        dim: usize,
        params: Params,
        mode: ToleranceMode,
    ) -> Result<Self, BuildError> {
        for (i, e) in equations.iter().enumerate() {
            check(e, i, dim, &params)?;
        }
        Ok(MembershipOracle {
            equations,
            params,
            mode,
        })
    }

    pub fn equations(&self) -> &[Expr] {
        &self.equations
    }
}

impl Membership for MembershipOracle {
    fn decide(&self, p: &QPoint) -> Result<bool, Undecided> {
        let env = Env::point(p.coords()).with_params(&self.params);
        let mut undecided = false;
        for e in &self.equations {
            match zero_test(e, &env, self.mode) {
                Ok(true) => {}
                Ok(false) => return Ok(false),
                Err(Undecided) => undecided = true,
            }
        }
        if undecided {
            Err(Undecided)
        } else {
            Ok(true)
        }
    }
}

/// Points of the graph `x_n = f(x_1, …, x_{n−1})` above a given leading tuple.
#[derive(Debug, Clone)]
pub struct GraphFibre {
    f: Expr,
    params: Params,
    program: Arc<F64Program>,
    max_prec: u32,
}

/// `x` as `(num, den)` with `den` a power of two, when both fit comfortably in `i128`.
fn dyadic(x: f64) -> Option<(i128, i128)> {
    if x == 0.0 {
        return Some((0, 1));
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        return None;
    }
    let mut m = ((bits & ((1u64 << 52) - 1)) | (1u64 << 52)) as i128;
    let mut e = exp - 1075;
    if e < 0 {
        let tz = (m.trailing_zeros() as i32).min(-e);
        m >>= tz;
        e += tz;
    }
    if bits >> 63 == 1 {
        m = -m;
    }
    if e >= 0 {
        (e <= 60).then(|| (m << e, 1))
    } else {
        (-e <= 120).then(|| (m, 1i128 << (-e)))
    }
}

/// Outcome of the double-precision screen.
enum Screen {
    Empty,
    Candidate(Rational),
    Inconclusive,
}

thread_local! {
    static SCRATCH: RefCell<(Vec<F64Interval>, Vec<F64Interval>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

impl GraphFibre {
    pub fn new(f: Expr, lead_dim: usize, params: Params) -> Result<Self, BuildError> {
        check(&f, 0, lead_dim, &params)?;
        let program = Arc::new(F64Program::compile(&f, &params));
        Ok(GraphFibre {
            f,
            params,
            program,
            max_prec: MAX_PRECISION,
        })
    }

    pub fn with_max_precision(mut self, bits: u32) -> Self {
        self.max_prec = bits;
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.f
    }

    /// With an enclosure narrower than `1/(2h²)` there is at most one fraction of
    /// height `≤ h` inside it, found as the simplest fraction.
    fn screen(&self, lead: impl Iterator<Item = F64Interval>, h: u64) -> Screen {
        SCRATCH.with(|s| {
            let (x, scratch) = &mut *s.borrow_mut();
            x.clear();
            x.extend(lead);
            let Some(i) = self.program.eval(x, scratch) else {
                return Screen::Inconclusive;
            };
            let h2 = (h as f64) * (h as f64);
            if !((i.hi - i.lo).next_up() * h2 < 0.5) {
                return Screen::Inconclusive;
            }
            let (Some((p, q)), Some((r, s))) = (dyadic(i.lo), dyadic(i.hi)) else {
                return Screen::Inconclusive;
            };
            match simplest_in_i128(p, q, r, s, h as i128) {
                Some((a, b)) if a.unsigned_abs() <= u128::from(h) => {
                    Screen::Candidate(Rational::from((Integer::from(a), Integer::from(b))))
                }
                _ => Screen::Empty,
            }
        })
    }

    /// Like [`GraphFibre::fibre`] with the leading coordinates as lowest-terms
    /// `(numerator, denominator)` pairs; no big rationals are built unless a
    /// candidate survives the double-precision screen.
    pub fn fibre_pairs(&self, lead: &[(i64, i64)], h: u64) -> Result<Vec<Rational>, Undecided> {
        let screen = self.screen(lead.iter().map(|&p| pair_interval(p)), h);
        if let Screen::Empty = screen {
            return Ok(vec![]);
        }
        let lead: Vec<Rational> = lead.iter().map(|&p| pair_to_rational(p)).collect();
        let env = Env::point(&lead).with_params(&self.params);
        match screen {
            Screen::Candidate(c) => self.certify(&env, c, 53),
            _ => self.refine(&env, h),
        }
    }

    /// Every `y` with `H(y) ≤ h` and `y = f(lead)`, certified.
    pub fn fibre(&self, lead: &[Rational], h: u64) -> Result<Vec<Rational>, Undecided> {
        let env = Env::point(lead).with_params(&self.params);
        let xs: Option<Vec<F64Interval>> = lead.iter().map(|q| F64Interval::from_rational(q, 53)).collect();
        if let Some(xs) = xs {
            match self.screen(xs.into_iter(), h) {
                Screen::Empty => return Ok(vec![]),
                Screen::Candidate(c) => return self.certify(&env, c, 53),
                Screen::Inconclusive => {}
            }
        }
        self.refine(&env, h)
    }

    fn refine(&self, env: &Env, h: u64) -> Result<Vec<Rational>, Undecided> {
        let hz = Integer::from(h);
        let keep = |y: Rational| if rational_height(&y) <= hz { vec![y] } else { vec![] };
        let mut prec = 53;
        loop {
            match eval_with(&self.f, env, prec) {
                Ok(RigorousValue::Exact(y)) => return Ok(keep(y)),
                Ok(v) => {
                    let (lo, hi) = v.bounds();
                    let width = Rational::from(&hi - &lo);
                    if width * Integer::from(&hz * &hz) < 1 {
                        return match simplest_in(&lo, &hi, h) {
                            None => Ok(vec![]),
                            Some(c) if rational_height(&c) > hz => Ok(vec![]),
                            Some(c) => self.certify(env, c, prec),
                        };
                    }
                }
                Err(EvalError::DomainViolation(_)) => return Ok(vec![]),
                Err(EvalError::PrecisionExhausted) => {}
                Err(_) => return Err(Undecided),
            }
            if prec >= self.max_prec {
                return Err(Undecided);
            }
            prec = (prec * 2).min(self.max_prec).max(64);
        }
    }

    /// Decides `f(lead) = c` for the unique candidate `c` in the enclosure.
    fn certify(&self, env: &Env, c: Rational, start: u32) -> Result<Vec<Rational>, Undecided> {
        let mut prec = start;
        loop {
            match eval_with(&self.f, env, prec) {
                Ok(RigorousValue::Exact(y)) => return Ok(if y == c { vec![c] } else { vec![] }),
                Ok(v) => {
                    let (lo, hi) = v.bounds();
                    if lo.cmp(&c) == Ordering::Greater || hi.cmp(&c) == Ordering::Less {
                        return Ok(vec![]);
                    }
                }
                Err(EvalError::DomainViolation(_)) => return Ok(vec![]),
                Err(EvalError::PrecisionExhausted) => {}
                Err(_) => return Err(Undecided),
            }
            if prec >= self.max_prec {
                return Err(Undecided);
            }
            prec = (prec * 2).min(self.max_prec);
        }
    }
}
