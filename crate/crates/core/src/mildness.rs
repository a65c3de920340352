//! Certificates for (weakly) mild functions and their propagation through
//! rescaling, power substitution, composition and roots.
//!
//! A cert `(A, C, r)` claims `|f^(α)(x)| ≤ α!(A|α|^C)^|α|` for `|α| ≤ r`,
//! with `0^0 = 1`; a weak cert divides the right side by `x^α`. The explicit
//! constants are derived in `docs/mildness.md`.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use rug::float::Round;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use thiserror::Error;

use crate::funcdsl::{
    diff, eval_rigorous, DiffError, Enclosure, EvalError, Expr, F64Interval, F64Program, Params, RigorousValue,
    MAX_PRECISION,
};
use crate::multiidx::{enumerate_delta, MultiIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MildError {
    #[error("exponent L_{index} = {l} is below the target order {r}")]
    ExponentBelowOrder { index: usize, l: u32, r: u32 },
    #[error("certificate order {have} is below the requested order {want}")]
    OrderTooSmall { have: Order, want: u32 },
    #[error("expected a {expected} certificate")]
    WrongKind { expected: &'static str },
    #[error("epsilon must be positive")]
    NonPositiveEpsilon,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("precision exhausted")]
    PrecisionExhausted,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Order {
    Finite(u32),
    Infinite,
}

impl Order {
    pub fn covers(self, r: u32) -> bool {
        match self {
            Order::Finite(k) => k >= r,
            Order::Infinite => true,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(k) => write!(f, "{k}"),
            Order::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MildCert {
    pub a: Rational,
    pub c: Rational,
    pub order: Order,
    pub weak: bool,
    pub m: usize,
    pub derivation: String,
}

impl MildCert {
    pub fn new(a: Rational, c: Rational, order: Order, weak: bool, m: usize) -> Self {
        assert!(a > 0 && c >= 0, "A > 0 and C ≥ 0");
        assert!(m >= 1);
        MildCert {
            a,
            c,
            order,
            weak,
            m,
            derivation: "given".into(),
        }
    }

    pub fn mild(a: impl Into<Rational>, c: impl Into<Rational>, order: Order, m: usize) -> Self {
        Self::new(a.into(), c.into(), order, false, m)
    }

    pub fn weakly_mild(a: impl Into<Rational>, c: impl Into<Rational>, order: Order, m: usize) -> Self {
        Self::new(a.into(), c.into(), order, true, m)
    }

    fn tagged(mut self, tag: String) -> Self {
        self.derivation = tag;
        self
    }

    /// Every function satisfying `other` satisfies `self`.
    pub fn dominates(&self, other: &MildCert) -> bool {
        self.m == other.m
            && self.a >= other.a
            && self.c >= other.c
            && other.order >= self.order
            && (self.weak || !other.weak)
    }

    /// Lower bound on `α!(A|α|^C)^|α|`, exact when `C` is an integer.
    pub fn constant_lower(&self, alpha: &MultiIndex) -> Rational {
        let n = alpha.degree();
        if n == 0 {
            return Rational::from(1);
        }
        let base = Rational::from(&self.a * pow_lower(n, &self.c));
        Rational::from(alpha.factorial()) * base.pow(n as u32)
    }
}

/// Lower bound on `n^c` for `n ≥ 1`.
fn pow_lower(n: u64, c: &Rational) -> Rational {
    if *c.denom() == 1 {
        return Rational::from(Integer::from(n).pow(c.numer().to_u32().expect("moderate C")));
    }
    let prec = 128;
    let c_lo = Float::with_val_round(prec, c, Round::Down).0;
    let v = Float::with_val_round(prec, Float::with_val(prec, n).pow(&c_lo), Round::Down).0;
    v.to_rational().expect("finite")
}

/// Upper bound on `n^c` for `n ≥ 1`.
fn pow_upper(n: u64, c: &Rational) -> Rational {
    if *c.denom() == 1 {
        return pow_lower(n, c);
    }
    let prec = 128;
    let c_hi = Float::with_val_round(prec, c, Round::Up).0;
    let v = Float::with_val_round(prec, Float::with_val(prec, n).pow(&c_hi), Round::Up).0;
    v.to_rational().expect("finite")
}

/// Number of terms, counted with their integer coefficients, in the
/// Faà di Bruno expansion of `∂^ν (f∘g)` with `g: R^d → R^m`, `|ν| = n`:
/// `n^n · (n+1)^(1 + m + nm + nd)`.
pub fn bruno_term_bound(m: usize, d: usize, n: u32) -> Integer {
    assert!(m >= 1 && d >= 1 && n >= 1);
    let slots = 1 + m as u32 + n * m as u32 + n * d as u32;
    Integer::from(n).pow(n) * Integer::from(n + 1).pow(slots)
}

/// `(A_B, C_B)` with `bruno_term_bound(m, d, n) ≤ (A_B n^C_B)^n` for all `n ≥ 1`.
pub fn bruno_constants(m: usize, d: usize) -> (Integer, u32) {
    let e = 1 + 2 * m as u32 + d as u32;
    (Integer::from(1) << e, e + 1)
}

/// Scale `s` with `x ↦ f(x/s)` of C^r-norm at most 1. Rounded up when
/// `C` is not an integer.
pub fn rescale_to_unit(cert: &MildCert, r: u32) -> Result<Rational, MildError> {
    if cert.weak {
        return Err(MildError::WrongKind { expected: "mild" });
    }
    if !cert.order.covers(r) {
        return Err(MildError::OrderTooSmall { have: cert.order, want: r });
    }
    Ok(Rational::from(&cert.a * pow_upper(r as u64, &(Rational::from(1) + &cert.c))))
}

fn at_least_one(q: &Rational) -> Rational {
    if *q < 1 {
        Rational::from(1)
    } else {
        q.clone()
    }
}

fn order_min(a: Order, b: Order) -> Order {
    a.min(b)
}

/// Cert for `x ↦ f(x_1^L_1, …, x_m^L_m)` up to order `r`, given a weak
/// cert valid for `f` and for each first partial of `f`.
pub fn substitute_powers(cert: &MildCert, l: &[u32], r: u32) -> Result<MildCert, MildError> {
    if l.len() != cert.m {
        return Err(MildError::DimensionMismatch(format!(
            "{} exponents for a function of {} variables",
            l.len(),
            cert.m
        )));
    }
    if r == 0 {
        return Err(MildError::Precondition("target order must be positive".into()));
    }
    if let Some((index, &li)) = l.iter().enumerate().find(|(_, &li)| li < r) {
        return Err(MildError::ExponentBelowOrder { index: index + 1, l: li, r });
    }
    if !cert.order.covers(r) {
        return Err(MildError::OrderTooSmall { have: cert.order, want: r });
    }
    let (ab, cb) = bruno_constants(cert.m, cert.m);
    let l_max = *l.iter().max().expect("m ≥ 1");
    let a = Rational::from(ab * l_max) * at_least_one(&cert.a);
    let c = Rational::from(cb + 1) + &cert.c;
    Ok(MildCert::new(a, c, Order::Finite(r), false, cert.m).tagged(format!(
        "substitute_powers(L={l:?}, r={r}) of [{}]",
        cert.derivation
    )))
}

/// Weak cert for `f∘g`, where `f` on `(0,1)^m` is mild and `g` from
/// `(0,1)^d` is weakly mild, up to `min(r, both orders)`.
pub fn compose_certs(f_cert: &MildCert, g_cert: &MildCert, r: Order) -> Result<MildCert, MildError> {
    if f_cert.weak {
        return Err(MildError::WrongKind { expected: "mild" });
    }
    let (m, d) = (f_cert.m, g_cert.m);
    let (ab, cb) = bruno_constants(m, d);
    let a = Rational::from(ab) * at_least_one(&f_cert.a) * at_least_one(&g_cert.a);
    let c = Rational::from(cb + 1) + &f_cert.c + &g_cert.c;
    let order = order_min(r, order_min(f_cert.order, g_cert.order));
    Ok(MildCert::new(a, c, order, true, d).tagged(format!(
        "compose([{}], [{}])",
        f_cert.derivation, g_cert.derivation
    )))
}

/// A polynomial in one variable with nonnegative rational coefficients,
/// lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly(pub Vec<Rational>);

impl Poly {
    pub fn eval(&self, x: u32) -> Rational {
        let mut acc = Rational::new();
        for c in self.0.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RootCert {
    pub a_poly: Poly,
    pub c_poly: Poly,
    pub cert: MildCert,
}

/// Weak cert for `f^(1/ℓ)` where `f > ε` is weakly mild; with
/// `include_partial = Some(i)` it also covers `ε·∂_i f^(1/ℓ)`, provided the
/// input cert also holds for `∂_i f`.
pub fn root_cert(cert: &MildCert, eps: &Rational, ell: u32, include_partial: Option<usize>) -> Result<RootCert, MildError> {
    if *eps <= 0 {
        return Err(MildError::NonPositiveEpsilon);
    }
    if *eps >= 1 {
        return Err(MildError::Precondition("f takes values in (0,1), so ε < 1".into()));
    }
    if ell == 0 {
        return Err(MildError::Precondition("root order must be positive".into()));
    }
    if let Some(i) = include_partial {
        if i == 0 || i > cert.m {
            return Err(MildError::DimensionMismatch(format!("partial index {i} outside 1..={}", cert.m)));
        }
    }
    // y ↦ y^(1/ℓ) and y ↦ (ε/ℓ)·y^(1/ℓ−1) are (1/ε, 0)-mild on (ε, 1)
    let outer = MildCert::mild(at_least_one(&Rational::from(eps.recip_ref())), 0, Order::Infinite, 1);
    let composed = compose_certs(&outer, cert, Order::Infinite)?;
    let (a, c) = match include_partial {
        None => (composed.a, composed.c),
        // Leibniz product with ∂_i f: at most 2^(m|ν|) terms
        Some(_) => (composed.a * Rational::from(Integer::from(1) << cert.m as u32), composed.c),
    };
    let tag = match include_partial {
        None => format!("root(ℓ={ell}, ε={eps}) of [{}]", cert.derivation),
        Some(i) => format!("root_partial(ℓ={ell}, ε={eps}, i={i}) of [{}]", cert.derivation),
    };
    Ok(RootCert {
        a_poly: Poly(vec![a.clone()]),
        c_poly: Poly(vec![c.clone()]),
        cert: MildCert::new(a, c, cert.order, true, cert.m).tagged(tag),
    })
}

/// Weak cert for the bounded monomial `x^μ` on `(0,1)^m`: `C = max μ_i`,
/// `A = max(1, C)`.
pub fn monomial_cert(mu: &[Rational]) -> Result<MildCert, MildError> {
    if mu.is_empty() {
        return Err(MildError::DimensionMismatch("empty exponent vector".into()));
    }
    if mu.iter().any(|q| *q < 0) {
        return Err(MildError::Precondition("x^μ is unbounded on (0,1)^m when some μ_i < 0".into()));
    }
    let c = mu.iter().max().expect("nonempty").clone();
    let a = at_least_one(&c);
    let tag = format!(
        "monomial({})",
        mu.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(",")
    );
    Ok(MildCert::new(a, c, Order::Infinite, true, mu.len()).tagged(tag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub alpha: MultiIndex,
    pub point: Vec<Rational>,
    /// `|f^(α)(x)|` over the bound, approximately.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub worst: Option<Witness>,
    pub checks: usize,
}

/// All `∂^α f` with `|α| ≤ max_order`, in graded-lex order.
pub fn derivative_table(f: &Expr, m: usize, max_order: u32) -> Result<Vec<(MultiIndex, Expr)>, MildError> {
    let mut table: HashMap<Vec<u32>, Expr> = HashMap::new();
    let mut out = Vec::new();
    for alpha in enumerate_delta(m, max_order) {
        let e = match alpha.0.iter().position(|&k| k > 0) {
            None => f.clone(),
            Some(i) => {
                let mut prev = alpha.0.clone();
                prev[i] -= 1;
                diff(&table[&prev], i + 1)?
            }
        };
        table.insert(alpha.0.clone(), e.clone());
        out.push((alpha, e));
    }
    Ok(out)
}

enum Check {
    Pass(f64),
    Fail(f64),
}

fn abs_lower(v: &RigorousValue) -> Rational {
    let (lo, hi) = v.bounds();
    if lo > 0 {
        lo
    } else if hi < 0 {
        -hi
    } else {
        Rational::new()
    }
}

/// Decides the bound from the compiled double-precision program when the
/// enclosure is tight enough.
fn check_fast(prog: &F64Program, point: &[Rational], bound: &Rational) -> Option<Check> {
    let x: Vec<F64Interval> = point
        .iter()
        .map(|q| F64Interval::from_rational(q, 53))
        .collect::<Option<_>>()?;
    let v = prog.eval(&x, &mut Vec::new())?;
    let upper = Rational::from_f64(v.lo.abs().max(v.hi.abs()))?;
    if upper <= *bound {
        let ratio = if *bound == 0 { 0.0 } else { (upper / bound).to_f64() };
        return Some(Check::Pass(ratio));
    }
    let lower = if v.lo > 0.0 {
        v.lo
    } else if v.hi < 0.0 {
        -v.hi
    } else {
        0.0
    };
    let lower = Rational::from_f64(lower)?;
    (lower > *bound).then(|| {
        let ratio = if *bound == 0 { f64::INFINITY } else { (lower / bound).to_f64() };
        Check::Fail(ratio)
    })
}

fn check_one(e: &Expr, prog: &F64Program, point: &[Rational], bound: &Rational) -> Result<Check, MildError> {
    if let Some(c) = check_fast(prog, point, bound) {
        return Ok(c);
    }
    let mut prec = 64;
    loop {
        match eval_rigorous(e, point, prec) {
            Ok(v) => {
                let upper = v.abs_upper();
                if upper <= *bound {
                    let ratio = if *bound == 0 { 0.0 } else { (upper / bound).to_f64() };
                    return Ok(Check::Pass(ratio));
                }
                let lower = abs_lower(&v);
                if lower > *bound {
                    let ratio = if *bound == 0 { f64::INFINITY } else { (lower / bound).to_f64() };
                    return Ok(Check::Fail(ratio));
                }
            }
            Err(EvalError::PrecisionExhausted) => {}
            Err(e) => return Err(e.into()),
        }
        if prec >= MAX_PRECISION {
            return Err(MildError::PrecisionExhausted);
        }
        prec = (prec * 2).max(64);
    }
}

/// Checks `|∂^α f(x)| ≤ bound(α, x)` over the grid. The worst witness has
/// the largest ratio, ties going to the earliest `(α, point)` pair.
fn check_bounds(
    f: &Expr,
    m: usize,
    grid: &[Vec<Rational>],
    max_order: u32,
    bound: impl Fn(&MultiIndex, &[Rational]) -> Rational + Sync,
) -> Result<Verdict, MildError> {
    if let Some(p) = grid.iter().find(|p| p.len() != m) {
        return Err(MildError::DimensionMismatch(format!("grid point of dimension {} for m = {m}", p.len())));
    }
    let table = derivative_table(f, m, max_order)?;
    let params = Params::new();
    let progs: Vec<F64Program> = table.par_iter().map(|(_, e)| F64Program::compile(e, &params)).collect();
    let jobs: Vec<(usize, usize)> = (0..table.len())
        .flat_map(|a| (0..grid.len()).map(move |p| (a, p)))
        .collect();
    let results: Vec<Result<Check, MildError>> = jobs
        .par_iter()
        .map(|&(a, p)| {
            let (alpha, e) = &table[a];
            check_one(e, &progs[a], &grid[p], &bound(alpha, &grid[p]))
        })
        .collect();
    let mut worst_pass: Option<(f64, usize)> = None;
    let mut worst_fail: Option<(f64, usize)> = None;
    for (j, r) in results.into_iter().enumerate() {
        let (slot, ratio) = match r? {
            Check::Pass(x) => (&mut worst_pass, x),
            Check::Fail(x) => (&mut worst_fail, x),
        };
        if slot.map_or(true, |(best, _)| ratio > best) {
            *slot = Some((ratio, j));
        }
    }
    let passed = worst_fail.is_none();
    let worst = worst_fail.or(worst_pass).map(|(ratio, j)| {
        let (a, p) = jobs[j];
        Witness {
            alpha: table[a].0.clone(),
            point: grid[p].clone(),
            ratio,
        }
    });
    Ok(Verdict {
        passed,
        worst,
        checks: jobs.len(),
    })
}

/// Directly checks the cert inequality for every `|α| ≤ max_order` at every
/// grid point. A pass is certified by outward-rounded enclosures.
pub fn verify_cert(f: &Expr, cert: &MildCert, grid: &[Vec<Rational>], max_order: u32) -> Result<Verdict, MildError> {
    if !cert.order.covers(max_order) {
        return Err(MildError::OrderTooSmall { have: cert.order, want: max_order });
    }
    if cert.weak {
        if let Some(p) = grid.iter().find(|p| p.iter().any(|x| *x <= 0 || *x >= 1)) {
            return Err(MildError::Precondition(format!("weak certs live on (0,1)^m, got {p:?}")));
        }
    }
    let constants: HashMap<Vec<u32>, Rational> = enumerate_delta(cert.m, max_order)
        .into_iter()
        .map(|alpha| {
            let k = cert.constant_lower(&alpha);
            (alpha.0, k)
        })
        .collect();
    check_bounds(f, cert.m, grid, max_order, |alpha, x| {
        let k = constants[&alpha.0].clone();
        if !cert.weak {
            return k;
        }
        let mut xa = Rational::from(1);
        for (xi, &ai) in x.iter().zip(&alpha.0) {
            xa *= Rational::from(xi.pow(ai));
        }
        k / xa
    })
}

/// Checks that every derivative of order `≤ r` is bounded by 1 on the grid.
pub fn verify_unit_norm(f: &Expr, m: usize, grid: &[Vec<Rational>], r: u32) -> Result<Verdict, MildError> {
    check_bounds(f, m, grid, r, |_, _| Rational::from(1))
}

/// The interior grid `{k/(n+1) : 1 ≤ k ≤ n}^m` of `(0,1)^m`, scaled by `s`.
pub fn interior_grid(m: usize, n: u32, s: &Rational) -> Vec<Vec<Rational>> {
    let axis: Vec<Rational> = (1..=n).map(|k| Rational::from((k, n + 1)) * s).collect();
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |x| {
                    let mut q = p.clone();
                    q.push(x.clone());
                    q
                })
            })
            .collect();
    }
    out
}
