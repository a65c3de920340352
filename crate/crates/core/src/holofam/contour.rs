//! Complex evaluation of DSL expressions and argument-principle zero counts.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};

use num_complex::Complex64;
use rug::Rational;

use super::HoloError;
use crate::funcdsl::{diff, Expr, Func, NamedConst, Node, Trig};

/// Evaluates `e` at the complex point `z` (principal branches for `log`
/// and non-integer powers).
pub fn eval_complex(e: &Expr, z: &[Complex64], params: &BTreeMap<String, Rational>) -> Result<Complex64, HoloError> {
    let ev = |a: &Expr| eval_complex(a, z, params);
    Ok(match e.node() {
        Node::Const(q) => Complex64::new(q.to_f64(), 0.0),
        Node::Named(NamedConst::E) => Complex64::new(E, 0.0),
        Node::Named(NamedConst::Pi) => Complex64::new(PI, 0.0),
        Node::Var(i) => *z
            .get(i - 1)
            .ok_or_else(|| HoloError::Unsupported(format!("x{i} beyond {} variables", z.len())))?,
        Node::Param(name) => Complex64::new(
            params
                .get(name)
                .ok_or_else(|| HoloError::Unsupported(format!("unbound parameter {name}")))?
                .to_f64(),
            0.0,
        ),
        Node::Chain(j) => return Err(HoloError::Unsupported(format!("chain function f{j}"))),
        Node::Neg(a) => -ev(a)?,
        Node::Add(a, b) => ev(a)? + ev(b)?,
        Node::Sub(a, b) => ev(a)? - ev(b)?,
        Node::Mul(a, b) => ev(a)? * ev(b)?,
        Node::Div(a, b) => ev(a)? / ev(b)?,
        Node::Pow(a, b) => {
            let base = ev(a)?;
            match b.as_const().filter(|q| *q.denom() == 1).and_then(|q| q.numer().to_i32()) {
                Some(k) => base.powi(k),
                None => base.powc(ev(b)?),
            }
        }
        Node::Apply(Func::Exp, a) => ev(a)?.exp(),
        Node::Apply(Func::Log, a) => ev(a)?.ln(),
        Node::Trig(Trig::Sin, a, _, _) => ev(a)?.sin(),
        Node::Trig(Trig::Cos, a, _, _) => ev(a)?.cos(),
    })
}

/// Value and `z`-derivative of a holomorphic function of one variable.
pub trait Holomorphic1 {
    fn eval_d(&self, z: Complex64) -> Result<(Complex64, Complex64), HoloError>;
}

/// A polynomial `Σ c_k z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly1(pub Vec<Complex64>);

impl Holomorphic1 for Poly1 {
    fn eval_d(&self, z: Complex64) -> Result<(Complex64, Complex64), HoloError> {
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for c in self.0.iter().rev() {
            d = d * z + v;
            v = v * z + c;
        }
        Ok((v, d))
    }
}

/// The slice `z ↦ f(z', z)` of a DSL expression in its last variable.
pub struct ExprSlice<'a> {
    f: Expr,
    df: Expr,
    z_prime: Vec<Complex64>,
    params: &'a BTreeMap<String, Rational>,
}

impl<'a> ExprSlice<'a> {
    pub fn new(f: &Expr, z_prime: &[Complex64], params: &'a BTreeMap<String, Rational>) -> Result<Self, HoloError> {
        let df = diff(f, z_prime.len() + 1)?;
        Ok(ExprSlice {
            f: f.clone(),
            df,
            z_prime: z_prime.to_vec(),
            params,
        })
    }
}

impl Holomorphic1 for ExprSlice<'_> {
    fn eval_d(&self, z: Complex64) -> Result<(Complex64, Complex64), HoloError> {
        let mut p = self.z_prime.clone();
        p.push(z);
        Ok((eval_complex(&self.f, &p, self.params)?, eval_complex(&self.df, &p, self.params)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroCount {
    pub count: u64,
    /// Distance of the final quadrature value from `count`.
    pub residual: f64,
    pub nodes: usize,
    pub min_modulus: f64,
}

const FIRST_NODES: usize = 64;
const MAX_NODES: usize = 1 << 20;
const TOLERANCE: f64 = 1e-6;

/// Number of zeros, with multiplicity, of `f` inside `|z| < ρ`, by
/// trapezoidal quadrature of `(1/2πi)∮ f′/f dz` with doubling node counts.
pub fn zero_count(f: &dyn Holomorphic1, rho: f64, margin: f64) -> Result<ZeroCount, HoloError> {
    if rho <= 0.0 {
        return Err(HoloError::Precondition("contour radius must be positive".into()));
    }
    let mut n = FIRST_NODES;
    let mut prev: Option<f64> = None;
    loop {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut min_modulus = f64::INFINITY;
        for k in 0..n {
            let z = Complex64::from_polar(rho, 2.0 * PI * k as f64 / n as f64);
            let (v, d) = f.eval_d(z)?;
            min_modulus = min_modulus.min(v.norm());
            if v.norm() < margin {
                return Err(HoloError::ZeroOnContour { min_modulus: v.norm() });
            }
            sum += d / v * z;
        }
        let estimate = sum / n as f64;
        let nearest = estimate.re.round();
        let residual = (estimate - Complex64::new(nearest, 0.0)).norm();
        let stable = prev.is_some_and(|p| (p - estimate.re).abs() < TOLERANCE);
        if residual < TOLERANCE && stable && nearest >= 0.0 {
            return Ok(ZeroCount {
                count: nearest as u64,
                residual,
                nodes: n,
                min_modulus,
            });
        }
        if n >= MAX_NODES {
            return Err(HoloError::NoConvergence {
                nodes: n,
                estimate: estimate.re,
            });
        }
        prev = Some(estimate.re);
        n *= 2;
    }
}
