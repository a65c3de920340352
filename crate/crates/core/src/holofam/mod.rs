//! Families of bounded holomorphic functions on polydisks, represented by
//! truncated Taylor data: Cauchy bounds, the maximal coefficient `κ(t)` and
//! the uniform degree `M`, `B_Λ(r)`, well-indexing metrics, normalization,
//! zero counting and the θ change of variables.

mod contour;
mod series;
mod theta;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rug::float::Round;
use rug::ops::Pow;
use rug::{Float, Rational};
use thiserror::Error;

use crate::funcdsl::{DiffError, EvalError, Expr};
use crate::multiidx::MultiIndex;

pub use contour::{eval_complex, zero_count, ExprSlice, Holomorphic1, Poly1, ZeroCount};
pub use series::{taylor_series, Monomials, Series};
pub use theta::{theta_apply, theta_check, theta_invert, ComplexQ, ThetaCheck, ThetaMap};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoloError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("member {member}: tail bound {tail:e} does not certify the maximum {kappa:e}")]
    TruncationInsufficient { member: String, tail: f64, kappa: f64 },
    #[error("no grid epsilon satisfies the doubling condition for every member")]
    SearchFailed,
    #[error("|F| = {min_modulus:e} on the contour is below the margin")]
    ZeroOnContour { min_modulus: f64 },
    #[error("quadrature did not settle after {nodes} nodes (last estimate {estimate})")]
    NoConvergence { nodes: usize, estimate: f64 },
    #[error("member {0} vanishes identically")]
    ZeroMember(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// A complex coefficient known to lie within `rad` of `re + i·im`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coeff {
    pub re: Rational,
    pub im: Rational,
    pub rad: Rational,
}

impl Coeff {
    pub fn exact(re: Rational, im: Rational) -> Self {
        Coeff {
            re,
            im,
            rad: Rational::new(),
        }
    }

    pub fn real(q: Rational) -> Self {
        Self::exact(q, Rational::new())
    }

    pub fn zero() -> Self {
        Self::real(Rational::new())
    }

    pub fn is_zero(&self) -> bool {
        self.re == 0 && self.im == 0 && self.rad == 0
    }

    pub fn norm_sq(&self) -> Rational {
        Rational::from(self.re.square_ref()) + Rational::from(self.im.square_ref())
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }

    /// Certifies `|c| ≤ b`.
    pub fn below(&self, b: &Rational) -> bool {
        *b >= self.rad && self.norm_sq() <= Rational::from(b - &self.rad).square()
    }

    /// Certifies `|c| > b`.
    pub fn above(&self, b: &Rational) -> bool {
        self.norm_sq() > Rational::from(b + &self.rad).square()
    }

    /// `|c|` rounded up, as a float.
    pub fn abs_upper(&self) -> f64 {
        self.norm_sq().to_f64().sqrt() + self.rad.to_f64()
    }

    fn scale(&self, q: &Rational) -> Coeff {
        Coeff {
            re: Rational::from(&self.re * q),
            im: Rational::from(&self.im * q),
            rad: Rational::from(&self.rad * q).abs(),
        }
    }

    fn sub(&self, o: &Coeff) -> Coeff {
        Coeff {
            re: Rational::from(&self.re - &o.re),
            im: Rational::from(&self.im - &o.im),
            rad: Rational::from(&self.rad + &o.rad),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: String,
    /// The index `t` in complex parameter space.
    pub params: Vec<Complex64>,
    /// Coefficients in the graded-lex order of the family's monomials.
    pub coeffs: Vec<Coeff>,
    /// True when every coefficient beyond the truncation is zero.
    pub complete: bool,
}

/// An `(R, m, K)`-family given by Taylor coefficients at the origin up to a
/// truncation degree.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorFamily {
    pub radius: Rational,
    pub m: usize,
    pub bound: Rational,
    pub mono: Arc<Monomials>,
    pub members: Vec<Member>,
}

pub const DEFAULT_TRUNCATION: u32 = 64;

impl TaylorFamily {
    pub fn new(radius: Rational, m: usize, bound: Rational, truncation: u32) -> Result<Self, HoloError> {
        if radius <= 0 || bound <= 0 || m == 0 {
            return Err(HoloError::Precondition("need R > 0, K > 0 and m ≥ 1".into()));
        }
        Ok(TaylorFamily {
            radius,
            m,
            bound,
            mono: Monomials::new(m, truncation),
            members: Vec::new(),
        })
    }

    pub fn truncation(&self) -> u32 {
        self.mono.deg
    }

    pub fn push(
        &mut self,
        id: impl Into<String>,
        params: Vec<Complex64>,
        coeffs: &BTreeMap<MultiIndex, Coeff>,
        complete: bool,
    ) -> Result<(), HoloError> {
        let mut dense = vec![Coeff::zero(); self.mono.len()];
        for (alpha, c) in coeffs {
            if alpha.len() != self.m {
                return Err(HoloError::Precondition(format!("index {alpha} in {} variables", self.m)));
            }
            match self.mono.position(&alpha.0) {
                Some(i) => dense[i] = c.clone(),
                None if c.is_zero() => {}
                None => return Err(HoloError::Precondition(format!("index {alpha} beyond the truncation"))),
            }
        }
        self.members.push(Member {
            id: id.into(),
            params,
            coeffs: dense,
            complete,
        });
        Ok(())
    }

    /// Samples a rational function of `x_1..x_m` with parameter `param` at
    /// each of `values`; the parameter value is also the member's index.
    pub fn from_generator(
        f: &Expr,
        m: usize,
        radius: Rational,
        bound: Rational,
        truncation: u32,
        param: &str,
        values: &[Rational],
    ) -> Result<Self, HoloError> {
        let mut fam = TaylorFamily::new(radius, m, bound, truncation)?;
        let complete = f.poly_degree().is_some_and(|d| d <= truncation);
        let mono = fam.mono.clone();
        let members: Result<Vec<Member>, HoloError> = values
            .par_iter()
            .map(|t| {
                let params: BTreeMap<String, Rational> = [(param.to_string(), t.clone())].into_iter().collect();
                let s = taylor_series(f, &mono, &params)?;
                Ok(Member {
                    id: format!("{param}={t}"),
                    params: vec![Complex64::new(t.to_f64(), 0.0)],
                    coeffs: s.c.into_iter().map(Coeff::real).collect(),
                    complete,
                })
            })
            .collect();
        fam.members = members?;
        Ok(fam)
    }

    /// The truncated series of member `i` at `z`.
    pub fn eval(&self, i: usize, z: &[Complex64]) -> Complex64 {
        let pows: Vec<Vec<Complex64>> = z
            .iter()
            .map(|&zi| {
                let mut p = vec![Complex64::new(1.0, 0.0)];
                for _ in 0..self.mono.deg {
                    let last = *p.last().expect("nonempty");
                    p.push(last * zi);
                }
                p
            })
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for (alpha, c) in self.mono.alphas.iter().zip(&self.members[i].coeffs) {
            if c.is_zero() {
                continue;
            }
            let mut term = c.to_c64();
            for (k, &a) in alpha.0.iter().enumerate() {
                term *= pows[k][a as usize];
            }
            acc += term;
        }
        acc
    }

    /// `K Σ_{|α| > T} (r/R)^|α|`, bounding the omitted part of a member on
    /// the closed polydisk of radius `r`; zero for complete members.
    pub fn tail(&self, i: usize, r: f64) -> f64 {
        if self.members[i].complete {
            0.0
        } else {
            tail_sum(self.bound.to_f64(), r / self.radius.to_f64(), self.m, self.mono.deg)
        }
    }

    /// Coefficients scaled by `s^|α|`: the family `z ↦ F_t(s·z)` on the
    /// polydisk of radius `R/s`.
    pub fn rescaled(&self, s: &Rational) -> TaylorFamily {
        let factors: Vec<Rational> = self
            .mono
            .alphas
            .iter()
            .map(|a| Rational::from((&s).pow(a.degree() as u32)))
            .collect();
        TaylorFamily {
            radius: Rational::from(&self.radius / s),
            m: self.m,
            bound: self.bound.clone(),
            mono: self.mono.clone(),
            members: self
                .members
                .iter()
                .map(|mb| Member {
                    coeffs: mb.coeffs.iter().zip(&factors).map(|(c, f)| c.scale(f)).collect(),
                    ..mb.clone()
                })
                .collect(),
        }
    }

    /// The family of differences `F_t − F_t′` over unordered pairs, bounded by `2K`.
    pub fn differences(&self) -> TaylorFamily {
        let mut members = Vec::new();
        for i in 0..self.members.len() {
            for j in i + 1..self.members.len() {
                let (a, b) = (&self.members[i], &self.members[j]);
                members.push(Member {
                    id: format!("{} - {}", a.id, b.id),
                    params: a.params.iter().chain(&b.params).copied().collect(),
                    coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x.sub(y)).collect(),
                    complete: a.complete && b.complete,
                });
            }
        }
        TaylorFamily {
            radius: self.radius.clone(),
            m: self.m,
            bound: Rational::from(&self.bound * 2u32),
            mono: self.mono.clone(),
            members,
        }
    }

    /// Maximum of `|F_t|` over a torus grid of polyradius `y`.
    pub fn torus_max(&self, i: usize, y: f64, angles: usize) -> f64 {
        let mut best = 0.0f64;
        for_each_torus_point(self.m, y, angles, |z| {
            best = best.max(self.eval(i, z).norm());
        });
        best
    }
}

fn binom_f64(n: u64, k: u64) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// `K Σ_{k > T} C(k+m−1, m−1) q^k` for `0 ≤ q < 1`.
pub fn tail_sum(k_bound: f64, q: f64, m: usize, t: u32) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return f64::INFINITY;
    }
    let m1 = (m - 1) as u64;
    let mut k = t as u64 + 1;
    let mut term = binom_f64(k + m1, m1) * q.powi(k as i32);
    let mut sum = 0.0;
    loop {
        sum += term;
        // term ratios q(k+m)/(k+1) decrease in k
        let ratio = q * (k + 1 + m1) as f64 / (k + 1) as f64;
        let next = term * ratio;
        if ratio < 1.0 && next / (1.0 - ratio) < 1e-17 * sum.max(f64::MIN_POSITIVE) {
            sum += next / (1.0 - ratio);
            break;
        }
        if sum == 0.0 && term == 0.0 {
            break;
        }
        term = next;
        k += 1;
    }
    k_bound * sum
}

fn for_each_torus_point(m: usize, y: f64, angles: usize, mut f: impl FnMut(&[Complex64])) {
    let axis: Vec<Complex64> = (0..angles)
        .map(|k| Complex64::from_polar(y, 2.0 * PI * k as f64 / angles as f64))
        .collect();
    let mut idx = vec![0usize; m];
    let mut z = vec![axis[0]; m];
    loop {
        f(&z);
        let mut i = 0;
        loop {
            if i == m {
                return;
            }
            idx[i] += 1;
            if idx[i] < angles {
                z[i] = axis[idx[i]];
                break;
            }
            idx[i] = 0;
            z[i] = axis[0];
            i += 1;
        }
    }
}

fn angles_for(m: usize) -> usize {
    match m {
        1 => 256,
        2 => 48,
        _ => 16,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyWitness {
    pub member: String,
    pub alpha: MultiIndex,
    /// `|a_α| R^|α| / K`, rounded up.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyReport {
    pub passed: bool,
    pub violations: usize,
    pub undecided: usize,
    /// The largest ratio, among violations if there are any.
    pub worst: Option<CauchyWitness>,
}

/// Checks `|a_α| ≤ K/R^|α|` for every stored coefficient.
pub fn cauchy_check(fam: &TaylorFamily) -> CauchyReport {
    let bounds: Vec<Rational> = (0..=fam.mono.deg)
        .map(|k| Rational::from(&fam.bound / Rational::from((&fam.radius).pow(k))))
        .collect();
    // (violated, undecided, worst violation, worst overall) per member
    type Acc = (usize, usize, Option<(f64, usize)>, Option<(f64, usize)>);
    let per_member: Vec<Acc> = fam
        .members
        .par_iter()
        .map(|mb| {
            let mut acc: Acc = (0, 0, None, None);
            for (j, c) in mb.coeffs.iter().enumerate() {
                let b = &bounds[fam.mono.alphas[j].degree() as usize];
                let ratio = if *b == 0 { f64::INFINITY } else { c.abs_upper() / b.to_f64() };
                let violated = c.above(b);
                if violated {
                    acc.0 += 1;
                } else if !c.below(b) {
                    acc.1 += 1;
                }
                if violated && acc.2.map_or(true, |(r, _)| ratio > r) {
                    acc.2 = Some((ratio, j));
                }
                if acc.3.map_or(true, |(r, _)| ratio > r) {
                    acc.3 = Some((ratio, j));
                }
            }
            acc
        })
        .collect();
    let violations: usize = per_member.iter().map(|a| a.0).sum();
    let undecided: usize = per_member.iter().map(|a| a.1).sum();
    let mut worst: Option<(f64, usize, usize)> = None;
    for (i, acc) in per_member.iter().enumerate() {
        let cand = if violations > 0 { acc.2 } else { acc.3 };
        if let Some((r, j)) = cand {
            if worst.map_or(true, |(w, _, _)| r > w) {
                worst = Some((r, i, j));
            }
        }
    }
    CauchyReport {
        passed: violations == 0 && undecided == 0,
        violations,
        undecided,
        worst: worst.map(|(ratio, i, j)| CauchyWitness {
            member: fam.members[i].id.clone(),
            alpha: fam.mono.alphas[j].clone(),
            ratio,
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaEntry {
    pub member: String,
    pub kappa: f64,
    /// `|a_α|²` of the maximizing coefficient's centre.
    pub kappa_sq: Rational,
    /// The first maximizing index in graded-lex order.
    pub alpha: MultiIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    pub entries: Vec<KappaEntry>,
    /// Largest over members of the smallest degree attaining `κ(t)`.
    pub m_empirical: u32,
}

fn member_kappa(fam: &TaylorFamily, i: usize, tail_sup: &Rational) -> Result<KappaEntry, HoloError> {
    let mb = &fam.members[i];
    let mut best = 0usize;
    let mut best_sq = mb.coeffs[0].norm_sq();
    for (j, c) in mb.coeffs.iter().enumerate().skip(1) {
        let sq = c.norm_sq();
        if sq > best_sq {
            best = j;
            best_sq = sq;
        }
    }
    let top = &mb.coeffs[best];
    let kappa = best_sq.to_f64().sqrt();
    if !mb.complete && Rational::from(tail_sup + &top.rad).square() > best_sq {
        return Err(HoloError::TruncationInsufficient {
            member: mb.id.clone(),
            tail: tail_sup.to_f64(),
            kappa,
        });
    }
    Ok(KappaEntry {
        member: mb.id.clone(),
        kappa,
        kappa_sq: best_sq,
        alpha: fam.mono.alphas[best].clone(),
    })
}

/// `κ(t) = max_α |a_α|` for every member, certified against the tail
/// `K/R^(T+1)`, and the empirical uniform degree `M`.
pub fn kappa_and_m(fam: &TaylorFamily) -> Result<KappaReport, HoloError> {
    if fam.radius <= 1 {
        return Err(HoloError::Precondition("κ needs R > 1".into()));
    }
    let tail_sup = Rational::from(&fam.bound / Rational::from((&fam.radius).pow(fam.mono.deg + 1)));
    let entries: Result<Vec<KappaEntry>, HoloError> =
        (0..fam.members.len()).into_par_iter().map(|i| member_kappa(fam, i, &tail_sup)).collect();
    let entries = entries?;
    let m_empirical = entries
        .iter()
        .filter(|e| e.kappa_sq > 0)
        .map(|e| e.alpha.degree() as u32)
        .max()
        .unwrap_or(0);
    Ok(KappaReport { entries, m_empirical })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSearch {
    pub eps: f64,
    /// A witness `y_t` per function.
    pub y: Vec<f64>,
}

/// Searches the lattice `{kR/steps}` for the largest `ε ∈ (0, λ)` such that
/// every `θ_t` has some `y_t ∈ (r, R)` with `θ_t(y_t − ε) ≥ θ_t(y_t)/2`.
pub fn epsilon_search(
    thetas: &[&(dyn Fn(f64) -> f64 + Sync)],
    radius: f64,
    r: f64,
    lambda: f64,
    steps: usize,
) -> Result<EpsilonSearch, HoloError> {
    if !(1.0 < r && r < radius) || !(0.0 < lambda && lambda <= 0.5) || steps < 2 {
        return Err(HoloError::Precondition(format!(
            "need 1 < r < R, 0 < λ ≤ 1/2, got r = {r}, R = {radius}, λ = {lambda}"
        )));
    }
    let h = radius / steps as f64;
    let ys: Vec<usize> = (1..steps).filter(|&k| (k as f64) * h > r).collect();
    let table: Vec<Vec<f64>> = thetas
        .par_iter()
        .map(|th| (0..steps).map(|k| if k == 0 { 0.0 } else { th(k as f64 * h) }).collect())
        .collect();
    let max_j = (1..steps).take_while(|&j| (j as f64) * h < lambda).last();
    let Some(max_j) = max_j else {
        return Err(HoloError::SearchFailed);
    };
    'eps: for j in (1..=max_j).rev() {
        let mut witnesses = Vec::with_capacity(table.len());
        for row in &table {
            let found = ys.iter().rev().find(|&&k| k > j && row[k - j] >= 0.5 * row[k]);
            match found {
                Some(&k) => witnesses.push(k as f64 * h),
                None => continue 'eps,
            }
        }
        return Ok(EpsilonSearch {
            eps: j as f64 * h,
            y: witnesses,
        });
    }
    Err(HoloError::SearchFailed)
}

/// `r = R^(3/4)` and `λ = min(1/2, R^(3/4) − R^(2/3))` for the uniform-degree argument.
pub fn search_radii(radius: f64) -> (f64, f64) {
    let r = radius.powf(0.75);
    (r, (r - radius.powf(2.0 / 3.0)).min(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProofConstants {
    pub d: u32,
    pub m_bound: u32,
}

/// The smallest `D` with `(1 − ε/R)^D < 1/4` and `5(D+1)^m ≤ 2R^(D/3)`, and `M = 2D`.
pub fn proof_constants(eps: f64, radius: f64, m: usize) -> Result<ProofConstants, HoloError> {
    if !(0.0 < eps && eps < radius && radius > 1.0) {
        return Err(HoloError::Precondition(format!("need 0 < ε < R and R > 1, got ε = {eps}, R = {radius}")));
    }
    let q = 1.0 - eps / radius;
    let mut d = 1u32;
    loop {
        let first = q.powi(d as i32) < 0.25;
        let second = 5.0 * ((d + 1) as f64).powi(m as i32) <= 2.0 * radius.powf(d as f64 / 3.0);
        if first && second {
            return Ok(ProofConstants { d, m_bound: 2 * d });
        }
        d += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProofBound {
    pub eps: f64,
    pub constants: ProofConstants,
}

/// Runs the ε search on `θ_t(y) = (R/K) max_{Δ(y)^m} |F_t|` and derives the
/// proof's `M = 2D`. Members vanishing identically are skipped.
pub fn family_proof_bound(fam: &TaylorFamily, steps: usize) -> Result<ProofBound, HoloError> {
    let radius = fam.radius.to_f64();
    let scale = radius / fam.bound.to_f64();
    let angles = angles_for(fam.m);
    let live: Vec<usize> = (0..fam.members.len())
        .filter(|&i| fam.members[i].coeffs.iter().any(|c| !c.is_zero()))
        .collect();
    let closures: Vec<Box<dyn Fn(f64) -> f64 + Sync + '_>> = live
        .iter()
        .map(|&i| Box::new(move |y: f64| scale * fam.torus_max(i, y, angles)) as Box<dyn Fn(f64) -> f64 + Sync>)
        .collect();
    let refs: Vec<&(dyn Fn(f64) -> f64 + Sync)> = closures.iter().map(|b| b.as_ref()).collect();
    let (r, lambda) = search_radii(radius);
    let found = epsilon_search(&refs, radius, r, lambda, steps)?;
    Ok(ProofBound {
        eps: found.eps,
        constants: proof_constants(found.eps, radius, fam.m)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BLambda {
    pub b: Rational,
    pub m_star: u32,
    pub passed: bool,
    /// Largest `|F_t(z)| / (B κ(t))` over the sample grid.
    pub worst_ratio: f64,
}

fn b_value(r: &Rational, r0: &Rational, m_star: u32, m: usize) -> Rational {
    let ratio = Rational::from(r0 / Rational::from(r0 - r));
    Rational::from((&r0).pow(m_star)) * ratio.pow(m as u32)
}

/// `B_Λ(r) = r0^M* (r0/(r0 − r))^m`, with `M*` the empirical degree of the
/// rescaled family `z ↦ F_t(r0 z)`, checked against `|F_t(z)| ≤ B κ(t)` on
/// a grid in the closed polydisk of radius `r`.
pub fn b_lambda(fam: &TaylorFamily, r: &Rational, r0: &Rational) -> Result<BLambda, HoloError> {
    let lower = if *r > 1 { r.clone() } else { Rational::from(1) };
    if !(*r > 0 && *r0 > lower && *r0 < fam.radius) {
        return Err(HoloError::Precondition(format!("need max(1, r) < r0 < R, got r = {r}, r0 = {r0}")));
    }
    let star = kappa_and_m(&fam.rescaled(r0))?;
    let kappa = kappa_and_m(fam)?;
    let b = b_value(r, r0, star.m_empirical, fam.m);
    let bf = b.to_f64();
    let rf = r.to_f64();
    let radii = 6;
    let worst: Vec<f64> = (0..fam.members.len())
        .into_par_iter()
        .map(|i| {
            let bound = bf * kappa.entries[i].kappa;
            let mut w = 0.0f64;
            for k in 1..=radii {
                let y = rf * k as f64 / radii as f64;
                let tail = fam.tail(i, y);
                let v = fam.torus_max(i, y, angles_for(fam.m).min(64)) + tail;
                let ratio = if bound == 0.0 {
                    if v == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    v / bound
                };
                w = w.max(ratio);
            }
            w
        })
        .collect();
    let worst_ratio = worst.into_iter().fold(0.0, f64::max);
    Ok(BLambda {
        b,
        m_star: star.m_empirical,
        passed: worst_ratio <= 1.0,
        worst_ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexingFailure {
    pub first: String,
    pub second: String,
    pub distance: f64,
    pub delta_lo: f64,
    pub delta_hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexingReport {
    pub passed: bool,
    pub pairs: usize,
    pub failure: Option<IndexingFailure>,
}

/// Brackets `δ_r(F_t, F_t′) = max_{|z_i| = r} |F_t − F_t′|` from a torus grid,
/// padded by the angular Lipschitz constant and the truncation tails.
fn delta_bracket(diff: &[Coeff], mono: &Monomials, m: usize, r: f64, tails: f64, angles: usize) -> (f64, f64) {
    let coeffs: Vec<Complex64> = diff.iter().map(Coeff::to_c64).collect();
    let rad: f64 = diff
        .iter()
        .zip(&mono.alphas)
        .map(|(c, a)| c.rad.to_f64() * r.powi(a.degree() as i32))
        .sum();
    let mut lipschitz = 0.0;
    for i in 0..m {
        lipschitz += diff
            .iter()
            .zip(&mono.alphas)
            .map(|(c, a)| a.0[i] as f64 * c.abs_upper() * r.powi(a.degree() as i32))
            .sum::<f64>();
    }
    let mut sampled = 0.0f64;
    for_each_torus_point(m, r, angles, |z| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, a) in coeffs.iter().zip(&mono.alphas) {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let mut term = *c;
            for (k, &e) in a.0.iter().enumerate() {
                term *= z[k].powi(e as i32);
            }
            acc += term;
        }
        sampled = sampled.max(acc.norm());
    });
    let slack = 1e-12 * (1.0 + sampled);
    let lo = (sampled - rad - tails - slack).max(0.0);
    let hi = sampled + rad + tails + lipschitz * PI / angles as f64 + slack;
    (lo, hi)
}

const INDEX_TOL: f64 = 1e-9;

/// Checks `c_r δ_r(F_t, F_t′) ≤ ‖t − t′‖ ≤ C_r δ_r(F_t, F_t′)` over all member pairs,
/// with the sup-norm on parameters.
pub fn indexing_check(fam: &TaylorFamily, r: f64, c_r: f64, big_c_r: f64) -> Result<IndexingReport, HoloError> {
    if !(r > 0.0 && r < fam.radius.to_f64()) {
        return Err(HoloError::Precondition(format!("need 0 < r < R, got r = {r}")));
    }
    let n = fam.members.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let angles = angles_for(fam.m);
    let results: Vec<Option<IndexingFailure>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&fam.members[i], &fam.members[j]);
            let distance = a
                .params
                .iter()
                .zip(&b.params)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            let diff: Vec<Coeff> = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x.sub(y)).collect();
            let tails = fam.tail(i, r) + fam.tail(j, r);
            let (lo, hi) = delta_bracket(&diff, &fam.mono, fam.m, r, tails, angles);
            // the coefficient-indexing constants make both inequalities tight
            let ok = c_r * hi <= distance * (1.0 + INDEX_TOL) && distance <= big_c_r * lo * (1.0 + INDEX_TOL);
            (!ok).then(|| IndexingFailure {
                first: a.id.clone(),
                second: b.id.clone(),
                distance,
                delta_lo: lo,
                delta_hi: hi,
            })
        })
        .collect();
    let failure = results.into_iter().flatten().next();
    Ok(IndexingReport {
        passed: failure.is_none(),
        pairs: pairs.len(),
        failure,
    })
}

/// The constants of the coefficient indexing: `C_r = max(1, r^−M(Ω))` and
/// `c_r = 1/B_Ω(r)` for the difference family `Ω`.
pub fn indexing_constants(fam: &TaylorFamily, r: &Rational, r0: &Rational) -> Result<(f64, f64), HoloError> {
    let omega = fam.differences();
    let m_omega = kappa_and_m(&omega)?.m_empirical;
    let big = r.to_f64().powi(-(m_omega as i32)).max(1.0);
    let b = b_lambda(&omega, r, r0)?;
    Ok((1.0 / b.b.to_f64(), big))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub family: TaylorFamily,
    pub kappas: Vec<f64>,
}

/// `|a|` as a rational: exact for perfect squares, otherwise rounded to
/// 256 bits with the error returned alongside.
fn sqrt_rational(q: &Rational) -> (Rational, Rational) {
    let (n, d) = (q.numer(), q.denom());
    if n.is_perfect_square() && d.is_perfect_square() {
        return (Rational::from((n.clone().sqrt(), d.clone().sqrt())), Rational::new());
    }
    let f = Float::with_val_round(256, Float::with_val(512, q).sqrt(), Round::Nearest).0;
    let approx = f.to_rational().expect("finite");
    let err = Rational::from(&approx * Rational::from((1, 1u64 << 62))) / Rational::from(1u64 << 62);
    (approx, err.abs())
}

/// Divides every member by `κ(t)` and restricts to the polydisk of radius
/// `R0`, with new bound `K0 = B_Λ(R0)` using `r0 = (max(1, R0) + R)/2`.
pub fn normalize_family(fam: &TaylorFamily, r_new: &Rational) -> Result<Normalized, HoloError> {
    if !(*r_new > 1 && *r_new < fam.radius) {
        return Err(HoloError::Precondition(format!("need 1 < R0 < R, got {r_new}")));
    }
    let kappa = kappa_and_m(fam)?;
    if let Some(e) = kappa.entries.iter().find(|e| e.kappa_sq == 0) {
        return Err(HoloError::ZeroMember(e.member.clone()));
    }
    let r0 = Rational::from(r_new + &fam.radius) / 2u32;
    let b = b_lambda(fam, r_new, &r0)?;
    let members = fam
        .members
        .iter()
        .zip(&kappa.entries)
        .map(|(mb, e)| {
            let (k, err) = sqrt_rational(&e.kappa_sq);
            let inv = k.clone().recip();
            let coeffs = mb
                .coeffs
                .iter()
                .map(|c| {
                    let mut n = c.scale(&inv);
                    if err != 0 {
                        // |c/κ − c/k| ≤ |c| err / (k (k − err))
                        let cu = Rational::from_f64(c.abs_upper() * (1.0 + 1e-9)).unwrap_or_default();
                        n.rad += cu * &err / (Rational::from(&k * Rational::from(&k - &err)));
                    }
                    n
                })
                .collect();
            Member { coeffs, ..mb.clone() }
        })
        .collect();
    Ok(Normalized {
        family: TaylorFamily {
            radius: r_new.clone(),
            m: fam.m,
            bound: b.b,
            mono: fam.mono.clone(),
            members,
        },
        kappas: kappa.entries.iter().map(|e| e.kappa).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdsl::parse;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from((a, b))
    }

    fn g_family(ts: &[Rational], truncation: u32) -> TaylorFamily {
        TaylorFamily::from_generator(
            &parse("(1-2*t)/(1-t*x1)").unwrap(),
            1,
            Rational::from(2),
            Rational::from(1),
            truncation,
            "t",
            ts,
        )
        .unwrap()
    }

    fn single(m: usize, radius: Rational, bound: Rational, coeffs: &[(Vec<u32>, Rational)], complete: bool) -> TaylorFamily {
        let mut fam = TaylorFamily::new(radius, m, bound, 16).unwrap();
        let map = coeffs.iter().map(|(a, c)| (MultiIndex(a.clone()), Coeff::real(c.clone()))).collect();
        fam.push("f", vec![Complex64::new(0.0, 0.0)], &map, complete).unwrap();
        fam
    }

    #[test]
    fn cauchy_examples() {
        let k = 3;
        let fam = single(1, Rational::from(2), Rational::from(5), &[(vec![k], q(5, 8))], true);
        let rep = cauchy_check(&fam);
        assert!(rep.passed);
        assert_eq!(rep.worst.unwrap().ratio, 1.0);
        let zero = single(1, Rational::from(2), Rational::from(1), &[], true);
        assert!(cauchy_check(&zero).passed);
        let bad = single(1, Rational::from(2), Rational::from(5), &[(vec![k], q(5, 4))], true);
        let rep = cauchy_check(&bad);
        assert!(!rep.passed);
        assert_eq!(rep.violations, 1);
        assert_eq!(rep.worst.unwrap().alpha, MultiIndex(vec![3]));
        let ts: Vec<Rational> = (0..50).map(|i| q(i, 100)).collect();
        assert!(cauchy_check(&g_family(&ts, 64)).passed);
        let gen = TaylorFamily::from_generator(
            &parse("1/((3-x1)*(3-x2))").unwrap(),
            2,
            Rational::from(2),
            Rational::from(1),
            12,
            "t",
            &[Rational::new()],
        )
        .unwrap();
        assert!(cauchy_check(&gen).passed);
    }

    #[test]
    fn kappa_examples() {
        let fam = g_family(&[q(1, 4)], 64);
        let rep = kappa_and_m(&fam).unwrap();
        assert_eq!(rep.entries[0].kappa_sq, q(1, 4));
        assert_eq!(rep.m_empirical, 0);
        let c = single(1, Rational::from(2), Rational::from(1), &[(vec![0], q(-2, 3))], true);
        let rep = kappa_and_m(&c).unwrap();
        assert_eq!(rep.entries[0].kappa_sq, q(4, 9));
        assert_eq!(rep.m_empirical, 0);
        let z = single(1, Rational::from(2), Rational::from(2), &[(vec![1], Rational::from(1))], true);
        let rep = kappa_and_m(&z).unwrap();
        assert_eq!(rep.entries[0].kappa, 1.0);
        assert_eq!(rep.m_empirical, 1);
        // a nearly-zero member whose maximum the tail cannot certify
        let small = single(1, Rational::from(2), Rational::from(1), &[(vec![0], q(1, 1 << 20))], false);
        assert!(matches!(kappa_and_m(&small), Err(HoloError::TruncationInsufficient { .. })));
        let low_r = single(1, Rational::from(1), Rational::from(1), &[], true);
        assert!(kappa_and_m(&low_r).is_err());
    }

    #[test]
    fn g_family_grid() {
        let ts: Vec<Rational> = (0..100).map(|i| q(49 * i, 9900)).collect();
        let fam = g_family(&ts, 64);
        let rep = kappa_and_m(&fam).unwrap();
        assert_eq!(rep.m_empirical, 0);
        for (t, e) in ts.iter().zip(&rep.entries) {
            let want = Rational::from(1) - Rational::from(t * 2u32);
            assert_eq!(e.kappa_sq, want.square());
        }
    }

    #[test]
    fn proof_constant_examples() {
        assert_eq!(proof_constants(0.1, 2.0, 1).unwrap(), ProofConstants { d: 28, m_bound: 56 });
        let mut last = u32::MAX;
        for k in 1..10 {
            let d = proof_constants(0.1 * k as f64, 2.0, 1).unwrap().d;
            assert!(d <= last);
            last = d;
        }
        let mut last = 0;
        for m in 1..5 {
            let d = proof_constants(0.1, 2.0, m).unwrap().d;
            assert!(d >= last);
            last = d;
        }
        assert!(proof_constants(0.0, 2.0, 1).is_err());
    }

    #[test]
    fn epsilon_examples() {
        let radius = 2.0;
        let r = 2f64.powf(0.75);
        let id = |y: f64| y;
        let out = epsilon_search(&[&id], radius, r, 0.5, 400).unwrap();
        assert!((out.eps - 0.495).abs() < 1e-12);
        assert!(out.y[0] > 1.99);
        let flat = |_: f64| 1.0;
        let out = epsilon_search(&[&flat, &id], radius, r, 0.3, 400).unwrap();
        assert!((out.eps - 0.295).abs() < 1e-12);
        // θ = y^40 needs (1 − ε/y)^40 ≥ 1/2, so ε ≤ 2(1 − 2^(−1/40)) ≈ 0.0344
        let steep = |y: f64| y.powi(40) / 2f64.powi(39);
        let out = epsilon_search(&[&steep], radius, r, 0.5, 4000).unwrap();
        assert!(out.eps <= 0.0345 && out.eps > 0.033, "{}", out.eps);
        let cliff = |y: f64| if y > 1.7 { 1.0 } else { 1e-9 };
        assert!(matches!(
            epsilon_search(&[&cliff], radius, 1.99, 0.5, 100),
            Err(HoloError::SearchFailed)
        ));
        assert!(epsilon_search(&[&id], radius, 0.5, 0.5, 100).is_err());
    }

    #[test]
    fn proof_bound_dominates_empirical() {
        let ts: Vec<Rational> = (0..20).map(|i| q(49 * i, 1900)).collect();
        let fam = g_family(&ts, 64);
        let emp = kappa_and_m(&fam).unwrap().m_empirical;
        let pb = family_proof_bound(&fam, 400).unwrap();
        assert!(emp <= pb.constants.m_bound);
        let z3 = single(1, Rational::from(3), Rational::from(27), &[(vec![3], Rational::from(1))], true);
        let emp = kappa_and_m(&z3).unwrap().m_empirical;
        assert_eq!(emp, 3);
        assert!(emp <= family_proof_bound(&z3, 400).unwrap().constants.m_bound);
    }

    #[test]
    fn b_lambda_examples() {
        let ts: Vec<Rational> = (0..10).map(|i| q(i, 20)).collect();
        let fam = g_family(&ts, 64);
        let out = b_lambda(&fam, &Rational::from(1), &q(3, 2)).unwrap();
        assert!(out.passed, "{out:?}");
        assert_eq!(out.m_star, 0);
        assert_eq!(out.b, 3);
        let closer = b_lambda(&fam, &q(5, 4), &q(3, 2)).unwrap();
        assert!(closer.b > out.b);
        assert!(b_lambda(&fam, &Rational::from(2), &q(3, 2)).is_err());
        let zero = single(1, Rational::from(2), Rational::from(1), &[], true);
        let out = b_lambda(&zero, &Rational::from(1), &q(3, 2)).unwrap();
        assert!(out.passed);
        assert_eq!(out.worst_ratio, 0.0);
    }

    fn poly_family(coeffs: &[[i64; 3]]) -> TaylorFamily {
        let mut fam = TaylorFamily::new(Rational::from(2), 1, Rational::from(4), 8).unwrap();
        for (n, c) in coeffs.iter().enumerate() {
            let map = c
                .iter()
                .enumerate()
                .map(|(k, &v)| (MultiIndex(vec![k as u32]), Coeff::real(q(v, 8))))
                .collect();
            let params = c.iter().map(|&v| Complex64::new(v as f64 / 8.0, 0.0)).collect();
            fam.push(format!("p{n}"), params, &map, true).unwrap();
        }
        fam
    }

    #[test]
    fn indexing_examples() {
        let grid: Vec<[i64; 3]> = (0..27).map(|i| [i % 3 - 1, (i / 3) % 3 - 1, i / 9 - 1]).collect();
        let fam = poly_family(&grid);
        for (r, r0) in [(q(1, 2), q(3, 2)), (Rational::from(1), q(3, 2))] {
            let (c, big) = indexing_constants(&fam, &r, &r0).unwrap();
            let rep = indexing_check(&fam, r.to_f64(), c, big).unwrap();
            assert!(rep.passed, "r = {r}: {rep:?}");
            assert_eq!(rep.pairs, 27 * 26 / 2);
        }
        let one = poly_family(&grid[..1]);
        assert!(indexing_check(&one, 1.0, 1.0, 1.0).unwrap().passed);
        let mut dup = poly_family(&grid[..2]);
        dup.members[1].params = dup.members[0].params.clone();
        let rep = indexing_check(&dup, 1.0, 0.1, 10.0).unwrap();
        assert!(!rep.passed);
        assert_eq!(rep.failure.unwrap().distance, 0.0);
    }

    #[test]
    fn normalize_examples() {
        let ts: Vec<Rational> = (0..10).map(|i| q(i, 20)).collect();
        let fam = g_family(&ts, 64);
        let out = normalize_family(&fam, &q(3, 2)).unwrap();
        for mb in &out.family.members {
            assert_eq!(mb.coeffs[0], Coeff::real(Rational::from(1)));
        }
        let rep = kappa_and_m(&out.family).unwrap();
        assert!(rep.entries.iter().all(|e| e.kappa_sq == 1));
        assert_eq!(out.family.radius, q(3, 2));
        let again = normalize_family(&out.family, &q(5, 4)).unwrap();
        for (a, b) in again.family.members.iter().zip(&out.family.members) {
            assert_eq!(a.coeffs, b.coeffs);
        }
        let mut with_zero = fam.clone();
        with_zero.members[0].coeffs.iter_mut().for_each(|c| *c = Coeff::zero());
        with_zero.members[0].complete = true;
        assert!(matches!(normalize_family(&with_zero, &q(3, 2)), Err(HoloError::ZeroMember(_))));
        let mut cplx = TaylorFamily::new(Rational::from(2), 1, Rational::from(1), 4).unwrap();
        let map = [(MultiIndex(vec![0]), Coeff::exact(q(1, 3), q(1, 3)))].into_iter().collect();
        cplx.push("c", vec![], &map, true).unwrap();
        let n = normalize_family(&cplx, &q(3, 2)).unwrap();
        let c = &n.family.members[0].coeffs[0];
        assert!((c.norm_sq().to_f64() - 1.0).abs() < 1e-30);
        assert!(c.rad > 0 && c.rad < q(1, 1 << 30));
    }

    #[test]
    fn tail_sums() {
        // Σ_{k>2} (1/2)^k = 1/4
        assert!((tail_sum(1.0, 0.5, 1, 2) - 0.25).abs() < 1e-15);
        // Σ_{k>0} (k+1) q^k = 1/(1−q)² − 1
        let q = 0.3;
        assert!((tail_sum(2.0, q, 2, 0) - 2.0 * (1.0 / ((1.0 - q) * (1.0 - q)) - 1.0)).abs() < 1e-13);
    }
}
