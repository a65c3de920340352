use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Integer, Rational};

use super::DetError;
use crate::funcdsl::{diff_multi, eval_rigorous, EvalError, Expr, RigorousValue, MAX_PRECISION};
use crate::multiidx::MultiIndex;

/// A polynomial with integer coefficients in formal variables `h_0, h_1, …`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolicQ {
    pub nvars: usize,
    pub terms: BTreeMap<Vec<u32>, Integer>,
}

impl SymbolicQ {
    pub fn zero(nvars: usize) -> Self {
        SymbolicQ {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn one(nvars: usize) -> Self {
        let mut q = SymbolicQ::zero(nvars);
        q.terms.insert(vec![0; nvars], Integer::from(1));
        q
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut q = SymbolicQ::zero(nvars);
        q.terms.insert(e, Integer::from(1));
        q
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of distinct monomials.
    pub fn monomial_count(&self) -> usize {
        self.terms.len()
    }

    /// Sum of absolute coefficients: the monomial count with multiplicity.
    pub fn weight(&self) -> Integer {
        self.terms.values().map(|c| Integer::from(c.abs_ref())).sum()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum::<u32>()).max().unwrap_or(0)
    }

    pub fn add(&self, o: &SymbolicQ) -> SymbolicQ {
        let mut r = self.clone();
        for (e, c) in &o.terms {
            let entry = r.terms.entry(e.clone()).or_default();
            *entry += c;
            if *entry == 0 {
                r.terms.remove(e);
            }
        }
        r
    }

    pub fn mul(&self, o: &SymbolicQ) -> SymbolicQ {
        assert_eq!(self.nvars, o.nvars);
        let mut r = SymbolicQ::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                *r.terms.entry(e).or_default() += Integer::from(c1 * c2);
            }
        }
        r.terms.retain(|_, c| *c != 0);
        r
    }

    /// Places the variables at `offset..offset + nvars` of a ring with `total` variables.
    pub fn embed(&self, offset: usize, total: usize) -> SymbolicQ {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut f = vec![0; total];
                f[offset..offset + self.nvars].copy_from_slice(e);
                (f, c.clone())
            })
            .collect();
        SymbolicQ { nvars: total, terms }
    }

    pub fn eval(&self, h: &[Rational]) -> Rational {
        self.terms.iter().fold(Rational::new(), |acc, (e, c)| {
            let m = e
                .iter()
                .zip(h)
                .fold(Rational::from(c), |m, (&k, x)| m * Rational::from(Pow::pow(x, k as i32)));
            acc + m
        })
    }

    /// The polynomial with `h_k` replaced by `subs[k]`.
    pub fn to_expr(&self, subs: &[Expr]) -> Expr {
        let mut acc = Expr::int(0);
        for (e, c) in &self.terms {
            let mut m = Expr::constant(c.clone());
            for (k, &p) in e.iter().enumerate() {
                if p > 0 {
                    m = Expr::mul(m, Expr::pow(subs[k].clone(), Expr::int(i64::from(p))));
                }
            }
            acc = Expr::add(acc, m);
        }
        acc
    }
}

impl fmt::Display for SymbolicQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(k, &p)| if p == 1 { format!("h{k}") } else { format!("h{k}^{p}") })
                .collect();
            match (vars.is_empty(), *c == 1) {
                (true, _) => write!(f, "{c}")?,
                (false, true) => write!(f, "{}", vars.join("*"))?,
                (false, false) => write!(f, "{c}*{}", vars.join("*"))?,
            }
        }
        Ok(())
    }
}

/// The monic relation `x^N = h_{N−1}x^{N−1} + … + h_0`, with the `h_j` as
/// expressions in the parameter variables.
#[derive(Clone, Debug)]
pub struct CompanionSystem {
    pub big_n: usize,
    pub h: Vec<Expr>,
}

impl CompanionSystem {
    pub fn new(h: Vec<Expr>) -> Self {
        CompanionSystem { big_n: h.len(), h }
    }
}

/// `q_{ν,0..N−1}` with `x^ν = Σ_j q_{ν,j} x^j`, as the first row of `H^ν` for the
/// companion matrix `H`. Multiplying the row by `H` shifts it right and feeds the
/// last entry back through the bottom row `(h_0, …, h_{N−1})`.
pub fn companion_powers(big_n: usize, nu: u32) -> Vec<SymbolicQ> {
    assert!(big_n >= 1, "basis size must be positive");
    let mut row: Vec<SymbolicQ> = (0..big_n)
        .map(|j| if j == 0 { SymbolicQ::one(big_n) } else { SymbolicQ::zero(big_n) })
        .collect();
    for _ in 0..nu {
        let last = row[big_n - 1].clone();
        let mut next = Vec::with_capacity(big_n);
        for j in 0..big_n {
            let fed = last.mul(&SymbolicQ::var(big_n, j));
            next.push(if j == 0 { fed } else { row[j - 1].add(&fed) });
        }
        row = next;
    }
    row
}

/// Full symbolic power `H^ν` of the companion matrix.
pub fn companion_matrix_powers(big_n: usize, nu: u32) -> Vec<Vec<SymbolicQ>> {
    let z = || SymbolicQ::zero(big_n);
    let h: Vec<Vec<SymbolicQ>> = (0..big_n)
        .map(|i| {
            (0..big_n)
                .map(|j| {
                    if i + 1 < big_n {
                        if j == i + 1 {
                            SymbolicQ::one(big_n)
                        } else {
                            z()
                        }
                    } else {
                        SymbolicQ::var(big_n, j)
                    }
                })
                .collect()
        })
        .collect();
    let mut p: Vec<Vec<SymbolicQ>> = (0..big_n)
        .map(|i| (0..big_n).map(|j| if i == j { SymbolicQ::one(big_n) } else { z() }).collect())
        .collect();
    for _ in 0..nu {
        p = (0..big_n)
            .map(|i| {
                (0..big_n)
                    .map(|j| (0..big_n).fold(z(), |acc, k| acc.add(&p[i][k].mul(&h[k][j]))))
                    .collect()
            })
            .collect();
    }
    p
}

/// Each `q_{ν,j}` has at most `2^ν` monomials (counted with multiplicity) of
/// degree at most `ν`.
pub fn lemma_bounds_hold(qs: &[SymbolicQ], nu: u32) -> bool {
    let cap = Integer::from(Integer::u_pow_u(2, nu));
    qs.iter()
        .all(|q| q.weight() <= cap && Integer::from(q.monomial_count()) <= cap && q.degree() <= nu)
}

/// `q_{ν,λ} = Π_i q_{i,ν_i,λ_i}` in the variables `h_{i,j}`, numbered coordinate by
/// coordinate.
pub fn multi_q(systems: &[usize], nu: &MultiIndex, lambda: &MultiIndex) -> Result<SymbolicQ, DetError> {
    if nu.len() != systems.len() || lambda.len() != systems.len() {
        return Err(DetError::Precondition("ν, λ and the systems must have equal length".into()));
    }
    for (i, (&l, &n)) in lambda.0.iter().zip(systems).enumerate() {
        if l as usize >= n {
            return Err(DetError::Precondition(format!("λ_{} = {l} is not below N = {n}", i + 1)));
        }
    }
    let total: usize = systems.iter().sum();
    let mut acc = SymbolicQ::one(total);
    let mut offset = 0;
    for (i, &n) in systems.iter().enumerate() {
        let q = &companion_powers(n, nu.0[i])[lambda.0[i] as usize];
        acc = acc.mul(&q.embed(offset, total));
        offset += n;
    }
    let cap = Integer::from(Integer::u_pow_u(2, nu.degree() as u32));
    debug_assert!(acc.weight() <= cap);
    Ok(acc)
}

/// Lower bound on `|v|`.
pub(crate) fn abs_lower(v: &RigorousValue) -> Rational {
    let (lo, hi) = v.bounds();
    if lo > 0 {
        lo
    } else if hi < 0 {
        -hi
    } else {
        Rational::new()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QBoundOutcome {
    /// Certified at every grid point; the largest ratio of value to bound seen.
    Pass { worst_ratio: f64 },
    /// The first grid point where `|q^{(α)}|/α!` certainly exceeds the bound.
    Fail { witness: Vec<Rational>, value: f64, bound: Rational },
}

/// Checks `|q_{ν,λ}^{(α)}(w)|/α! ≤ 2^{|ν|}(|α|+1)^{|ν|m} C^{|ν|} R^{|α|}` at each grid
/// point, with `m` the number of parameter variables.
pub fn verify_q_derivative_bound(
    systems: &[CompanionSystem],
    nu: &MultiIndex,
    lambda: &MultiIndex,
    alpha: &MultiIndex,
    c: &Rational,
    r: &Rational,
    grid: &[Vec<Rational>],
) -> Result<QBoundOutcome, DetError> {
    let sizes: Vec<usize> = systems.iter().map(|s| s.big_n).collect();
    let q = multi_q(&sizes, nu, lambda)?;
    let subs: Vec<Expr> = systems.iter().flat_map(|s| s.h.iter().cloned()).collect();
    let expr = q.to_expr(&subs);
    let m = alpha.len();
    let deriv = diff_multi(&expr, &alpha.0, None)?;
    let nu_deg = nu.degree() as u32;
    let a_deg = alpha.degree() as u32;
    let bound = Rational::from(Integer::u_pow_u(2, nu_deg))
        * Rational::from(Integer::u_pow_u(a_deg + 1, nu_deg * m as u32))
        * Rational::from(Pow::pow(c, nu_deg as i32))
        * Rational::from(Pow::pow(r, a_deg as i32));
    let scaled = Rational::from(&bound * alpha.factorial());
    let outcomes: Vec<Result<(bool, f64, f64), DetError>> = grid
        .par_iter()
        .map(|w| {
            let mut prec = 128;
            loop {
                match eval_rigorous(&deriv, w, prec) {
                    Ok(v) => {
                        let upper = v.abs_upper();
                        if upper <= scaled {
                            let ratio = if scaled == 0 { 0.0 } else { (upper / &scaled).to_f64() };
                            return Ok((true, ratio, 0.0));
                        }
                        let lower = abs_lower(&v);
                        if lower > scaled {
                            let value = (lower / alpha.factorial()).to_f64();
                            return Ok((false, 0.0, value));
                        }
                    }
                    Err(EvalError::PrecisionExhausted) => {}
                    Err(e) => return Err(e.into()),
                }
                if prec >= MAX_PRECISION {
                    return Err(DetError::PrecisionExhausted);
                }
                prec *= 2;
            }
        })
        .collect();
    let mut worst = 0.0f64;
    for (w, o) in grid.iter().zip(outcomes) {
        let (ok, ratio, value) = o?;
        if !ok {
            return Ok(QBoundOutcome::Fail {
                witness: w.clone(),
                value,
                bound,
            });
        }
        worst = worst.max(ratio);
    }
    Ok(QBoundOutcome::Pass { worst_ratio: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdsl::parse;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn small_powers() {
        let q2 = companion_powers(2, 2);
        assert_eq!(q2[0].to_string(), "h0");
        assert_eq!(q2[1].to_string(), "h1");
        let q3 = companion_powers(2, 3);
        assert_eq!(q3[0].to_string(), "h0*h1");
        assert_eq!(q3[1].to_string(), "h1^2 + h0");
        assert_eq!(q3[1].monomial_count(), 2);
        assert_eq!(q3[1].degree(), 2);
        let q0 = companion_powers(3, 0);
        assert_eq!(q0[0], SymbolicQ::one(3));
        assert!(q0[1].is_zero() && q0[2].is_zero());
    }

    #[test]
    fn matches_first_row_of_matrix_power() {
        for big_n in 1..=4 {
            for nu in 0..=8 {
                let row = companion_powers(big_n, nu);
                let full = companion_matrix_powers(big_n, nu);
                assert_eq!(row, full[0], "N={big_n} ν={nu}");
            }
        }
    }

    #[test]
    fn relation_holds_numerically() {
        // x = 2 is a root of x² = x + 2, so h = (2, 1)
        let h = [Rational::from(2), Rational::from(1)];
        for nu in 0..10u32 {
            let q = companion_powers(2, nu);
            let v = q[0].eval(&h) + q[1].eval(&h) * Rational::from(2);
            assert_eq!(v, Rational::from(Integer::u_pow_u(2, nu)));
        }
    }

    #[test]
    fn lemma_counts() {
        for big_n in 1..=4 {
            for nu in 0..=12 {
                assert!(lemma_bounds_hold(&companion_powers(big_n, nu), nu), "N={big_n} ν={nu}");
            }
        }
    }

    #[test]
    fn products() {
        let one = multi_q(&[2], &mi(&[3]), &mi(&[1])).unwrap();
        assert_eq!(one, companion_powers(2, 3)[1]);
        let two = multi_q(&[2, 2], &mi(&[2, 2]), &mi(&[0, 1])).unwrap();
        assert!(two.weight() <= 16);
        assert!(two.degree() <= 4);
        assert!(multi_q(&[2], &mi(&[2]), &mi(&[2])).is_err());
    }

    #[test]
    fn derivative_bound() {
        let grid: Vec<Vec<Rational>> = (-4..=4).map(|k| vec![Rational::from((k, 4))]).collect();
        let half = CompanionSystem::new(vec![parse("x1/2").unwrap(), parse("x1/2").unwrap()]);
        let one = Rational::from(1);
        for nu in 0..=3 {
            for a in 0..=3 {
                let out = verify_q_derivative_bound(
                    std::slice::from_ref(&half),
                    &mi(&[nu]),
                    &mi(&[1]),
                    &mi(&[a]),
                    &one,
                    &one,
                    &grid,
                )
                .unwrap();
                assert!(matches!(out, QBoundOutcome::Pass { .. }), "ν={nu} α={a}: {out:?}");
            }
        }
        let constant = CompanionSystem::new(vec![parse("1/3").unwrap(), parse("1/5").unwrap()]);
        let out = verify_q_derivative_bound(&[constant], &mi(&[4]), &mi(&[0]), &mi(&[2]), &one, &one, &grid).unwrap();
        assert_eq!(out, QBoundOutcome::Pass { worst_ratio: 0.0 });
        let steep = CompanionSystem::new(vec![parse("3*x1").unwrap(), parse("3*x1").unwrap()]);
        let small = Rational::from((1, 10));
        let out = verify_q_derivative_bound(&[steep], &mi(&[3]), &mi(&[1]), &mi(&[1]), &small, &one, &grid).unwrap();
        assert!(matches!(out, QBoundOutcome::Fail { .. }));
    }
}
