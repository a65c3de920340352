//! Multi-index sets and the counting functions of the determinant method.
//!
//! `Λ_k(δ)` holds the exponent vectors of length `k` with total degree exactly `δ`,
//! `Δ_k(δ)` those of degree at most `δ`. Column order everywhere is graded
//! lexicographic: by total degree, then lexicographically.

use std::cmp::Ordering;
use std::fmt;

use rug::Integer;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(k: usize) -> Self {
        MultiIndex(vec![0; k])
    }

    pub fn degree(&self) -> u64 {
        self.0.iter().map(|&e| u64::from(e)).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// `α!` as an exact integer.
    pub fn factorial(&self) -> Integer {
        self.0.iter().fold(Integer::from(1), |acc, &e| acc * Integer::from(Integer::factorial(e)))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexKind {
    /// `L_k(δ) = #Λ_k(δ)`.
    ExactDegree,
    /// `D_k(δ) = #Δ_k(δ)`.
    UpToDegree,
}

fn binomial(n: u64, k: u64) -> Integer {
    let n = u32::try_from(n).expect("index size fits in u32");
    Integer::from(Integer::binomial_u(n, k as u32))
}

pub fn index_count(kind: IndexKind, k: usize, delta: u64) -> Integer {
    assert!(k >= 1, "k must be positive");
    let k = k as u64;
    match kind {
        IndexKind::ExactDegree => binomial(k - 1 + delta, k - 1),
        IndexKind::UpToDegree => binomial(k + delta, k),
    }
}

pub fn l_count(k: usize, delta: u64) -> Integer {
    index_count(IndexKind::ExactDegree, k, delta)
}

pub fn d_count(k: usize, delta: u64) -> Integer {
    index_count(IndexKind::UpToDegree, k, delta)
}

/// `Λ_k(δ)` in lexicographic order.
pub fn enumerate_lambda(k: usize, delta: u32) -> Vec<MultiIndex> {
    assert!(k >= 1, "k must be positive");
    let mut out = Vec::new();
    let mut cur = vec![0u32; k];
    fn fill(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            fill(pos + 1, left - e, cur, out);
        }
    }
    fill(0, delta, &mut cur, &mut out);
    out
}

/// `Δ_k(δ)` in graded lexicographic order.
pub fn enumerate_delta(k: usize, delta: u32) -> Vec<MultiIndex> {
    (0..=delta).flat_map(|j| enumerate_lambda(k, j)).collect()
}

/// Result of choosing the Taylor order `b`, with both sides of the sandwich.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaylorOrder {
    pub b: u64,
    /// `N^n·D_m(b)`.
    pub lower: Integer,
    /// `D_n(d)`.
    pub target: Integer,
    /// `N^n·D_m(b+1)`.
    pub upper: Integer,
}

fn check_mnd(m: usize, n: usize, d: u64, big_n: u64) {
    assert!(m >= 1 && m < n, "need 1 ≤ m < n");
    assert!(d >= 1, "need d ≥ 1");
    assert!(big_n >= 1, "need N ≥ 1");
}

/// The largest `b` with `N^n·D_m(b) ≤ D_n(d)`. For `N = 1` this is the unique `b`
/// with `D_m(b) ≤ D_n(d) < D_m(b+1)`.
pub fn taylor_order(m: usize, n: usize, d: u64, big_n: u64) -> TaylorOrder {
    check_mnd(m, n, d, big_n);
    let scale = Integer::from(Integer::u_pow_u(big_n as u32, n as u32));
    let target = d_count(n, d);
    let fits = |b: u64| Integer::from(&scale * d_count(m, b)) <= target;
    if !fits(0) {
        // N^n exceeds D_n(d); no admissible b, report b = 0 with the failed sandwich
        return TaylorOrder {
            b: 0,
            lower: scale.clone(),
            upper: scale * d_count(m, 1),
            target,
        };
    }
    let mut hi = 1u64;
    while fits(hi) {
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    TaylorOrder {
        b: lo,
        lower: Integer::from(&scale * d_count(m, lo)),
        upper: Integer::from(&scale * d_count(m, lo + 1)),
        target,
    }
}

pub fn taylor_order_b(m: usize, n: usize, d: u64, big_n: u64) -> u64 {
    taylor_order(m, n, d, big_n).b
}

/// `B(m,n,d,N) = Σ_{β≤b} N^n L_m(β) β + (D_n(d) − N^n Σ_{β≤b} L_m(β))(b+1)`.
pub fn exponent_sum_b(m: usize, n: usize, d: u64, big_n: u64) -> Integer {
    let b = taylor_order_b(m, n, d, big_n);
    let scale = Integer::from(Integer::u_pow_u(big_n as u32, n as u32));
    let mut weighted = Integer::new();
    for beta in 0..=b {
        weighted += l_count(m, beta) * Integer::from(beta);
    }
    // Σ_{β≤b} L_m(β) = D_m(b)
    let rest = d_count(n, d) - Integer::from(&scale * d_count(m, b));
    debug_assert!(rest >= 0);
    scale * weighted + rest * Integer::from(b + 1)
}

fn factorial_f64(k: usize) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// `(m!/n!)^{1/m}·d^{n/m}·N^{-n/m}`, the leading term of `b`.
pub fn taylor_order_asymptotic(m: usize, n: usize, d: u64, big_n: u64) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    (factorial_f64(m) / factorial_f64(n)).powf(1.0 / mf) * (d as f64).powf(nf / mf)
        / (big_n as f64).powf(nf / mf)
}

/// `(m!/n!)^{(m+1)/m}·d^{n+n/m} / ((m+1)!(m−1)!)`, the leading term of `B` for `N = 1`.
pub fn exponent_sum_asymptotic(m: usize, n: usize, d: u64) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let c = 1.0 / (factorial_f64(m + 1) * factorial_f64(m - 1));
    c * (factorial_f64(m) / factorial_f64(n)).powf((mf + 1.0) / mf) * (d as f64).powf(nf + nf / mf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn counts() {
        assert_eq!(l_count(2, 3), 4);
        assert_eq!(d_count(2, 2), 6);
        for delta in 0..10 {
            assert_eq!(d_count(1, delta), delta + 1);
        }
    }

    #[test]
    fn delta_enumeration_order() {
        assert_eq!(
            enumerate_delta(2, 2),
            vec![mi(&[0, 0]), mi(&[0, 1]), mi(&[1, 0]), mi(&[0, 2]), mi(&[1, 1]), mi(&[2, 0])]
        );
        assert_eq!(enumerate_delta(1, 3), vec![mi(&[0]), mi(&[1]), mi(&[2]), mi(&[3])]);
        assert_eq!(enumerate_delta(3, 0), vec![mi(&[0, 0, 0])]);
    }

    #[test]
    fn sums_of_exact_degree_counts() {
        for k in 1..=6 {
            let mut acc = Integer::new();
            for delta in 0..=30 {
                acc += l_count(k, delta);
                assert_eq!(acc, d_count(k, delta), "k={k} δ={delta}");
            }
        }
    }

    #[test]
    fn taylor_order_examples() {
        assert_eq!(taylor_order_b(1, 2, 2, 1), 5);
        assert_eq!(taylor_order_b(1, 2, 4, 2), 2);
        assert_eq!(taylor_order_b(1, 2, 1, 1), 2);
        let t = taylor_order(1, 2, 4, 2);
        assert_eq!((t.lower, t.target, t.upper), (Integer::from(12), Integer::from(15), Integer::from(16)));
    }

    #[test]
    fn exponent_sum_examples() {
        assert_eq!(exponent_sum_b(1, 2, 2, 1), 15);
        assert_eq!(exponent_sum_b(1, 2, 1, 1), 3);
    }

    #[test]
    fn asymptotics_at_degree_100() {
        for (m, n) in [(1, 2), (1, 3), (2, 3)] {
            let b = taylor_order_b(m, n, 100, 1) as f64;
            let ratio = b / taylor_order_asymptotic(m, n, 100, 1);
            assert!((0.9..=1.1).contains(&ratio), "b ratio {ratio} for ({m},{n})");
        }
        let big_b = exponent_sum_b(1, 2, 100, 1).to_f64();
        let ratio = big_b / exponent_sum_asymptotic(1, 2, 100);
        assert!((ratio - 1.0).abs() <= 0.15, "B ratio {ratio}");
    }

    proptest! {
        #[test]
        fn delta_enumeration_is_complete(k in 1usize..=4, delta in 0u32..=8) {
            let v = enumerate_delta(k, delta);
            prop_assert_eq!(Integer::from(v.len()), d_count(k, u64::from(delta)));
            prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(v.iter().all(|m| m.len() == k && m.degree() <= u64::from(delta)));
        }

        #[test]
        fn taylor_order_sandwich(m in 1usize..=3, extra in 1usize..=2, d in 1u64..=40, big_n in 1u64..=3) {
            let n = m + extra;
            let t = taylor_order(m, n, d, big_n);
            if t.lower <= t.target {
                prop_assert!(t.target < t.upper);
            }
            if big_n == 1 {
                prop_assert!(t.lower <= t.target);
                let next = taylor_order_b(m, n, d + 1, 1);
                prop_assert!(next >= t.b);
            }
        }

        #[test]
        fn exponent_sum_remainder_nonnegative(m in 1usize..=2, extra in 1usize..=2, d in 1u64..=30) {
            let n = m + extra;
            let b = taylor_order_b(m, n, d, 1);
            prop_assert!(d_count(n, d) >= d_count(m, b));
            prop_assert!(exponent_sum_b(m, n, d, 1) >= 0);
        }
    }
}
