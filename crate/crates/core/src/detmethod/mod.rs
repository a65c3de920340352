//! The determinant method: monomial matrices over exact rationals, fraction-free
//! elimination, hypersurfaces through point sets, covers, the analytic and
//! arithmetic determinant bounds, and companion-matrix power bases.

mod companion;
mod cover;

use rug::float::Round;
use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use thiserror::Error;

use crate::funcdsl::{DiffError, Enclosure, EvalError, MpInterval, MAX_PRECISION};
use crate::multiidx::{d_count, enumerate_delta, exponent_sum_b, taylor_order_b, MultiIndex};
use crate::rationals::{PointCloud, QPoint};

pub use companion::{
    companion_matrix_powers, companion_powers, lemma_bounds_hold, multi_q, verify_q_derivative_bound,
    CompanionSystem, QBoundOutcome, SymbolicQ,
};
pub use cover::{cover_grid_adaptive, cover_points, Cover, CoverPiece, Hypersurface, Strategy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetError {
    #[error("height bound must be at least e")]
    HeightBelowE,
    #[error("points have mixed dimensions ({0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("need 1 ≤ m < n (got m={m}, n={n})")]
    BadDimensions { m: usize, n: usize },
    #[error("radius must lie in (0, 1)")]
    BadRadius,
    #[error("points in grid cell {cell:?} at radius {radius} lie on no single degree-{degree} hypersurface")]
    CoverFailure {
        cell: Vec<usize>,
        radius: Rational,
        degree: u32,
    },
    #[error("{0}")]
    Precondition(String),
    #[error("precision exhausted")]
    PrecisionExhausted,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// A height bound given either as an integer or as `e^L` for rational `L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HeightValue {
    Int(Integer),
    Exp(Rational),
}

fn check_mn(m: usize, n: usize) -> Result<(), DetError> {
    if m >= 1 && m < n {
        Ok(())
    } else {
        Err(DetError::BadDimensions { m, n })
    }
}

/// `d = ⌊(log H)^{m/(n−m)}⌋`, certified.
pub fn choose_degree(h: &HeightValue, m: usize, n: usize) -> Result<u64, DetError> {
    check_mn(m, n)?;
    let g = gcd_usize(m, n - m);
    let (p, q) = ((m / g) as u32, ((n - m) / g) as u32);
    match h {
        HeightValue::Exp(l) => {
            if *l < 1 {
                return Err(DetError::HeightBelowE);
            }
            // largest k with k^q ≤ L^p, by exact comparison
            let lp = Rational::from(Pow::pow(l, p as i32));
            let guess = lp.to_f64().powf(1.0 / f64::from(q)).floor().max(1.0) as u64;
            let mut k = guess.saturating_sub(2).max(1);
            let fits = |k: u64| Rational::from(Integer::from(Pow::pow(Integer::from(k), q))) <= lp;
            while fits(k + 1) {
                k += 1;
            }
            while !fits(k) {
                k -= 1;
            }
            Ok(k)
        }
        HeightValue::Int(hz) => {
            if *hz < 3 {
                return Err(DetError::HeightBelowE);
            }
            let mut prec = 64;
            loop {
                let x = MpInterval::from_rational(&Rational::from(hz), prec).expect("finite");
                let ln_h = x.ln().map_err(|_| DetError::PrecisionExhausted)?;
                let ln_ln = ln_h.ln().map_err(|_| DetError::PrecisionExhausted)?;
                let expo = MpInterval::from_rational(&Rational::from((p, q)), prec).expect("finite");
                let v = ln_ln.mul(&expo).exp().ok_or(DetError::PrecisionExhausted)?;
                let lo = v.lo.to_integer_round(Round::Down).map(|t| t.0);
                let hi = v.hi.to_integer_round(Round::Down).map(|t| t.0);
                if let (Some(a), Some(b)) = (lo, hi) {
                    if a == b {
                        return a.to_u64().ok_or(DetError::PrecisionExhausted);
                    }
                }
                if prec >= MAX_PRECISION {
                    return Err(DetError::PrecisionExhausted);
                }
                prec *= 2;
            }
        }
    }
}

fn gcd_usize(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd_usize(b, a % b)
    }
}

/// Rows are the points, columns the monomials of `Δ_n(d)` in graded lex order.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialMatrix {
    pub points: PointCloud,
    pub degree: u32,
    pub columns: Vec<MultiIndex>,
    pub entries: Vec<Vec<Rational>>,
}

impl MonomialMatrix {
    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }
}

/// The monomial row `(x^μ)_{μ ∈ Δ_n(d)}` of one point.
pub fn monomial_row(p: &[Rational], columns: &[MultiIndex]) -> Vec<Rational> {
    let max = columns.iter().flat_map(|c| c.0.iter().copied()).max().unwrap_or(0) as usize;
    let powers: Vec<Vec<Rational>> = p
        .iter()
        .map(|x| {
            let mut v = Vec::with_capacity(max + 1);
            v.push(Rational::from(1));
            for k in 1..=max {
                let next = Rational::from(&v[k - 1] * x);
                v.push(next);
            }
            v
        })
        .collect();
    columns
        .iter()
        .map(|mu| {
            mu.0.iter()
                .enumerate()
                .fold(Rational::from(1), |acc, (i, &e)| acc * &powers[i][e as usize])
        })
        .collect()
}

pub fn point_dimension(points: &[QPoint]) -> Result<usize, DetError> {
    let n = points.first().map_or(0, QPoint::dim);
    for p in points {
        if p.dim() != n {
            return Err(DetError::DimensionMismatch(n, p.dim()));
        }
    }
    Ok(n)
}

pub fn build_matrix(points: &PointCloud, d: u32) -> Result<MonomialMatrix, DetError> {
    let n = point_dimension(&points.points)?;
    let columns = if n == 0 { vec![] } else { enumerate_delta(n, d) };
    let entries = points
        .points
        .iter()
        .map(|p| monomial_row(p.coords(), &columns))
        .collect();
    Ok(MonomialMatrix {
        points: points.clone(),
        degree: d,
        columns,
        entries,
    })
}

/// Fraction-free row echelon form of an integer matrix.
#[derive(Clone, Debug)]
pub struct Echelon {
    pub rows: Vec<Vec<Integer>>,
    pub pivots: Vec<usize>,
    /// `true` when an odd number of row swaps was made.
    pub odd: bool,
    pub cols: usize,
}

/// Bareiss elimination; the pivot is the first nonzero entry at or below the
/// current row in the leftmost unfinished column. Every stored entry is a minor of
/// the input, so each division is exact.
pub fn bareiss(mut a: Vec<Vec<Integer>>, cols: usize) -> Echelon {
    let rows = a.len();
    let mut prev = Integer::from(1);
    let mut pivots = Vec::new();
    let mut odd = false;
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| a[i][c] != 0) else {
            continue;
        };
        if p != r {
            a.swap(p, r);
            odd = !odd;
        }
        let (top, below) = a.split_at_mut(r + 1);
        let pivot_row = &top[r];
        for row in below.iter_mut() {
            for j in c + 1..cols {
                let t = Integer::from(&pivot_row[c] * &row[j]) - Integer::from(&row[c] * &pivot_row[j]);
                row[j] = t.div_exact(&prev);
            }
            row[c] = Integer::new();
        }
        prev = a[r][c].clone();
        pivots.push(c);
        r += 1;
    }
    Echelon {
        rows: a,
        pivots,
        odd,
        cols,
    }
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// A primitive integer kernel vector, or `None` at full column rank.
    pub fn kernel_vector(&self) -> Option<Vec<Integer>> {
        let free = (0..self.cols).find(|c| !self.pivots.contains(c))?;
        let mut x = vec![Rational::new(); self.cols];
        x[free] = Rational::from(1);
        for (i, &p) in self.pivots.iter().enumerate().rev() {
            let row = &self.rows[i];
            let mut s = Rational::new();
            for j in p + 1..self.cols {
                if row[j] != 0 && x[j] != 0 {
                    s += Rational::from(&x[j] * &row[j]);
                }
            }
            x[p] = -s / Rational::from(&row[p]);
        }
        Some(primitive(&x))
    }
}

/// Clears denominators, divides out the content and makes the first nonzero entry
/// positive.
pub fn primitive(x: &[Rational]) -> Vec<Integer> {
    let l = x.iter().fold(Integer::from(1), |acc, q| acc.lcm(q.denom()));
    let mut v: Vec<Integer> = x.iter().map(|q| Rational::from(q * &l).into_numer_denom().0).collect();
    let g = v.iter().fold(Integer::new(), |acc, e| acc.gcd(e));
    if g > 1 {
        for e in &mut v {
            *e = Integer::from(&*e / &g);
        }
    }
    if v.iter().find(|e| **e != 0).is_some_and(|e| *e < 0) {
        for e in &mut v {
            *e = Integer::from(-&*e);
        }
    }
    v
}

/// Scales each row to integers; returns the rows and the product of scale factors.
fn integer_rows(entries: &[Vec<Rational>]) -> (Vec<Vec<Integer>>, Integer) {
    let mut scale = Integer::from(1);
    let rows = entries
        .iter()
        .map(|row| {
            let l = row.iter().fold(Integer::from(1), |acc, q| acc.lcm(q.denom()));
            scale *= &l;
            row.iter()
                .map(|q| Rational::from(q * &l).into_numer_denom().0)
                .collect()
        })
        .collect();
    (rows, scale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetRank {
    /// Present for square matrices.
    pub determinant: Option<Rational>,
    pub rank: usize,
    /// Primitive integer kernel vector when the columns are dependent.
    pub kernel: Option<Vec<Integer>>,
}

pub fn echelon_of(entries: &[Vec<Rational>], cols: usize) -> (Echelon, Integer) {
    let (rows, scale) = integer_rows(entries);
    (bareiss(rows, cols), scale)
}

pub fn det_and_rank(m: &MonomialMatrix) -> DetRank {
    let cols = m.cols();
    let (e, scale) = echelon_of(&m.entries, cols);
    let rank = e.rank();
    let determinant = m.is_square().then(|| {
        if rank < cols {
            Rational::new()
        } else if cols == 0 {
            Rational::from(1)
        } else {
            let last = e.rows[cols - 1][cols - 1].clone();
            let v = Rational::from((last, scale));
            if e.odd {
                -v
            } else {
                v
            }
        }
    });
    DetRank {
        determinant,
        rank,
        kernel: e.kernel_vector(),
    }
}

/// `K ≤ H^{n·d·D_n(d)}`: the clearing factor that makes the determinant integral.
pub fn denominator_clearing_bound(h: &Integer, n: usize, d: u64) -> Integer {
    let e = Integer::from(n as u64 * d) * d_count(n, d);
    let e = e.to_u32().expect("exponent fits in u32");
    Integer::from(Pow::pow(h, e))
}

/// Whether `den(det M) ≤ H^{n·d·D_n(d)}` with `H` the height bound of the points.
pub fn denominator_within_bound(m: &MonomialMatrix, h: &Integer) -> Option<bool> {
    let det = det_and_rank(m).determinant?;
    let n = m.points.points.first().map_or(0, QPoint::dim);
    Some(*det.denom() <= denominator_clearing_bound(h, n, u64::from(m.degree)))
}

const LOG_PREC: u32 = 256;

/// Enclosure of `log(D_m(b+1)^D · D! · e^{mdD} · r^B)` with `D = D_n(d)`.
pub fn determinant_log_bound(m: usize, n: usize, d: u64, r: &Rational) -> Result<MpInterval, DetError> {
    check_mn(m, n)?;
    if *r <= 0 || *r >= 1 {
        return Err(DetError::BadRadius);
    }
    let b = taylor_order_b(m, n, d, 1);
    let big_b = exponent_sum_b(m, n, d, 1);
    let dd = d_count(n, d);
    let dd_u = dd.to_u32().ok_or_else(|| DetError::Precondition("D_n(d) too large".into()))?;
    let q = |x: Rational| MpInterval::from_rational(&x, LOG_PREC).expect("finite");
    let ln = |x: Rational| q(x).ln().map_err(|_| DetError::PrecisionExhausted);
    let count = ln(Rational::from(d_count(m, b + 1)))?.mul(&q(Rational::from(dd.clone())));
    let fact = ln(Rational::from(Integer::from(Integer::factorial(dd_u))))?;
    let expo = q(Rational::from(Integer::from(m as u64 * d) * &dd));
    let small = ln(r.clone())?.mul(&q(Rational::from(big_b)));
    Ok(count.add(&fact).add(&expo).add(&small))
}

/// Midpoint of [`determinant_log_bound`] as `f64`.
pub fn determinant_bound(m: usize, n: usize, d: u64, r: &Rational) -> Result<f64, DetError> {
    let i = determinant_log_bound(m, n, d, r)?;
    Ok(((i.lo + i.hi) / 2u32).to_f64())
}

/// Upper bound on `log|q|`, `None` for `q = 0`.
pub fn log_abs_upper(q: &Rational) -> Option<Float> {
    if *q == 0 {
        return None;
    }
    let a = MpInterval::from_rational(&Rational::from(q.abs_ref()), LOG_PREC).expect("finite");
    a.ln().ok().map(|i| i.hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from((a, b))
    }

    fn cloud(pts: &[&[Rational]]) -> PointCloud {
        PointCloud {
            points: pts.iter().map(|p| QPoint::new(p.to_vec())).collect(),
            height_bound: 0,
        }
    }

    /// Plain Gauss–Jordan over the rationals, kept separate from the fraction-free
    /// path so the two can check each other.
    fn gauss(mut a: Vec<Vec<Rational>>) -> (Rational, usize) {
        let (rows, cols) = (a.len(), a.first().map_or(0, Vec::len));
        let mut det = Rational::from(1);
        let mut r = 0;
        for c in 0..cols {
            let Some(p) = (r..rows).find(|&i| a[i][c] != 0) else {
                det = Rational::new();
                continue;
            };
            if p != r {
                a.swap(p, r);
                det = -det;
            }
            let piv = a[r][c].clone();
            det *= &piv;
            for i in r + 1..rows {
                let f = Rational::from(&a[i][c] / &piv);
                for j in c..cols {
                    let t = Rational::from(&f * &a[r][j]);
                    a[i][j] -= t;
                }
            }
            r += 1;
            if r == rows {
                break;
            }
        }
        if r < cols {
            det = Rational::new();
        }
        (det, r)
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, count: usize, h: i64) -> PointCloud {
        let pts = (0..count)
            .map(|_| {
                QPoint::new(
                    (0..n)
                        .map(|_| q(rng.gen_range(-h..=h), rng.gen_range(1..=h)))
                        .collect(),
                )
            })
            .collect();
        PointCloud {
            points: pts,
            height_bound: h as u64,
        }
    }

    #[test]
    fn degree_choice() {
        assert_eq!(choose_degree(&HeightValue::Exp(q(9, 1)), 1, 2).unwrap(), 9);
        assert_eq!(choose_degree(&HeightValue::Exp(q(9, 1)), 1, 3).unwrap(), 3);
        for (m, n) in [(1, 2), (1, 3), (2, 3), (2, 5)] {
            assert_eq!(choose_degree(&HeightValue::Exp(q(1, 1)), m, n).unwrap(), 1);
        }
        assert_eq!(choose_degree(&HeightValue::Int(Integer::from(2)), 1, 2), Err(DetError::HeightBelowE));
        // log(10^6) ≈ 13.8155
        assert_eq!(choose_degree(&HeightValue::Int(Integer::from(1_000_000)), 1, 2).unwrap(), 13);
        assert_eq!(choose_degree(&HeightValue::Int(Integer::from(1_000_000)), 2, 3).unwrap(), 190);
    }

    #[test]
    fn matrix_shapes() {
        let m = build_matrix(&cloud(&[&[q(1, 2)]]), 2).unwrap();
        assert_eq!(m.entries, vec![vec![q(1, 1), q(1, 2), q(1, 4)]]);
        let pts = cloud(&[&[q(1, 1), q(2, 1)], &[q(3, 1), q(5, 1)], &[q(0, 1), q(7, 1)]]);
        let m = build_matrix(&pts, 1).unwrap();
        // columns are 1, x2, x1 in graded lex order
        assert_eq!(m.entries[1], vec![q(1, 1), q(5, 1), q(3, 1)]);
        let bad = cloud(&[&[q(1, 1)], &[q(1, 1), q(2, 1)]]);
        assert_eq!(build_matrix(&bad, 1), Err(DetError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn collinear_points() {
        // y = 2x + 1
        let pts = cloud(&[&[q(0, 1), q(1, 1)], &[q(1, 1), q(3, 1)], &[q(1, 2), q(2, 1)]]);
        let r = det_and_rank(&build_matrix(&pts, 1).unwrap());
        assert_eq!(r.determinant, Some(Rational::new()));
        assert_eq!(r.rank, 2);
        // columns (1, y, x): 1 − y + 2x = 0
        assert_eq!(r.kernel.unwrap(), vec![Integer::from(1), Integer::from(-1), Integer::from(2)]);
    }

    #[test]
    fn hyperbola_kernel() {
        let pts: Vec<Vec<Rational>> = [1i64, 2, 3, 4, 5, 7]
            .iter()
            .map(|&k| vec![q(k, 1), q(1, 2 * k)])
            .collect();
        let refs: Vec<&[Rational]> = pts.iter().map(Vec::as_slice).collect();
        let r = det_and_rank(&build_matrix(&cloud(&refs), 2).unwrap());
        assert!(r.rank <= 5);
        // columns 1, y, x, y², xy, x²: 2xy − 1 = 0 after sign normalisation
        let k: Vec<i64> = r.kernel.unwrap().iter().map(|e| e.to_i64().unwrap()).collect();
        assert_eq!(k, vec![1, 0, 0, 0, -2, 0]);
    }

    #[test]
    fn generic_points_have_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts = random_cloud(&mut rng, 2, 6, 50);
            let m = build_matrix(&pts, 2).unwrap();
            let r = det_and_rank(&m);
            let (det, rank) = gauss(m.entries.clone());
            assert_eq!(r.determinant.unwrap(), det);
            assert_eq!(r.rank, rank);
            if rank == 6 {
                assert!(r.kernel.is_none());
            }
        }
    }

    #[test]
    fn clearing_bound() {
        assert_eq!(denominator_clearing_bound(&Integer::from(2), 2, 1), 64);
        let pts = cloud(&[&[q(1, 1), q(2, 1)], &[q(3, 1), q(5, 1)], &[q(0, 1), q(7, 1)]]);
        let m = build_matrix(&pts, 1).unwrap();
        assert_eq!(*det_and_rank(&m).determinant.unwrap().denom(), 1);
        assert_eq!(denominator_within_bound(&m, &Integer::from(7)), Some(true));
    }

    #[test]
    fn log_bound_plug_in() {
        let got = determinant_log_bound(1, 2, 2, &q(1, 2)).unwrap();
        let want = 6.0 * 7f64.ln() + 720f64.ln() + 12.0 + 15.0 * 0.5f64.ln();
        assert!(got.lo.to_f64() <= want + 1e-12 && want - 1e-12 <= got.hi.to_f64());
        assert!(determinant_bound(1, 2, 2, &q(1, 4)).unwrap() < determinant_bound(1, 2, 2, &q(1, 2)).unwrap());
        assert!(determinant_bound(1, 2, 3, &q(1, 2)).unwrap() > determinant_bound(1, 2, 2, &q(1, 2)).unwrap());
        let near_one = determinant_bound(1, 2, 2, &q(999_999, 1_000_000)).unwrap();
        let limit = 6.0 * 7f64.ln() + 720f64.ln() + 12.0;
        assert!((near_one - limit).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn det_rank_kernel_agree(seed in any::<u64>(), n in 1usize..=3, d in 1u32..=3, extra in 0usize..=2, dep in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = enumerate_delta(n, d).len();
            prop_assume!(cols <= 20);
            let mut pts = random_cloud(&mut rng, n, cols, 6);
            if dep {
                // force a point onto the hypersurface x1 = 1/2 through some others
                for p in pts.points.iter_mut().take(cols - extra.min(cols - 1)) {
                    let mut c = p.coords().to_vec();
                    c[0] = q(1, 2);
                    *p = QPoint::new(c);
                }
            }
            let m = build_matrix(&pts, d).unwrap();
            let r = det_and_rank(&m);
            let (det, rank) = gauss(m.entries.clone());
            prop_assert_eq!(r.determinant.clone().unwrap(), det.clone());
            prop_assert_eq!(r.rank, rank);
            prop_assert_eq!(det == 0, r.kernel.is_some());
            if let Some(k) = r.kernel {
                for row in &m.entries {
                    let s = row.iter().zip(&k).fold(Rational::new(), |acc, (a, c)| acc + Rational::from(a * c));
                    prop_assert_eq!(s, Rational::new());
                }
            }
        }

        #[test]
        fn denominators_within_clearing_bound(seed in any::<u64>(), n in 1usize..=3, d in 1u32..=2, h in 1i64..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = enumerate_delta(n, d).len();
            let pts = random_cloud(&mut rng, n, cols, h);
            let m = build_matrix(&pts, d).unwrap();
            prop_assert_eq!(denominator_within_bound(&m, &Integer::from(h)), Some(true));
        }
    }
}
