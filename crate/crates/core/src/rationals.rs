//! Exact rationals, heights and enumeration of height-bounded points in boxes.

use rug::ops::DivRounding;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
pub use rug::{Integer, Rational};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RationalsError {
    #[error("height bound must be at least 1")]
    ZeroHeight,
    #[error("empty box on coordinate {0}")]
    EmptyBox(usize),
    #[error("box has {got} coordinates, expected {expected}")]
    BoxDimension { expected: usize, got: usize },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("oracle could not certify membership of {0}")]
    OracleUndecided(QPoint),
    #[error("cannot parse rational {0:?}")]
    Parse(String),
}

/// A point of `Q^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QPoint {
    coords: Vec<Rational>,
}

impl QPoint {
    pub fn new(coords: Vec<Rational>) -> Self {
        assert!(!coords.is_empty(), "QPoint needs at least one coordinate");
        QPoint { coords }
    }

    pub fn coords(&self) -> &[Rational] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<Rational> {
        self.coords
    }
}

impl fmt::Display for QPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Height of a single rational: `max(|a|, b)`.
pub fn rational_height(q: &Rational) -> Integer {
    let a = q.numer().clone().abs();
    let b = q.denom();
    if a > *b {
        a
    } else {
        b.clone()
    }
}

pub fn height(p: &QPoint) -> Integer {
    p.coords
        .iter()
        .map(rational_height)
        .max()
        .expect("nonempty point")
}

/// Points of a common dimension, all of height at most `height_bound`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointCloud {
    pub points: Vec<QPoint>,
    pub height_bound: u64,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(QPoint::dim)
    }

    /// One row per coordinate: `coord_index,numerator,denominator`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("coord_index,numerator,denominator\n");
        for p in &self.points {
            for (i, c) in p.coords.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", i, c.numer(), c.denom()));
            }
        }
        out
    }

    /// Parses the CSV layout of [`PointCloud::to_csv`]; a new point starts whenever
    /// `coord_index` returns to 0.
    pub fn from_csv(text: &str, height_bound: u64) -> Result<Self, RationalsError> {
        let mut points = Vec::new();
        let mut cur: Vec<Rational> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || RationalsError::Parse(line.to_string());
            if fields.len() != 3 {
                return Err(bad());
            }
            let idx: usize = fields[0].parse().map_err(|_| bad())?;
            let num = Integer::from_str(fields[1]).map_err(|_| bad())?;
            let den = Integer::from_str(fields[2]).map_err(|_| bad())?;
            if den <= 0 {
                return Err(bad());
            }
            if idx == 0 && !cur.is_empty() {
                points.push(QPoint::new(std::mem::take(&mut cur)));
            }
            if idx != cur.len() {
                return Err(bad());
            }
            cur.push(Rational::from((num, den)));
        }
        if !cur.is_empty() {
            points.push(QPoint::new(cur));
        }
        Ok(PointCloud { points, height_bound })
    }

    /// Array of points, each an array of `"a/b"` strings.
    pub fn to_json_strings(&self) -> Vec<Vec<String>> {
        self.points
            .iter()
            .map(|p| p.coords.iter().map(format_rational).collect())
            .collect()
    }
}

/// Always `a/b`, including `b = 1`.
pub fn format_rational(q: &Rational) -> String {
    format!("{}/{}", q.numer(), q.denom())
}

/// Accepts `a`, `a/b`, and finite decimals such as `-0.25`.
pub fn parse_rational(s: &str) -> Result<Rational, RationalsError> {
    let t = s.trim();
    let err = || RationalsError::Parse(s.to_string());
    if let Some((int_part, frac_part)) = t.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let neg = int_part.starts_with('-');
        let whole = Integer::from_str(if int_part.is_empty() || int_part == "-" {
            "0"
        } else {
            int_part
        })
        .map_err(|_| err())?;
        let frac = Integer::from_str(frac_part).map_err(|_| err())?;
        let scale = Integer::from(Integer::u_pow_u(10, frac_part.len() as u32));
        let f = Rational::from((frac, scale));
        let w = Rational::from(whole.abs());
        let v = w + f;
        return Ok(if neg { -v } else { v });
    }
    Rational::from_str(t).map_err(|_| err())
}

/// Closed rational interval `[lo, hi]`.
pub type Interval = (Rational, Rational);

/// Height-bounded rationals in `[lo, hi]`, in (denominator, numerator) order.
#[derive(Clone, Debug)]
pub struct AxisIter {
    h: i64,
    lo: Rational,
    hi: Rational,
    b: i64,
    a: i64,
    a_end: i64,
}

impl AxisIter {
    pub fn new(h: u64, lo: &Rational, hi: &Rational) -> Self {
        let mut it = AxisIter {
            h: h as i64,
            lo: lo.clone(),
            hi: hi.clone(),
            b: 0,
            a: 1,
            a_end: 0,
        };
        it.next_denominator();
        it
    }

    fn next_denominator(&mut self) {
        while self.b < self.h {
            self.b += 1;
            if let Some((lo, hi)) = numerator_range(self.h as u64, &self.lo, &self.hi, self.b) {
                self.a = lo;
                self.a_end = hi;
                return;
            }
        }
        self.b = self.h + 1;
    }
}

/// Numerators `a` with `lo ≤ a/b ≤ hi` and `|a| ≤ h`, coprimality not checked.
fn numerator_range(h: u64, lo: &Rational, hi: &Rational, b: i64) -> Option<(i64, i64)> {
    let bz = Integer::from(b);
    let l = Rational::from(lo * &bz).ceil().numer().clone();
    let u = Rational::from(hi * &bz).floor().numer().clone();
    let l = l.max(Integer::from(-(h as i64))).to_i64().unwrap_or(i64::MIN);
    let u = u.min(Integer::from(h)).to_i64().unwrap_or(i64::MAX);
    (l <= u).then_some((l, u))
}

impl Iterator for AxisIter {
    type Item = (i64, i64);

    fn next(&mut self) -> Option<(i64, i64)> {
        loop {
            if self.b > self.h {
                return None;
            }
            if self.a > self.a_end {
                self.next_denominator();
                continue;
            }
            let a = self.a;
            self.a += 1;
            if gcd(a.unsigned_abs(), self.b as u64) == 1 {
                return Some((a, self.b));
            }
        }
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// `a/b` for a pair already in lowest terms with `b > 0`.
pub fn pair_to_rational((a, b): (i64, i64)) -> Rational {
    unsafe { Rational::from_canonical(Integer::from(a), Integer::from(b)) }
}

fn check_box(n: usize, h: u64, bx: &[Interval]) -> Result<(), RationalsError> {
    if n == 0 {
        return Err(RationalsError::ZeroDimension);
    }
    if h == 0 {
        return Err(RationalsError::ZeroHeight);
    }
    if bx.len() != n {
        return Err(RationalsError::BoxDimension {
            expected: n,
            got: bx.len(),
        });
    }
    for (i, (lo, hi)) in bx.iter().enumerate() {
        if lo > hi {
            return Err(RationalsError::EmptyBox(i));
        }
    }
    Ok(())
}

pub fn axis_values(h: u64, lo: &Rational, hi: &Rational) -> Vec<Rational> {
    AxisIter::new(h, lo, hi).map(pair_to_rational).collect()
}

/// All points of `box` with height at most `h`; the cartesian product of the
/// per-axis enumerations, first coordinate slowest.
pub fn enumerate_box(n: usize, h: u64, bx: &[Interval]) -> Result<PointCloud, RationalsError> {
    check_box(n, h, bx)?;
    let axes: Vec<Vec<Rational>> = bx.iter().map(|(lo, hi)| axis_values(h, lo, hi)).collect();
    let mut points = Vec::with_capacity(axes.iter().map(Vec::len).product());
    for_each_product(&axes, |coords| points.push(QPoint::new(coords.to_vec())));
    Ok(PointCloud {
        points,
        height_bound: h,
    })
}

fn for_each_product<T: Clone>(axes: &[Vec<T>], mut f: impl FnMut(&[T])) {
    if axes.iter().any(Vec::is_empty) {
        return;
    }
    let n = axes.len();
    let mut idx = vec![0usize; n];
    let mut cur: Vec<T> = axes.iter().map(|a| a[0].clone()).collect();
    loop {
        f(&cur);
        let mut k = n;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                cur[k] = axes[k][idx[k]].clone();
                break;
            }
            idx[k] = 0;
            cur[k] = axes[k][0].clone();
        }
    }
}

/// A certified membership predicate: `Ok(true)`/`Ok(false)` are proofs, `Err` means
/// the precision budget ran out.
pub trait Membership: Sync {
    fn decide(&self, p: &QPoint) -> Result<bool, Undecided>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Undecided;

impl<F> Membership for F
where
    F: Fn(&QPoint) -> Result<bool, Undecided> + Sync,
{
    fn decide(&self, p: &QPoint) -> Result<bool, Undecided> {
        self(p)
    }
}

/// `N(X, H)` together with the members, by filtering [`enumerate_box`] through the
/// oracle. Work is sharded over the first axis and merged in enumeration order.
pub fn count_points(
    oracle: &dyn Membership,
    n: usize,
    h: u64,
    bx: &[Interval],
) -> Result<(u64, PointCloud), RationalsError> {
    check_box(n, h, bx)?;
    let axes: Vec<Vec<Rational>> = bx.iter().map(|(lo, hi)| axis_values(h, lo, hi)).collect();
    let shards: Vec<Result<Vec<QPoint>, RationalsError>> = axes[0]
        .par_iter()
        .map(|first| {
            let mut rest = vec![vec![first.clone()]];
            rest.extend_from_slice(&axes[1..]);
            let mut found = Vec::new();
            let mut err = None;
            for_each_product(&rest, |coords| {
                if err.is_some() {
                    return;
                }
                let p = QPoint::new(coords.to_vec());
                match oracle.decide(&p) {
                    Ok(true) => found.push(p),
                    Ok(false) => {}
                    Err(Undecided) => err = Some(RationalsError::OracleUndecided(p)),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(found),
            }
        })
        .collect();
    let mut points = Vec::new();
    for s in shards {
        points.extend(s?);
    }
    Ok((
        points.len() as u64,
        PointCloud {
            points,
            height_bound: h,
        },
    ))
}

/// Counting on a graph `x_n = f(x_1, …, x_{n−1})`. Only the leading coordinates are
/// enumerated, each passed to `fibre` as `(numerator, denominator)` pairs in lowest
/// terms; `fibre` must return every `y` of height at most `h` with `(lead, y)` in the
/// set (a certified-complete list), or `Undecided`. The first axis is streamed one
/// denominator at a time, so memory stays proportional to the output.
pub fn count_graph_points<F>(
    fibre: F,
    n: usize,
    h: u64,
    bx: &[Interval],
) -> Result<(u64, PointCloud), RationalsError>
where
    F: Fn(&[(i64, i64)]) -> Result<Vec<Rational>, Undecided> + Sync,
{
    check_box(n, h, bx)?;
    if n < 2 {
        return Err(RationalsError::ZeroDimension);
    }
    let (ylo, yhi) = &bx[n - 1];
    let (xlo, xhi) = &bx[0];
    let rest: Vec<Vec<(i64, i64)>> = bx[1..n - 1]
        .iter()
        .map(|(lo, hi)| AxisIter::new(h, lo, hi).collect())
        .collect();
    if rest.iter().any(Vec::is_empty) {
        return Ok((0, PointCloud { points: Vec::new(), height_bound: h }));
    }
    let hz = Integer::from(h);
    let shards: Vec<Result<Vec<QPoint>, RationalsError>> = (1..=h as i64)
        .into_par_iter()
        .map(|b| {
            let mut found = Vec::new();
            let Some((alo, ahi)) = numerator_range(h, xlo, xhi, b) else {
                return Ok(found);
            };
            let mut lead = vec![(0i64, b); n - 1];
            let mut idx = vec![0usize; n - 2];
            for a in alo..=ahi {
                if gcd(a.unsigned_abs(), b as u64) != 1 {
                    continue;
                }
                lead[0] = (a, b);
                idx.iter_mut().for_each(|i| *i = 0);
                for (k, axis) in rest.iter().enumerate() {
                    lead[k + 1] = axis[0];
                }
                loop {
                    match fibre(&lead) {
                        Ok(ys) => {
                            for y in ys {
                                if &y >= ylo && &y <= yhi && rational_height(&y) <= hz {
                                    let mut c: Vec<Rational> = lead.iter().map(|&p| pair_to_rational(p)).collect();
                                    c.push(y);
                                    found.push(QPoint::new(c));
                                }
                            }
                        }
                        Err(Undecided) => {
                            let c = lead.iter().map(|&p| pair_to_rational(p)).collect();
                            return Err(RationalsError::OracleUndecided(QPoint::new(c)));
                        }
                    }
                    // odometer over the remaining leading axes
                    let mut k = rest.len();
                    loop {
                        if k == 0 {
                            break;
                        }
                        k -= 1;
                        idx[k] += 1;
                        if idx[k] < rest[k].len() {
                            lead[k + 1] = rest[k][idx[k]];
                            break;
                        }
                        idx[k] = 0;
                        lead[k + 1] = rest[k][0];
                    }
                    if idx.iter().all(|&i| i == 0) {
                        break;
                    }
                }
            }
            Ok(found)
        })
        .collect();
    let mut points = Vec::new();
    for s in shards {
        points.extend(s?);
    }
    Ok((
        points.len() as u64,
        PointCloud {
            points,
            height_bound: h,
        },
    ))
}

/// The fraction with least denominator in the closed interval `[lo, hi]`, provided
/// that denominator is at most `max_den`.
pub fn simplest_in(lo: &Rational, hi: &Rational, max_den: u64) -> Option<Rational> {
    assert!(lo <= hi);
    let (mut p, mut q) = lo.clone().into_numer_denom();
    let (mut r, mut s) = hi.clone().into_numer_denom();
    let (mut h0, mut h1) = (Integer::from(0), Integer::from(1));
    let (mut k0, mut k1) = (Integer::from(1), Integer::from(0));
    let max = Integer::from(max_den);
    loop {
        let a = Integer::from(DivRounding::div_floor(&p, &q));
        let term = if Integer::from(&a * &q) == p {
            Some(a.clone())
        } else if Integer::from(&a + 1u32) * &s <= r {
            Some(Integer::from(&a + 1u32))
        } else {
            None
        };
        let t = term.clone().unwrap_or_else(|| a.clone());
        let h2 = Integer::from(&t * &h1) + &h0;
        let k2 = Integer::from(&t * &k1) + &k0;
        if k2 > max {
            return None;
        }
        if term.is_some() {
            return Some(Rational::from((h2, k2)));
        }
        h0 = std::mem::replace(&mut h1, h2);
        k0 = std::mem::replace(&mut k1, k2);
        let np = s.clone();
        let nq = Integer::from(&r - Integer::from(&a * &s));
        let nr = q.clone();
        let ns = Integer::from(&p - Integer::from(&a * &q));
        p = np;
        q = nq;
        r = nr;
        s = ns;
    }
}

/// [`simplest_in`] on `[p/q, r/s]` in `i128`, for the dyadic endpoints produced by
/// double-precision enclosures. Returns `(num, den)`.
pub fn simplest_in_i128(
    mut p: i128,
    mut q: i128,
    mut r: i128,
    mut s: i128,
    max_den: i128,
) -> Option<(i128, i128)> {
    debug_assert!(q > 0 && s > 0);
    let (mut h0, mut h1, mut k0, mut k1) = (0i128, 1i128, 1i128, 0i128);
    loop {
        let a = p.div_euclid(q);
        let (t, done) = if a * q == p {
            (a, true)
        } else if (a + 1).checked_mul(s)? <= r {
            (a + 1, true)
        } else {
            (a, false)
        };
        let h2 = t.checked_mul(h1)?.checked_add(h0)?;
        let k2 = t.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            return None;
        }
        if done {
            return Some((h2, k2));
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let (np, nq, nr, ns) = (s, r - a * s, q, p - a * q);
        p = np;
        q = nq;
        r = nr;
        s = ns;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from((a, b))
    }

    fn unit() -> Interval {
        (q(0, 1), q(1, 1))
    }

    #[test]
    fn heights() {
        assert_eq!(height(&QPoint::new(vec![q(1, 2)])), 2);
        assert_eq!(height(&QPoint::new(vec![q(0, 1)])), 1);
        assert_eq!(height(&QPoint::new(vec![q(1, 2), q(2, 3)])), 3);
        assert_eq!(height(&QPoint::new(vec![q(-7, 3)])), 7);
    }

    #[test]
    fn small_boxes() {
        let c = enumerate_box(1, 2, &[unit()]).unwrap();
        let got: Vec<Rational> = c.points.iter().map(|p| p.coords()[0].clone()).collect();
        assert_eq!(got, vec![q(0, 1), q(1, 1), q(1, 2)]);
        assert_eq!(enumerate_box(1, 3, &[unit()]).unwrap().len(), 5);
        assert_eq!(enumerate_box(2, 2, &[unit(), unit()]).unwrap().len(), 9);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(enumerate_box(1, 0, &[unit()]), Err(RationalsError::ZeroHeight));
        assert_eq!(
            enumerate_box(1, 3, &[(q(1, 1), q(0, 1))]),
            Err(RationalsError::EmptyBox(0))
        );
    }

    #[test]
    fn box_with_no_points_inside_is_not_an_error() {
        let c = enumerate_box(1, 2, &[(q(1, 5), q(1, 4))]).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn symmetric_box() {
        let c = enumerate_box(1, 3, &[(q(-1, 1), q(1, 1))]).unwrap();
        assert_eq!(c.len(), 9);
        for p in &c.points {
            let neg = QPoint::new(vec![-p.coords()[0].clone()]);
            assert!(c.points.contains(&neg));
            assert_eq!(height(&neg), height(p));
        }
    }

    #[test]
    fn count_examples() {
        let square = |p: &QPoint| Ok(p.coords()[1] == Rational::from(p.coords()[0].square_ref()));
        let (n, cloud) = count_points(&square, 2, 3, &[unit(), unit()]).unwrap();
        assert_eq!(n, 2);
        assert_eq!(cloud.points[0].coords(), &[q(0, 1), q(0, 1)]);
        let all = |_: &QPoint| Ok(true);
        assert_eq!(count_points(&all, 1, 3, &[unit()]).unwrap().0, 5);
        let none = |_: &QPoint| Ok(false);
        assert_eq!(count_points(&none, 1, 3, &[unit()]).unwrap().0, 0);
        let stuck = |_: &QPoint| Err(Undecided);
        assert!(matches!(
            count_points(&stuck, 1, 3, &[unit()]),
            Err(RationalsError::OracleUndecided(_))
        ));
    }

    #[test]
    fn graph_count_matches_filter() {
        let fibre = |lead: &[(i64, i64)]| Ok(vec![Rational::from((lead[0].0 * lead[0].0, lead[0].1 * lead[0].1))]);
        let (n, cloud) = count_graph_points(fibre, 2, 7, &[unit(), unit()]).unwrap();
        let square = |p: &QPoint| Ok(p.coords()[1] == Rational::from(p.coords()[0].square_ref()));
        let (m, reference) = count_points(&square, 2, 7, &[unit(), unit()]).unwrap();
        assert_eq!(n, m);
        let mut a = cloud.points.clone();
        let mut b = reference.points.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let c = enumerate_box(2, 3, &[(q(-1, 1), q(1, 1)), unit()]).unwrap();
        let back = PointCloud::from_csv(&c.to_csv(), 3).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parse_forms() {
        assert_eq!(parse_rational("3/6").unwrap(), q(1, 2));
        assert_eq!(parse_rational("-0.25").unwrap(), q(-1, 4));
        assert_eq!(parse_rational("7").unwrap(), q(7, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn simplest_fraction() {
        assert_eq!(simplest_in(&q(3, 10), &q(4, 10), 100), Some(q(1, 3)));
        assert_eq!(simplest_in(&q(1, 2), &q(1, 2), 100), Some(q(1, 2)));
        assert_eq!(simplest_in(&q(1, 2), &q(1, 2), 1), None);
        assert_eq!(simplest_in(&q(-7, 5), &q(-4, 3), 100), Some(q(-4, 3)));
        assert_eq!(simplest_in_i128(3, 10, 4, 10, 100), Some((1, 3)));
        assert_eq!(simplest_in_i128(-7, 5, -4, 3, 100), Some((-4, 3)));
    }
}
