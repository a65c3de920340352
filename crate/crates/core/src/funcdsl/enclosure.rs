//! Interval backends for rigorous evaluation. Every operation rounds outward.
//!
//! `F64Interval` widens each correctly rounded IEEE result by one ulp in each
//! direction and evaluates transcendentals by Taylor series with explicit
//! remainder terms. `MpInterval` uses MPFR directed rounding.

use rug::ops::Pow;
use std::sync::OnceLock;

use rug::float::{Constant, Round};
use rug::Float;

use super::NamedConst;
use crate::rationals::{Integer, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFailure {
    /// The whole interval is `≤ 0`.
    Domain,
    /// The interval straddles 0.
    Undecided,
}

pub trait Enclosure: Clone + Sized {
    fn from_rational(q: &Rational, prec: u32) -> Option<Self>;
    fn named(c: NamedConst, prec: u32) -> Option<Self>;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    /// `None` when the divisor contains 0.
    fn div(&self, o: &Self) -> Option<Self>;
    fn exp(&self) -> Option<Self>;
    fn ln(&self) -> Result<Self, LogFailure>;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn powi(&self, k: i64) -> Option<Self>;
    fn is_finite(&self) -> bool;
    fn lo_rational(&self) -> Rational;
    fn hi_rational(&self) -> Rational;
    /// Midpoint and radius, radius rounded up.
    fn to_ball(&self) -> (Float, Float);
    fn positive(&self) -> bool;
    fn negative(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F64Interval {
    pub lo: f64,
    pub hi: f64,
}

fn dn(x: f64) -> f64 {
    x.next_down()
}

fn up(x: f64) -> f64 {
    x.next_up()
}

impl F64Interval {
    pub fn point(x: f64) -> Self {
        F64Interval { lo: x, hi: x }
    }

    /// One ulp either side of `x`.
    pub fn around(x: f64) -> Self {
        F64Interval { lo: dn(x), hi: up(x) }
    }

    fn abs_max(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn add_err(&self, r: f64) -> Self {
        F64Interval {
            lo: dn(self.lo - r),
            hi: up(self.hi + r),
        }
    }

    /// `k·ln 2` as an exact head plus a small enclosed tail (`|k| < 2^20`).
    fn ln2_times(k: f64) -> (f64, Self) {
        let hi = f64::from_bits(0x3fe6_2e42_fee0_0000);
        let lo = F64Interval::around(f64::from_bits(0x3dea_39ef_3579_3c76));
        (k * hi, lo.mul(&F64Interval::point(k)))
    }
}

/// `[1/0!, 1/1!, …]` as enclosures.
fn inv_factorials() -> &'static [F64Interval] {
    static T: OnceLock<Vec<F64Interval>> = OnceLock::new();
    T.get_or_init(|| {
        let mut v = vec![F64Interval::point(1.0)];
        for j in 1..=80 {
            let prev: F64Interval = v[j - 1];
            v.push(prev.div(&F64Interval::point(j as f64)).expect("nonzero"));
        }
        v
    })
}

/// `[1/1, 1/3, 1/5, …]` as enclosures.
fn inv_odds() -> &'static [F64Interval] {
    static T: OnceLock<Vec<F64Interval>> = OnceLock::new();
    T.get_or_init(|| {
        (0..16)
            .map(|j| {
                F64Interval::point(1.0)
                    .div(&F64Interval::point((2 * j + 1) as f64))
                    .expect("nonzero")
            })
            .collect()
    })
}

/// Upper bound on `m^k / k!` for `m ≥ 0`.
fn taylor_term_up(m: f64, k: usize) -> f64 {
    let mut t = 1.0f64;
    for j in 1..=k {
        t = up(up(t * m) / j as f64);
    }
    t
}

const EXP_TERMS: usize = 18;
const LOG_TERMS: usize = 12;

/// Enclosure of `log(x)` for a positive normal or subnormal `x`.
fn ln_point(x: f64) -> F64Interval {
    debug_assert!(x > 0.0 && x.is_finite());
    let mut x = x;
    let mut e: i32 = 0;
    if x < f64::MIN_POSITIVE {
        x *= 2f64.powi(54);
        e -= 54;
    }
    let bits = x.to_bits();
    let be = ((bits >> 52) & 0x7ff) as i32 - 1023;
    let mut m = f64::from_bits((bits & !(0x7ffu64 << 52)) | (1023u64 << 52));
    e += be;
    if m > std::f64::consts::SQRT_2 {
        m /= 2.0;
        e += 1;
    }
    // m - 1 is exact (Sterbenz); m + 1 is rounded
    let num = F64Interval::point(m - 1.0);
    let den = F64Interval::around(m + 1.0);
    let s = num.div(&den).expect("positive");
    let t = s.powi(2).expect("finite");
    let odds = inv_odds();
    let mut acc = odds[LOG_TERMS - 1];
    for j in (0..LOG_TERMS - 1).rev() {
        acc = acc.mul(&t).add(&odds[j]);
    }
    let series = s.mul(&acc).mul(&F64Interval::point(2.0));
    let sm = s.abs_max();
    // tail: 2 Σ_{j≥J} s^{2j+1}/(2j+1) ≤ 2 s^{2J+1} / ((2J+1)(1 − s²))
    let mut p = 1.0f64;
    for _ in 0..(2 * LOG_TERMS + 1) {
        p = up(p * sm);
    }
    let tail = up(up(2.0 * p) / dn((2 * LOG_TERMS + 1) as f64 * dn(1.0 - up(sm * sm))));
    let (head, low) = F64Interval::ln2_times(e as f64);
    series.add_err(tail).add(&low).add(&F64Interval::point(head))
}

fn trig_series(x: &F64Interval, sine: bool) -> F64Interval {
    let m = x.abs_max();
    let f = inv_factorials();
    // number of series terms so that the Lagrange remainder is negligible
    let mut n = 4usize;
    while n < 38 && taylor_term_up(m, 2 * n + 2) > 1e-30 {
        n += 1;
    }
    let t = x.powi(2).expect("finite");
    let off = usize::from(sine);
    let coef = |j: usize| {
        let c = f[2 * j + off];
        if j % 2 == 1 {
            c.neg()
        } else {
            c
        }
    };
    let mut acc = coef(n);
    for j in (0..n).rev() {
        acc = acc.mul(&t).add(&coef(j));
    }
    let val = if sine { x.mul(&acc) } else { acc };
    let rem = taylor_term_up(m, 2 * n + 2 + off);
    let r = val.add_err(rem);
    F64Interval {
        lo: r.lo.max(-1.0),
        hi: r.hi.min(1.0),
    }
}

fn f64_pow_bounds(x: f64, k: u64) -> (f64, f64) {
    debug_assert!(x >= 0.0);
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let (mut bl, mut bh) = (x, x);
    let mut k = k;
    while k > 0 {
        if k & 1 == 1 {
            lo = dn(lo * bl).max(0.0);
            hi = up(hi * bh);
        }
        k >>= 1;
        if k > 0 {
            bl = dn(bl * bl).max(0.0);
            bh = up(bh * bh);
        }
    }
    (lo, hi)
}

impl Enclosure for F64Interval {
    fn from_rational(q: &Rational, _prec: u32) -> Option<Self> {
        let f = q.to_f64();
        if !f.is_finite() {
            return None;
        }
        if q.denom() == &1u32 && q.numer().significant_bits() <= 53 {
            return Some(F64Interval::point(f));
        }
        Some(F64Interval::around(f))
    }

    fn named(c: NamedConst, prec: u32) -> Option<Self> {
        match c {
            NamedConst::Pi => Some(F64Interval::around(std::f64::consts::PI)),
            NamedConst::E => F64Interval::from_rational(&Rational::from(1), prec)?.exp(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        F64Interval {
            lo: dn(self.lo + o.lo),
            hi: up(self.hi + o.hi),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        F64Interval {
            lo: dn(self.lo - o.hi),
            hi: up(self.hi - o.lo),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        F64Interval { lo: dn(lo), hi: up(hi) }
    }

    fn neg(&self) -> Self {
        F64Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    fn div(&self, o: &Self) -> Option<Self> {
        if o.lo <= 0.0 && o.hi >= 0.0 {
            return None;
        }
        let p = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(F64Interval { lo: dn(lo), hi: up(hi) })
    }

    fn exp(&self) -> Option<Self> {
        if !(self.hi < 700.0 && self.lo > -700.0) {
            return None;
        }
        let mid = 0.5 * self.lo + 0.5 * self.hi;
        let k = (mid / std::f64::consts::LN_2).round();
        let (head, tail) = F64Interval::ln2_times(k);
        let r = self.sub(&F64Interval::point(head)).sub(&tail);
        let f = inv_factorials();
        let mut acc = f[EXP_TERMS];
        for j in (0..EXP_TERMS).rev() {
            acc = acc.mul(&r).add(&f[j]);
        }
        let m = r.abs_max();
        if m > 0.7 {
            return None;
        }
        // Lagrange remainder, with e^m ≤ 2 for m ≤ 0.7
        let rem = up(2.0 * taylor_term_up(m, EXP_TERMS + 1));
        let s = acc.add_err(rem);
        let scale = 2f64.powi(k as i32);
        Some(F64Interval {
            lo: dn(s.lo * scale).max(0.0),
            hi: up(s.hi * scale),
        })
    }

    fn ln(&self) -> Result<Self, LogFailure> {
        if self.hi <= 0.0 {
            return Err(LogFailure::Domain);
        }
        if self.lo <= 0.0 {
            return Err(LogFailure::Undecided);
        }
        Ok(F64Interval {
            lo: ln_point(self.lo).lo,
            hi: ln_point(self.hi).hi,
        })
    }

    fn sin(&self) -> Self {
        trig_series(self, true)
    }

    fn cos(&self) -> Self {
        trig_series(self, false)
    }

    fn powi(&self, k: i64) -> Option<Self> {
        if k < 0 {
            return F64Interval::point(1.0).div(&self.powi(-k)?);
        }
        let k = k as u64;
        let r = if k % 2 == 0 {
            let mig = if self.lo <= 0.0 && self.hi >= 0.0 {
                0.0
            } else {
                self.lo.abs().min(self.hi.abs())
            };
            F64Interval {
                lo: f64_pow_bounds(mig, k).0,
                hi: f64_pow_bounds(self.abs_max(), k).1,
            }
        } else {
            let lo = if self.lo >= 0.0 {
                f64_pow_bounds(self.lo, k).0
            } else {
                -f64_pow_bounds(-self.lo, k).1
            };
            let hi = if self.hi >= 0.0 {
                f64_pow_bounds(self.hi, k).1
            } else {
                -f64_pow_bounds(-self.hi, k).0
            };
            F64Interval { lo, hi }
        };
        r.is_finite().then_some(r)
    }

    fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn lo_rational(&self) -> Rational {
        Rational::from_f64(self.lo).expect("finite")
    }

    fn hi_rational(&self) -> Rational {
        Rational::from_f64(self.hi).expect("finite")
    }

    fn to_ball(&self) -> (Float, Float) {
        let mid = 0.5 * self.lo + 0.5 * self.hi;
        let rad = up(self.hi - mid).max(up(mid - self.lo)).max(0.0);
        (Float::with_val(53, mid), Float::with_val(53, rad))
    }

    fn positive(&self) -> bool {
        self.lo > 0.0
    }

    fn negative(&self) -> bool {
        self.hi < 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpInterval {
    pub lo: Float,
    pub hi: Float,
}

macro_rules! rnd {
    ($prec:expr, $val:expr, $dir:expr) => {
        Float::with_val_round($prec, $val, $dir).0
    };
}

impl MpInterval {
    fn prec(&self) -> u32 {
        self.lo.prec()
    }

    fn point(prec: u32, v: i64) -> Self {
        MpInterval {
            lo: Float::with_val(prec, v),
            hi: Float::with_val(prec, v),
        }
    }

    fn abs_max(&self) -> Float {
        let a = Float::with_val(self.prec(), self.lo.abs_ref());
        let b = Float::with_val(self.prec(), self.hi.abs_ref());
        if a > b {
            a
        } else {
            b
        }
    }

    fn contains_zero(&self) -> bool {
        self.lo <= 0 && self.hi >= 0
    }

    fn trig(&self, sine: bool) -> Self {
        let p = self.prec();
        // |sin'|, |cos'| ≤ 1, so f(I) ⊆ [f(lo) − w, f(lo) + w]
        let w = rnd!(p, &self.hi - &self.lo, Round::Up);
        let (d, u) = if sine {
            (rnd!(p, self.lo.sin_ref(), Round::Down), rnd!(p, self.lo.sin_ref(), Round::Up))
        } else {
            (rnd!(p, self.lo.cos_ref(), Round::Down), rnd!(p, self.lo.cos_ref(), Round::Up))
        };
        let mut lo = rnd!(p, &d - &w, Round::Down);
        let mut hi = rnd!(p, &u + &w, Round::Up);
        if lo < -1 {
            lo = Float::with_val(p, -1);
        }
        if hi > 1 {
            hi = Float::with_val(p, 1);
        }
        MpInterval { lo, hi }
    }
}

fn mp_pow_bounds(x: &Float, k: u64) -> (Float, Float) {
    let p = x.prec();
    let lo = rnd!(p, Pow::pow(x, &Integer::from(k)), Round::Down);
    let hi = rnd!(p, Pow::pow(x, &Integer::from(k)), Round::Up);
    (lo, hi)
}

impl Enclosure for MpInterval {
    fn from_rational(q: &Rational, prec: u32) -> Option<Self> {
        Some(MpInterval {
            lo: rnd!(prec, q, Round::Down),
            hi: rnd!(prec, q, Round::Up),
        })
    }

    fn named(c: NamedConst, prec: u32) -> Option<Self> {
        match c {
            NamedConst::Pi => Some(MpInterval {
                lo: rnd!(prec, Constant::Pi, Round::Down),
                hi: rnd!(prec, Constant::Pi, Round::Up),
            }),
            NamedConst::E => MpInterval::point(prec, 1).exp(),
        }
    }

    fn add(&self, o: &Self) -> Self {
        let p = self.prec().max(o.prec());
        MpInterval {
            lo: rnd!(p, &self.lo + &o.lo, Round::Down),
            hi: rnd!(p, &self.hi + &o.hi, Round::Up),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        let p = self.prec().max(o.prec());
        MpInterval {
            lo: rnd!(p, &self.lo - &o.hi, Round::Down),
            hi: rnd!(p, &self.hi - &o.lo, Round::Up),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let p = self.prec().max(o.prec());
        let pairs = [(&self.lo, &o.lo), (&self.lo, &o.hi), (&self.hi, &o.lo), (&self.hi, &o.hi)];
        let lo = pairs
            .iter()
            .map(|(a, b)| rnd!(p, *a * *b, Round::Down))
            .reduce(|a, b| if b < a { b } else { a })
            .expect("four");
        let hi = pairs
            .iter()
            .map(|(a, b)| rnd!(p, *a * *b, Round::Up))
            .reduce(|a, b| if b > a { b } else { a })
            .expect("four");
        MpInterval { lo, hi }
    }

    fn neg(&self) -> Self {
        MpInterval {
            lo: Float::with_val(self.prec(), -&self.hi),
            hi: Float::with_val(self.prec(), -&self.lo),
        }
    }

    fn div(&self, o: &Self) -> Option<Self> {
        if o.contains_zero() {
            return None;
        }
        let p = self.prec().max(o.prec());
        let pairs = [(&self.lo, &o.lo), (&self.lo, &o.hi), (&self.hi, &o.lo), (&self.hi, &o.hi)];
        let lo = pairs
            .iter()
            .map(|(a, b)| rnd!(p, *a / *b, Round::Down))
            .reduce(|a, b| if b < a { b } else { a })
            .expect("four");
        let hi = pairs
            .iter()
            .map(|(a, b)| rnd!(p, *a / *b, Round::Up))
            .reduce(|a, b| if b > a { b } else { a })
            .expect("four");
        Some(MpInterval { lo, hi })
    }

    fn exp(&self) -> Option<Self> {
        let p = self.prec();
        let r = MpInterval {
            lo: rnd!(p, self.lo.exp_ref(), Round::Down),
            hi: rnd!(p, self.hi.exp_ref(), Round::Up),
        };
        r.is_finite().then_some(r)
    }

    fn ln(&self) -> Result<Self, LogFailure> {
        if self.hi <= 0 {
            return Err(LogFailure::Domain);
        }
        if self.lo <= 0 {
            return Err(LogFailure::Undecided);
        }
        let p = self.prec();
        Ok(MpInterval {
            lo: rnd!(p, self.lo.ln_ref(), Round::Down),
            hi: rnd!(p, self.hi.ln_ref(), Round::Up),
        })
    }

    fn sin(&self) -> Self {
        self.trig(true)
    }

    fn cos(&self) -> Self {
        self.trig(false)
    }

    fn powi(&self, k: i64) -> Option<Self> {
        let p = self.prec();
        if k < 0 {
            return MpInterval::point(p, 1).div(&self.powi(-k)?);
        }
        let k = k as u64;
        let r = if k % 2 == 0 {
            let mig = if self.contains_zero() {
                Float::with_val(p, 0)
            } else {
                let a = Float::with_val(p, self.lo.abs_ref());
                let b = Float::with_val(p, self.hi.abs_ref());
                if a < b {
                    a
                } else {
                    b
                }
            };
            MpInterval {
                lo: mp_pow_bounds(&mig, k).0,
                hi: mp_pow_bounds(&self.abs_max(), k).1,
            }
        } else {
            // odd powers are monotone and MPFR rounds signed results directly
            MpInterval {
                lo: mp_pow_bounds(&self.lo, k).0,
                hi: mp_pow_bounds(&self.hi, k).1,
            }
        };
        r.is_finite().then_some(r)
    }

    fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    fn lo_rational(&self) -> Rational {
        self.lo.to_rational().expect("finite")
    }

    fn hi_rational(&self) -> Rational {
        self.hi.to_rational().expect("finite")
    }

    fn to_ball(&self) -> (Float, Float) {
        let p = self.prec() + 1;
        let mut mid = Float::with_val(p, &self.lo + &self.hi);
        mid /= 2;
        let a = rnd!(p, &self.hi - &mid, Round::Up);
        let b = rnd!(p, &mid - &self.lo, Round::Up);
        let rad = if a > b { a } else { b };
        (mid, rad)
    }

    fn positive(&self) -> bool {
        self.lo > 0
    }

    fn negative(&self) -> bool {
        self.hi < 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contains(i: &F64Interval, reference: &Float) -> bool {
        *reference >= i.lo && *reference <= i.hi
    }

    #[test]
    fn f64_exp_encloses_mpfr() {
        for k in -400..400 {
            let x = k as f64 * 0.37 + 0.001;
            let i = F64Interval::point(x).exp().unwrap();
            let r = Float::with_val(256, x).exp();
            assert!(contains(&i, &r), "exp({x})");
            assert!((i.hi - i.lo) / i.lo < 1e-14);
        }
    }

    #[test]
    fn f64_log_encloses_mpfr() {
        for k in 1..2000 {
            let x = k as f64 * 0.013 + 1e-300 * k as f64;
            let i = F64Interval::point(x).ln().unwrap();
            let r = Float::with_val(256, x).ln();
            assert!(contains(&i, &r), "log({x})");
        }
        let tiny = F64Interval::point(5e-320).ln().unwrap();
        assert!(contains(&tiny, &Float::with_val(256, 5e-320).ln()));
        assert_eq!(F64Interval::point(0.0).ln(), Err(LogFailure::Domain));
        let straddle = F64Interval { lo: -1.0, hi: 1.0 };
        assert_eq!(straddle.ln(), Err(LogFailure::Undecided));
    }

    #[test]
    fn f64_trig_encloses_mpfr() {
        for k in -300..300 {
            let x = k as f64 * 0.021;
            let s = F64Interval::point(x).sin();
            let c = F64Interval::point(x).cos();
            assert!(contains(&s, &Float::with_val(256, x).sin()), "sin({x})");
            assert!(contains(&c, &Float::with_val(256, x).cos()), "cos({x})");
            assert!(s.hi - s.lo < 1e-12);
        }
    }

    #[test]
    fn powi_even_straddling_zero() {
        let i = F64Interval { lo: -2.0, hi: 1.0 };
        let p = i.powi(2).unwrap();
        assert!(p.lo <= 0.0 && p.lo > -1e-300 && p.hi >= 4.0);
        let m = MpInterval::from_rational(&Rational::from(-2), 80)
            .unwrap()
            .add(&MpInterval::from_rational(&Rational::from((1, 3)), 80).unwrap());
        let c = m.powi(3).unwrap();
        let exact = Rational::from((-125, 27));
        assert!(c.lo_rational() <= exact && c.hi_rational() >= exact);
    }

    #[test]
    fn mp_trig_and_pi() {
        let x = MpInterval::from_rational(&Rational::from((1, 3)), 128).unwrap();
        let s = x.sin();
        let r = Float::with_val(512, Rational::from((1, 3))).sin();
        assert!(r >= s.lo && r <= s.hi);
        let pi = MpInterval::named(NamedConst::Pi, 100).unwrap();
        let rp = Float::with_val(512, Constant::Pi);
        assert!(rp >= pi.lo && rp <= pi.hi);
    }
}
