//! The polynomial change of variables `z ↦ (z_1 + η z_m^D_1, …, z_m)`.

use rug::ops::Pow;
use rug::Rational;

use super::HoloError;

/// A complex number with exact rational parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexQ {
    pub re: Rational,
    pub im: Rational,
}

impl ComplexQ {
    pub fn new(re: impl Into<Rational>, im: impl Into<Rational>) -> Self {
        ComplexQ {
            re: re.into(),
            im: im.into(),
        }
    }

    pub fn add(&self, o: &ComplexQ) -> ComplexQ {
        ComplexQ {
            re: Rational::from(&self.re + &o.re),
            im: Rational::from(&self.im + &o.im),
        }
    }

    pub fn sub(&self, o: &ComplexQ) -> ComplexQ {
        ComplexQ {
            re: Rational::from(&self.re - &o.re),
            im: Rational::from(&self.im - &o.im),
        }
    }

    pub fn mul(&self, o: &ComplexQ) -> ComplexQ {
        ComplexQ {
            re: Rational::from(&self.re * &o.re) - Rational::from(&self.im * &o.im),
            im: Rational::from(&self.re * &o.im) + Rational::from(&self.im * &o.re),
        }
    }

    pub fn scale(&self, q: &Rational) -> ComplexQ {
        ComplexQ {
            re: Rational::from(&self.re * q),
            im: Rational::from(&self.im * q),
        }
    }

    pub fn pow(&self, k: u32) -> ComplexQ {
        let mut out = ComplexQ::new(1, 0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn norm_sq(&self) -> Rational {
        Rational::from(self.re.square_ref()) + Rational::from(self.im.square_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaMap {
    pub m: usize,
    pub eta: Rational,
    /// `D_1..D_{m−1}`.
    pub d: Vec<u32>,
}

impl ThetaMap {
    pub fn new(m: usize, eta: Rational, d: Vec<u32>) -> Result<Self, HoloError> {
        if m < 2 || d.len() != m - 1 {
            return Err(HoloError::Precondition(format!("need m ≥ 2 and m − 1 exponents, got m = {m}, {} exponents", d.len())));
        }
        if eta <= 0 {
            return Err(HoloError::Precondition("η must be positive".into()));
        }
        if d.contains(&0) {
            return Err(HoloError::Precondition("exponents D_i must be at least 1".into()));
        }
        Ok(ThetaMap { m, eta, d })
    }

    fn shift(&self, z: &[ComplexQ], sign: bool) -> Vec<ComplexQ> {
        assert_eq!(z.len(), self.m, "point dimension");
        let last = &z[self.m - 1];
        let mut out: Vec<ComplexQ> = self
            .d
            .iter()
            .zip(z)
            .map(|(&d, zi)| {
                let step = last.pow(d).scale(&self.eta);
                if sign {
                    zi.add(&step)
                } else {
                    zi.sub(&step)
                }
            })
            .collect();
        out.push(last.clone());
        out
    }
}

pub fn theta_apply(map: &ThetaMap, z: &[ComplexQ]) -> Vec<ComplexQ> {
    map.shift(z, true)
}

pub fn theta_invert(map: &ThetaMap, z: &[ComplexQ]) -> Vec<ComplexQ> {
    map.shift(z, false)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaCheck {
    /// `max_i R′ + η R′^D_i`, bounding `|θ(z)_i|` on the closed polydisk of radius `R′`.
    pub forward_sup: Rational,
    pub forward_ok: bool,
    /// `1 + η`, bounding `|θ⁻¹(z)_i|` on the closed unit polydisk.
    pub inverse_sup: Rational,
    pub inverse_ok: bool,
}

impl ThetaCheck {
    pub fn passed(&self) -> bool {
        self.forward_ok && self.inverse_ok
    }
}

/// Checks `θ[closed Δ(R′)^m] ⊆ Δ(R)^m` and `θ⁻¹[closed Δ(1)^m] ⊆ Δ(R″)^m`
/// through the triangle inequality.
pub fn theta_check(map: &ThetaMap, r: &Rational, r1: &Rational, r2: &Rational) -> Result<ThetaCheck, HoloError> {
    if !(*r2 > 1 && r2 < r1 && r1 < r) {
        return Err(HoloError::Precondition(format!("need 1 < R″ < R′ < R, got {r2}, {r1}, {r}")));
    }
    let forward_sup = map
        .d
        .iter()
        .map(|&d| Rational::from(r1 + Rational::from(&map.eta * Rational::from((&r1).pow(d)))))
        .chain(std::iter::once(r1.clone()))
        .max()
        .expect("m ≥ 2");
    let inverse_sup = Rational::from(1) + &map.eta;
    Ok(ThetaCheck {
        forward_ok: forward_sup < *r,
        forward_sup,
        inverse_ok: inverse_sup < *r2,
        inverse_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::from((a, b))
    }

    #[test]
    fn examples() {
        let map = ThetaMap::new(2, q(1, 10), vec![2]).unwrap();
        let out = theta_check(&map, &Rational::from(2), &q(3, 2), &q(6, 5)).unwrap();
        assert_eq!(out.forward_sup, q(69, 40));
        assert!(out.forward_ok);
        assert_eq!(out.inverse_sup, q(11, 10));
        assert!(out.inverse_ok);
        let wide = ThetaMap::new(2, q(1, 2), vec![2]).unwrap();
        assert!(!theta_check(&wide, &Rational::from(2), &q(3, 2), &q(6, 5)).unwrap().passed());
        assert!(theta_check(&map, &Rational::from(2), &q(6, 5), &q(3, 2)).is_err());
        let z = vec![ComplexQ::new(q(1, 2), 0), ComplexQ::new(0, 1)];
        let w = theta_apply(&map, &z);
        assert_eq!(w[0], ComplexQ::new(q(2, 5), 0));
        assert_eq!(theta_invert(&map, &w), z);
    }

    proptest! {
        #[test]
        fn inverse_is_exact(a in -50i64..50, b in -50i64..50, c in -50i64..50, d in -50i64..50, e in -50i64..50, f in -50i64..50,
                            d1 in 1u32..6, d2 in 1u32..6, eta in 1i64..20) {
            let map = ThetaMap::new(3, q(eta, 7), vec![d1, d2]).unwrap();
            let z = vec![ComplexQ::new(q(a, 9), q(b, 11)), ComplexQ::new(q(c, 13), q(d, 3)), ComplexQ::new(q(e, 10), q(f, 17))];
            prop_assert_eq!(theta_invert(&map, &theta_apply(&map, &z)), z.clone());
            prop_assert_eq!(theta_apply(&map, &theta_invert(&map, &z)), z);
        }

        #[test]
        fn sufficient_conditions_are_met_on_samples(eta in 1i64..30, d1 in 1u32..4, k in 0u32..8, j in 0u32..8) {
            let map = ThetaMap::new(2, q(eta, 100), vec![d1]).unwrap();
            let (r, r1, r2) = (Rational::from(2), q(3, 2), q(5, 4));
            let chk = theta_check(&map, &r, &r1, &r2).unwrap();
            // points on the torus with rational coordinates from Pythagorean triples
            let pts = [(3, 4, 5), (5, 12, 13), (8, 15, 17), (7, 24, 25), (20, 21, 29), (12, 35, 37), (9, 40, 41), (28, 45, 53)];
            let u = |(a, b, c): (i64, i64, i64), s: &Rational| ComplexQ::new(q(a, c) * s.clone(), q(b, c) * s.clone());
            if chk.forward_ok {
                let z = vec![u(pts[k as usize], &r1), u(pts[j as usize], &r1)];
                let w = theta_apply(&map, &z);
                prop_assert!(w.iter().all(|c| c.norm_sq() < Rational::from(r.square_ref())));
            }
            if chk.inverse_ok {
                let z = vec![u(pts[k as usize], &Rational::from(1)), u(pts[j as usize], &Rational::from(1))];
                let w = theta_invert(&map, &z);
                prop_assert!(w.iter().all(|c| c.norm_sq() < Rational::from(r2.square_ref())));
            }
        }
    }
}
