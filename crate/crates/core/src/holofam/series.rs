//! Exact truncated multivariate power series over the rationals.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rug::Rational;

use super::HoloError;
use crate::funcdsl::{Expr, Node};
use crate::multiidx::{enumerate_delta, index_count, IndexKind, MultiIndex};

/// The monomials of total degree at most `deg`, in graded-lex order.
#[derive(Debug, PartialEq, Eq)]
pub struct Monomials {
    pub m: usize,
    pub deg: u32,
    pub alphas: Vec<MultiIndex>,
    pos: HashMap<Vec<u32>, usize>,
    /// `prefix[k]` = number of monomials of degree < k.
    prefix: Vec<usize>,
}

impl Monomials {
    pub fn new(m: usize, deg: u32) -> Arc<Self> {
        let alphas = enumerate_delta(m, deg);
        let pos = alphas.iter().enumerate().map(|(i, a)| (a.0.clone(), i)).collect();
        let prefix = (0..=deg + 1)
            .map(|k| {
                if k == 0 {
                    0
                } else {
                    index_count(IndexKind::UpToDegree, m, (k - 1) as u64).to_usize().expect("small")
                }
            })
            .collect();
        Arc::new(Monomials {
            m,
            deg,
            alphas,
            pos,
            prefix,
        })
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.pos.get(alpha).copied()
    }

    /// Number of monomials of degree at most `k`.
    pub fn up_to(&self, k: u32) -> usize {
        self.prefix[(k.min(self.deg) + 1) as usize]
    }

    fn degree(&self, i: usize) -> u32 {
        self.alphas[i].degree() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub mono: Arc<Monomials>,
    pub c: Vec<Rational>,
}

impl Series {
    pub fn zero(mono: &Arc<Monomials>) -> Self {
        Series {
            mono: mono.clone(),
            c: vec![Rational::new(); mono.len()],
        }
    }

    pub fn constant(mono: &Arc<Monomials>, q: Rational) -> Self {
        let mut s = Self::zero(mono);
        s.c[0] = q;
        s
    }

    pub fn var(mono: &Arc<Monomials>, i: usize) -> Self {
        let mut s = Self::zero(mono);
        if mono.deg >= 1 {
            let mut e = vec![0; mono.m];
            e[i - 1] = 1;
            s.c[mono.position(&e).expect("degree-one monomial")] = Rational::from(1);
        }
        s
    }

    fn zip(&self, other: &Series, f: impl Fn(&Rational, &Rational) -> Rational) -> Series {
        Series {
            mono: self.mono.clone(),
            c: self.c.iter().zip(&other.c).map(|(a, b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Series) -> Series {
        self.zip(other, |a, b| Rational::from(a + b))
    }

    pub fn sub(&self, other: &Series) -> Series {
        self.zip(other, |a, b| Rational::from(a - b))
    }

    pub fn neg(&self) -> Series {
        Series {
            mono: self.mono.clone(),
            c: self.c.iter().map(|a| Rational::from(-a)).collect(),
        }
    }

    fn sum_index(&self, i: usize, j: usize) -> usize {
        let s: Vec<u32> = self.mono.alphas[i].0.iter().zip(&self.mono.alphas[j].0).map(|(a, b)| a + b).collect();
        self.mono.position(&s).expect("degree within truncation")
    }

    pub fn mul(&self, other: &Series) -> Series {
        let mono = &self.mono;
        let mut out = Series::zero(mono);
        for (i, a) in self.c.iter().enumerate() {
            if *a == 0 {
                continue;
            }
            let room = mono.deg - mono.degree(i);
            for j in 0..mono.up_to(room) {
                let b = &other.c[j];
                if *b == 0 {
                    continue;
                }
                let k = if mono.m == 1 { i + j } else { self.sum_index(i, j) };
                out.c[k] += Rational::from(a * b);
            }
        }
        out
    }

    pub fn div(&self, other: &Series) -> Result<Series, HoloError> {
        let b0 = other.c[0].clone();
        if b0 == 0 {
            return Err(HoloError::Unsupported("division by a series vanishing at the origin".into()));
        }
        let mono = &self.mono;
        let mut q = Series::zero(mono);
        for k in 0..mono.len() {
            let alpha = &mono.alphas[k].0;
            let mut acc = self.c[k].clone();
            for j in 1..mono.up_to(mono.degree(k)) {
                let b = &other.c[j];
                if *b == 0 {
                    continue;
                }
                let beta = &mono.alphas[j].0;
                if beta.iter().zip(alpha).any(|(x, y)| x > y) {
                    continue;
                }
                let rest: Vec<u32> = alpha.iter().zip(beta).map(|(x, y)| x - y).collect();
                let r = mono.position(&rest).expect("sub-index");
                acc -= Rational::from(b * &q.c[r]);
            }
            q.c[k] = acc / &b0;
        }
        Ok(q)
    }

    pub fn powi(&self, k: i64) -> Result<Series, HoloError> {
        let mut result = Series::constant(&self.mono, Rational::from(1));
        let mut base = self.clone();
        let mut e = k.unsigned_abs();
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        if k < 0 {
            Series::constant(&self.mono, Rational::from(1)).div(&result)
        } else {
            Ok(result)
        }
    }

    pub fn to_map(&self) -> BTreeMap<MultiIndex, Rational> {
        self.mono
            .alphas
            .iter()
            .zip(&self.c)
            .filter(|(_, c)| **c != 0)
            .map(|(a, c)| (a.clone(), c.clone()))
            .collect()
    }
}

/// Taylor coefficients at the origin of a rational function of `x_1..x_m`
/// with rational parameters, exact up to total degree `deg`.
pub fn taylor_series(
    e: &Expr,
    mono: &Arc<Monomials>,
    params: &BTreeMap<String, Rational>,
) -> Result<Series, HoloError> {
    let mut memo: HashMap<*const Node, Series> = HashMap::new();
    go(e, mono, params, &mut memo)
}

fn go(
    e: &Expr,
    mono: &Arc<Monomials>,
    params: &BTreeMap<String, Rational>,
    memo: &mut HashMap<*const Node, Series>,
) -> Result<Series, HoloError> {
    let key = e.node() as *const Node;
    if let Some(s) = memo.get(&key) {
        return Ok(s.clone());
    }
    let s = match e.node() {
        Node::Const(q) => Series::constant(mono, q.clone()),
        Node::Var(i) => {
            if *i > mono.m {
                return Err(HoloError::Unsupported(format!("x{i} beyond {} variables", mono.m)));
            }
            Series::var(mono, *i)
        }
        Node::Param(name) => match params.get(name) {
            Some(q) => Series::constant(mono, q.clone()),
            None => return Err(HoloError::Unsupported(format!("unbound parameter {name}"))),
        },
        Node::Neg(a) => go(a, mono, params, memo)?.neg(),
        Node::Add(a, b) => go(a, mono, params, memo)?.add(&go(b, mono, params, memo)?),
        Node::Sub(a, b) => go(a, mono, params, memo)?.sub(&go(b, mono, params, memo)?),
        Node::Mul(a, b) => go(a, mono, params, memo)?.mul(&go(b, mono, params, memo)?),
        Node::Div(a, b) => go(a, mono, params, memo)?.div(&go(b, mono, params, memo)?)?,
        Node::Pow(a, b) => {
            let k = b
                .as_const()
                .filter(|q| *q.denom() == 1)
                .and_then(|q| q.numer().to_i64())
                .ok_or_else(|| HoloError::Unsupported(format!("non-integer exponent in {e}")))?;
            go(a, mono, params, memo)?.powi(k)?
        }
        _ => {
            return Err(HoloError::Unsupported(format!(
                "exact Taylor coefficients need a rational function, got {e}"
            )))
        }
    };
    memo.insert(key, s.clone());
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;
    use crate::funcdsl::parse;

    fn params(t: Rational) -> BTreeMap<String, Rational> {
        [("t".to_string(), t)].into_iter().collect()
    }

    #[test]
    fn geometric() {
        let mono = Monomials::new(1, 10);
        let s = taylor_series(&parse("(1-2*t)/(1-t*x1)").unwrap(), &mono, &params(Rational::from((1, 4)))).unwrap();
        for k in 0..=10u32 {
            let want = Rational::from((1, 2)) * Rational::from((1, 4)).pow(k);
            assert_eq!(s.c[k as usize], want);
        }
    }

    #[test]
    fn two_variables() {
        let mono = Monomials::new(2, 6);
        let s = taylor_series(&parse("1/((1-x1)*(1-x2))").unwrap(), &mono, &BTreeMap::new()).unwrap();
        assert!(s.c.iter().all(|c| *c == 1));
        let p = taylor_series(&parse("(x1 + 2*x2)^3").unwrap(), &mono, &BTreeMap::new()).unwrap();
        assert_eq!(p.c[mono.position(&[1, 2]).unwrap()], 12);
        assert_eq!(p.c[mono.position(&[0, 3]).unwrap()], 8);
        let inv = taylor_series(&parse("(1 + x1*x2)^(-2)").unwrap(), &mono, &BTreeMap::new()).unwrap();
        assert_eq!(inv.c[mono.position(&[2, 2]).unwrap()], 3);
        assert_eq!(mono.up_to(1), 3);
    }

    #[test]
    fn rejects_transcendental() {
        let mono = Monomials::new(1, 4);
        assert!(taylor_series(&parse("exp(x1)").unwrap(), &mono, &BTreeMap::new()).is_err());
        assert!(taylor_series(&parse("1/x1").unwrap(), &mono, &BTreeMap::new()).is_err());
    }
}
