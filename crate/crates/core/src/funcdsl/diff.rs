use std::collections::HashMap;

use thiserror::Error;

use super::{ChainSpec, Expr, Func, Node, Trig};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("f{0} has no chain specification")]
    MissingChain(usize),
    #[error("chain specification has no f{0}")]
    ChainOutOfRange(usize),
}

struct Differ<'a> {
    var: usize,
    chain: Option<&'a ChainSpec>,
    memo: HashMap<*const Node, Expr>,
}

fn is_zero(e: &Expr) -> bool {
    e.as_const().is_some_and(|q| *q == 0)
}

impl Differ<'_> {
    fn d(&mut self, e: &Expr) -> Result<Expr, DiffError> {
        if let Some(r) = self.memo.get(&e.ptr()) {
            return Ok(r.clone());
        }
        let r = self.rule(e)?;
        self.memo.insert(e.ptr(), r.clone());
        Ok(r)
    }

    fn rule(&mut self, e: &Expr) -> Result<Expr, DiffError> {
        Ok(match e.node() {
            Node::Const(_) | Node::Named(_) | Node::Param(_) => Expr::int(0),
            Node::Var(i) => Expr::int(i64::from(*i == self.var)),
            Node::Chain(j) => {
                let spec = self.chain.ok_or(DiffError::MissingChain(*j))?;
                if *j > spec.order {
                    return Err(DiffError::ChainOutOfRange(*j));
                }
                match spec.g.get(self.var - 1) {
                    Some(row) => row[j - 1].clone(),
                    None => Expr::int(0),
                }
            }
            Node::Neg(a) => Expr::neg(self.d(a)?),
            Node::Add(a, b) => Expr::add(self.d(a)?, self.d(b)?),
            Node::Sub(a, b) => Expr::sub(self.d(a)?, self.d(b)?),
            Node::Mul(a, b) => {
                let (da, db) = (self.d(a)?, self.d(b)?);
                Expr::add(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db))
            }
            Node::Div(a, b) => {
                let (da, db) = (self.d(a)?, self.d(b)?);
                Expr::sub(
                    Expr::div(da, b.clone()),
                    Expr::div(Expr::mul(a.clone(), db), Expr::mul(b.clone(), b.clone())),
                )
            }
            Node::Pow(a, b) => {
                let (da, db) = (self.d(a)?, self.d(b)?);
                if is_zero(&db) {
                    let lowered = Expr::pow(a.clone(), Expr::sub(b.clone(), Expr::int(1)));
                    Expr::mul(Expr::mul(b.clone(), lowered), da)
                } else if is_zero(&da) {
                    Expr::mul(Expr::mul(Expr::log(a.clone()), e.clone()), db)
                } else {
                    let inner = Expr::add(
                        Expr::mul(db, Expr::log(a.clone())),
                        Expr::div(Expr::mul(b.clone(), da), a.clone()),
                    );
                    Expr::mul(e.clone(), inner)
                }
            }
            Node::Apply(Func::Exp, a) => Expr::mul(e.clone(), self.d(a)?),
            Node::Apply(Func::Log, a) => Expr::div(self.d(a)?, a.clone()),
            Node::Trig(t, a, lo, hi) => {
                let da = self.d(a)?;
                match t {
                    Trig::Sin => Expr::mul(Expr::cos(a.clone(), lo.clone(), hi.clone()), da),
                    Trig::Cos => {
                        Expr::neg(Expr::mul(Expr::sin(a.clone(), lo.clone(), hi.clone()), da))
                    }
                }
            }
        })
    }
}

/// `∂e/∂x_var` (1-based) for chain-free expressions.
pub fn diff(e: &Expr, var: usize) -> Result<Expr, DiffError> {
    diff_in(e, var, None)
}

/// `∂e/∂x_var`, resolving chain references through `∂f_j/∂x_i = g_ij`.
pub fn diff_in(e: &Expr, var: usize, chain: Option<&ChainSpec>) -> Result<Expr, DiffError> {
    assert!(var >= 1, "variables are 1-based");
    Differ {
        var,
        chain,
        memo: HashMap::new(),
    }
    .d(e)
}

/// `∂^α e`, differentiating in coordinate order.
pub fn diff_multi(e: &Expr, alpha: &[u32], chain: Option<&ChainSpec>) -> Result<Expr, DiffError> {
    let mut cur = e.clone();
    for (i, &k) in alpha.iter().enumerate() {
        for _ in 0..k {
            cur = diff_in(&cur, i + 1, chain)?;
        }
    }
    Ok(cur)
}

/// Replaces `x_i` by `map(i)` wherever it returns `Some`.
pub fn substitute(e: &Expr, map: &dyn Fn(usize) -> Option<Expr>) -> Expr {
    fn go(e: &Expr, map: &dyn Fn(usize) -> Option<Expr>, memo: &mut HashMap<*const Node, Expr>) -> Expr {
        if let Some(r) = memo.get(&e.ptr()) {
            return r.clone();
        }
        let r = match e.node() {
            Node::Var(i) => map(*i).unwrap_or_else(|| e.clone()),
            Node::Const(_) | Node::Named(_) | Node::Param(_) | Node::Chain(_) => e.clone(),
            Node::Neg(a) => Expr::neg(go(a, map, memo)),
            Node::Add(a, b) => Expr::add(go(a, map, memo), go(b, map, memo)),
            Node::Sub(a, b) => Expr::sub(go(a, map, memo), go(b, map, memo)),
            Node::Mul(a, b) => Expr::mul(go(a, map, memo), go(b, map, memo)),
            Node::Div(a, b) => Expr::div(go(a, map, memo), go(b, map, memo)),
            Node::Pow(a, b) => Expr::pow(go(a, map, memo), go(b, map, memo)),
            Node::Apply(Func::Exp, a) => Expr::exp(go(a, map, memo)),
            Node::Apply(Func::Log, a) => Expr::log(go(a, map, memo)),
            Node::Trig(Trig::Sin, a, lo, hi) => Expr::sin(go(a, map, memo), lo.clone(), hi.clone()),
            Node::Trig(Trig::Cos, a, lo, hi) => Expr::cos(go(a, map, memo), lo.clone(), hi.clone()),
        };
        memo.insert(e.ptr(), r.clone());
        r
    }
    go(e, map, &mut HashMap::new())
}

#[cfg(test)]
mod tests {
    use super::super::{eval_rigorous, parse, SimpleDomain};
    use super::*;
    use crate::rationals::Rational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        let e = parse("x1*x2").unwrap();
        assert_eq!(diff(&e, 1).unwrap(), parse("x2").unwrap());
        let p = parse("pow(2,x1)").unwrap();
        let d = diff(&p, 1).unwrap();
        assert_eq!(d.to_string(), "log(2)*pow(2, x1)");
        assert_eq!(d, parse("log(2)*pow(2,x1)").unwrap());
    }

    #[test]
    fn chain_reference() {
        let spec = ChainSpec::single(1, SimpleDomain::Plane, Expr::chain(1)).unwrap();
        let f = Expr::chain(1);
        assert_eq!(diff_in(&f, 1, Some(&spec)).unwrap(), Expr::chain(1));
        let sq = parse("f1*f1").unwrap();
        assert_eq!(diff_in(&sq, 1, Some(&spec)).unwrap().to_string(), "f1*f1 + f1*f1");
        assert_eq!(diff(&f, 1), Err(DiffError::MissingChain(1)));
    }

    #[test]
    fn higher_derivatives_share_nodes() {
        let e = parse("1/(2 - sqrt(x1)*x2)").unwrap();
        let d = diff_multi(&e, &[4, 4], None).unwrap();
        assert!(d.dag_size() < 20_000, "{}", d.dag_size());
    }

    const SMOOTH: &[&str] = &[
        "x1*x1*x2 - 3*x2",
        "exp(x1*x2)",
        "log(2 + x1) * sin(x2)",
        "pow(x1 + 2, x2)",
        "sqrt(1 + x1*x1)/(3 - x2)",
        "cos[-5,5](x1 - pow(x2, 3))",
        "pow(2, x1) + pow(x2 + 3, 1/3)",
        "x1/(1 + exp(-x2))",
    ];

    #[test]
    fn matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for text in SMOOTH {
            let e = parse(text).unwrap();
            for var in 1..=2 {
                let d = diff(&e, var).unwrap();
                for _ in 0..20 {
                    let x: [f64; 2] = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
                    let at = |x: [f64; 2]| -> f64 {
                        let pt: Vec<Rational> =
                            x.iter().map(|v| Rational::from_f64(*v).unwrap()).collect();
                        eval_rigorous(&e, &pt, 128).unwrap().to_f64()
                    };
                    let mut xp = x;
                    let mut xm = x;
                    xp[var - 1] += h;
                    xm[var - 1] -= h;
                    let fd = (at(xp) - at(xm)) / (2.0 * h);
                    let pt: Vec<Rational> = x.iter().map(|v| Rational::from_f64(*v).unwrap()).collect();
                    let sym = eval_rigorous(&d, &pt, 128).unwrap().to_f64();
                    assert!((sym - fd).abs() <= 1e-6, "{text} d/dx{var} at {x:?}: {sym} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn substitution() {
        let e = parse("x1*x2 + x1").unwrap();
        let s = substitute(&e, &|i| (i == 1).then(|| parse("x2 + 1").unwrap()));
        let v = eval_rigorous(&s, &[Rational::new(), Rational::from(2)], 53).unwrap();
        assert_eq!(v, super::super::RigorousValue::Exact(Rational::from(9)));
        let _ = Rng::gen::<u8>(&mut ChaCha8Rng::seed_from_u64(0));
    }
}
