//! Complexity triples `(r, α, β)` of Pfaffian functions, their propagation
//! under algebraic operations, and numeric validation of chains.

use std::fmt;

use rug::{Integer, Rational};
use thiserror::Error;

use crate::funcdsl::{diff, eval_with, ChainSpec, DiffError, Env, EvalError, Expr, Params, RigorousValue};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PfaffError {
    #[error("inputs live on different chains: {0} vs {1}")]
    ChainMismatch(Complexity, Complexity),
    #[error("operation needs at least one input")]
    NoInputs,
    #[error("{which} evaluates to a nonpositive value at {cx}")]
    NonPositivePlug { which: &'static str, cx: Complexity },
    #[error("plug expression {which} is undecided at {cx}")]
    UndecidedPlug { which: &'static str, cx: Complexity },
    #[error("expected {want} solutions, got {got}")]
    SolutionCount { want: usize, got: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Complexity {
    pub r: u32,
    pub alpha: u32,
    pub beta: u32,
}

impl Complexity {
    pub fn new(r: u32, alpha: u32, beta: u32) -> Self {
        assert!(alpha >= 1 && beta >= 1, "α, β ≥ 1");
        Complexity { r, alpha, beta }
    }

    pub fn of_chain(chain: &ChainSpec, beta: u32) -> Self {
        Complexity::new(chain.order as u32, chain.degree.max(1), beta)
    }

    fn with_beta(self, beta: u32) -> Self {
        Complexity::new(self.r, self.alpha, beta)
    }

    /// The bindings `r`, `alpha`, `beta` for plug expressions.
    pub fn params(&self) -> Params {
        [("r", self.r), ("alpha", self.alpha), ("beta", self.beta)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), Rational::from(v)))
            .collect()
    }
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.r, self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CxOp {
    Sum,
    Product,
    PartialDerivative,
    PolyCompose(u32),
    SingularSet(u32),
}

fn common_chain(inputs: &[Complexity]) -> Result<Complexity, PfaffError> {
    let first = *inputs.first().ok_or(PfaffError::NoInputs)?;
    for cx in &inputs[1..] {
        if cx.r != first.r || cx.alpha != first.alpha {
            return Err(PfaffError::ChainMismatch(first, *cx));
        }
    }
    Ok(first)
}

/// Complexity of the result of `op`. Unary operations use the first input.
pub fn cx_apply(op: CxOp, inputs: &[Complexity]) -> Result<Complexity, PfaffError> {
    match op {
        CxOp::Sum => {
            let base = common_chain(inputs)?;
            Ok(base.with_beta(inputs.iter().map(|c| c.beta).max().expect("nonempty")))
        }
        CxOp::Product => {
            let base = common_chain(inputs)?;
            Ok(base.with_beta(inputs.iter().map(|c| c.beta).sum()))
        }
        CxOp::PartialDerivative => {
            let c = *inputs.first().ok_or(PfaffError::NoInputs)?;
            Ok(c.with_beta(c.alpha + c.beta - 1))
        }
        CxOp::PolyCompose(d) => {
            let c = *inputs.first().ok_or(PfaffError::NoInputs)?;
            Ok(c.with_beta(d.max(1) * c.beta))
        }
        CxOp::SingularSet(d) => {
            let c = *inputs.first().ok_or(PfaffError::NoInputs)?;
            Ok(c.with_beta(c.alpha + d.max(1) * c.beta - 1))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExtInt {
    Finite(Integer),
    Infinite,
}

impl fmt::Display for ExtInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtInt::Finite(n) => write!(f, "{n}"),
            ExtInt::Infinite => write!(f, "inf"),
        }
    }
}

/// Results beyond this many bits are reported as infinite.
const MAX_BOUND_BITS: f64 = 1e6;

fn positive_plug(e: &Expr, cx: Complexity, params: &Params, which: &'static str) -> Result<RigorousValue, PfaffError> {
    let v = eval_with(e, &Env::point(&[]).with_params(params), 128)?;
    let (lo, hi) = v.bounds();
    if hi <= 0 {
        return Err(PfaffError::NonPositivePlug { which, cx });
    }
    if lo <= 0 {
        return Err(PfaffError::UndecidedPlug { which, cx });
    }
    Ok(v)
}

/// `⌈C6(cx)·d^C7(cx)⌉` for caller-supplied plug expressions in the
/// parameters `r`, `alpha`, `beta`.
pub fn component_bound(cx: Complexity, d: u32, c6: &Expr, c7: &Expr) -> Result<ExtInt, PfaffError> {
    let params = cx.params();
    let v6 = positive_plug(c6, cx, &params, "C6")?;
    let v7 = positive_plug(c7, cx, &params, "C7")?;
    let d = d.max(1);
    let log2 = v6.to_f64().log2() + v7.to_f64() * (d as f64).log2();
    if !log2.is_finite() || log2 > MAX_BOUND_BITS {
        return Ok(ExtInt::Infinite);
    }
    let total = Expr::mul(c6.clone(), Expr::pow(Expr::int(d as i64), c7.clone()));
    let prec = 128 + log2.max(0.0) as u32;
    let v = eval_with(&total, &Env::point(&[]).with_params(&params), prec)?;
    let (_, hi) = v.bounds();
    Ok(ExtInt::Finite(hi.ceil().into_numer_denom().0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub point: usize,
    /// Variable index `i` and chain index `j`, 1-based.
    pub i: usize,
    pub j: usize,
    pub value: RigorousValue,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainCheck {
    pub passed: bool,
    /// Largest `|residual|` upper bound over all identities and samples.
    pub max_residual: Rational,
    /// The first residual whose enclosure excludes zero.
    pub failure: Option<Residual>,
    pub checks: usize,
}

/// Checks `∂f_j/∂x_i = g_ij(x, f_1, …, f_j)` at each sample by rigorous
/// evaluation, for candidate solutions `f_j` written as expressions in `x`.
pub fn validate_chain(chain: &ChainSpec, solutions: &[Expr], samples: &[Vec<Rational>], precision: u32) -> Result<ChainCheck, PfaffError> {
    if solutions.len() != chain.order {
        return Err(PfaffError::SolutionCount {
            want: chain.order,
            got: solutions.len(),
        });
    }
    let mut derivs = Vec::with_capacity(chain.n);
    for i in 0..chain.n {
        let row: Result<Vec<Expr>, DiffError> = solutions.iter().map(|f| diff(f, i + 1)).collect();
        derivs.push(row?);
    }
    let mut max_residual = Rational::new();
    let mut failure = None;
    let mut checks = 0;
    for (p, x) in samples.iter().enumerate() {
        let env = Env::point(x).with_chain(solutions);
        for i in 0..chain.n {
            for j in 0..chain.order {
                let residual = Expr::sub(derivs[i][j].clone(), chain.g[i][j].clone());
                let value = eval_with(&residual, &env, precision)?;
                checks += 1;
                let upper = value.abs_upper();
                if upper > max_residual {
                    max_residual = upper;
                }
                if failure.is_none() && value.sign().is_some_and(|s| s != std::cmp::Ordering::Equal) {
                    failure = Some(Residual {
                        point: p,
                        i: i + 1,
                        j: j + 1,
                        value,
                    });
                }
            }
        }
    }
    Ok(ChainCheck {
        passed: failure.is_none(),
        max_residual,
        failure,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcdsl::{parse, SimpleDomain};
    use proptest::prelude::*;

    fn cx(r: u32, a: u32, b: u32) -> Complexity {
        Complexity::new(r, a, b)
    }

    #[test]
    fn apply_examples() {
        assert_eq!(cx_apply(CxOp::PolyCompose(4), &[cx(1, 2, 3)]).unwrap(), cx(1, 2, 12));
        assert_eq!(cx_apply(CxOp::SingularSet(4), &[cx(1, 2, 3)]).unwrap(), cx(1, 2, 13));
        assert_eq!(cx_apply(CxOp::Product, &[cx(1, 2, 3), cx(1, 2, 5)]).unwrap(), cx(1, 2, 8));
        assert_eq!(cx_apply(CxOp::Sum, &[cx(1, 2, 3), cx(1, 2, 5)]).unwrap(), cx(1, 2, 5));
        assert_eq!(cx_apply(CxOp::PartialDerivative, &[cx(2, 3, 4)]).unwrap(), cx(2, 3, 6));
        assert!(matches!(
            cx_apply(CxOp::Sum, &[cx(1, 2, 3), cx(2, 2, 3)]),
            Err(PfaffError::ChainMismatch(..))
        ));
        assert!(matches!(
            cx_apply(CxOp::Product, &[cx(1, 2, 3), cx(1, 3, 3)]),
            Err(PfaffError::ChainMismatch(..))
        ));
        assert_eq!(cx_apply(CxOp::Sum, &[]), Err(PfaffError::NoInputs));
    }

    #[test]
    fn component_examples() {
        let one = parse("1").unwrap();
        let two = parse("2").unwrap();
        let c = cx(1, 2, 3);
        assert_eq!(component_bound(c, 5, &one, &two).unwrap(), ExtInt::Finite(Integer::from(25)));
        let c6 = parse("(r + 1)*alpha*beta").unwrap();
        let c7 = parse("r + alpha + beta").unwrap();
        assert_eq!(component_bound(c, 1, &c6, &c7).unwrap(), ExtInt::Finite(Integer::from(12)));
        assert_eq!(component_bound(c, 2, &c6, &c7).unwrap(), ExtInt::Finite(Integer::from(12 * 64)));
        let half = parse("1/2").unwrap();
        assert_eq!(component_bound(c, 3, &one, &half).unwrap(), ExtInt::Finite(Integer::from(2)));
        assert!(matches!(
            component_bound(c, 5, &parse("alpha - 2").unwrap(), &one),
            Err(PfaffError::NonPositivePlug { which: "C6", .. })
        ));
        assert!(matches!(
            component_bound(c, 5, &one, &parse("-beta").unwrap()),
            Err(PfaffError::NonPositivePlug { which: "C7", .. })
        ));
        assert_eq!(component_bound(c, 10, &one, &parse("10^7").unwrap()).unwrap(), ExtInt::Infinite);
    }

    #[test]
    fn chain_fixtures() {
        let samples: Vec<Vec<Rational>> = (1..10).map(|k| vec![Rational::from((k, 10))]).collect();
        let exp = ChainSpec::single(1, SimpleDomain::OpenUnitBox, parse("f1").unwrap()).unwrap();
        let out = validate_chain(&exp, &[parse("exp(x1)").unwrap()], &samples, 128).unwrap();
        assert!(out.passed);
        assert_eq!(out.checks, 9);
        let inv = ChainSpec::single(2, SimpleDomain::OpenUnitBox, parse("f1^2").unwrap()).unwrap();
        let out = validate_chain(&inv, &[parse("1/(1-x1)").unwrap()], &samples, 128).unwrap();
        assert!(out.passed);
        assert_eq!(out.max_residual, 0);
        let wrong = ChainSpec::single(1, SimpleDomain::OpenUnitBox, parse("2*f1").unwrap()).unwrap();
        let out = validate_chain(&wrong, &[parse("exp(x1)").unwrap()], &samples, 128).unwrap();
        assert!(!out.passed);
        let f = out.failure.unwrap();
        assert_eq!((f.point, f.i, f.j), (0, 1, 1));
        assert!(out.max_residual > 1);
        let two = ChainSpec::new(
            2,
            2,
            SimpleDomain::OpenUnitBox,
            vec![
                vec![parse("f1").unwrap(), parse("f1*f2").unwrap()],
                vec![parse("2*f1").unwrap(), parse("2*f1*f2").unwrap()],
            ],
        )
        .unwrap();
        let sols = [parse("exp(x1 + 2*x2)").unwrap(), parse("exp(exp(x1 + 2*x2))").unwrap()];
        let grid: Vec<Vec<Rational>> = (1..4)
            .flat_map(|a| (1..4).map(move |b| vec![Rational::from((a, 4)), Rational::from((b, 4))]))
            .collect();
        assert!(validate_chain(&two, &sols, &grid, 128).unwrap().passed);
        assert!(validate_chain(&two, &sols[..1], &grid, 128).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_consistent(r in 0u32..5, a in 1u32..6, b in 1u32..10, d in 1u32..8) {
            let c = cx(r, a, b);
            for op in [CxOp::PartialDerivative, CxOp::PolyCompose(d), CxOp::SingularSet(d)] {
                let out = cx_apply(op, &[c]).unwrap();
                prop_assert!(out.r >= c.r && out.alpha >= c.alpha && out.beta >= c.beta);
            }
            prop_assert_eq!(cx_apply(CxOp::PolyCompose(1), &[c]).unwrap(), c);
            let composed = cx_apply(CxOp::PolyCompose(d), &[c]).unwrap();
            let chained = cx_apply(CxOp::PartialDerivative, &[composed]).unwrap();
            prop_assert_eq!(cx_apply(CxOp::SingularSet(d), &[c]).unwrap(), chained);
        }

        #[test]
        fn bound_monotone_in_d(r in 0u32..3, a in 1u32..4, b in 1u32..4, d in 1u32..50) {
            let c = cx(r, a, b);
            let c6 = parse("alpha + beta").unwrap();
            let c7 = parse("(r + 1)/2").unwrap();
            prop_assert!(component_bound(c, d + 1, &c6, &c7).unwrap() >= component_bound(c, d, &c6, &c7).unwrap());
        }
    }
}
