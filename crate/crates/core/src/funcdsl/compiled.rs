//! Straight-line double-precision interval programs. Subtrees free of variables
//! are enclosed once at compile time, so repeated evaluation only pays for the
//! parts that depend on the point.

use std::collections::HashMap;

use super::enclosure::{Enclosure, F64Interval};
use super::eval::{eval_with, Env, RigorousValue};
use super::{Expr, Func, Node, Params, Trig};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(F64Interval),
    /// A constant subtree that could not be enclosed; evaluation always fails.
    Fail,
    Var(usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    PowI(usize, i64),
    /// `exp(y · log b)` for a constant base `b > 0`.
    ExpScaled(usize, F64Interval),
    Pow(usize, usize),
    Exp(usize),
    Log(usize),
    /// Argument slot and the inner f64 bounds of the closed domain.
    Sin(usize, f64, f64),
    Cos(usize, f64, f64),
}

#[derive(Debug, Clone)]
pub struct F64Program {
    ops: Vec<Op>,
}

fn enclose(v: &RigorousValue) -> Option<F64Interval> {
    let i = match v {
        RigorousValue::Exact(q) => F64Interval::from_rational(q, 53)?,
        RigorousValue::Ball { .. } => {
            let (lo, hi) = v.bounds();
            F64Interval {
                lo: lo.to_f64().next_down(),
                hi: hi.to_f64().next_up(),
            }
        }
    };
    i.is_finite().then_some(i)
}

struct Compiler<'a> {
    params: &'a Params,
    ops: Vec<Op>,
    slots: HashMap<*const Node, usize>,
    constant: HashMap<*const Node, bool>,
}

impl Compiler<'_> {
    fn is_constant(&mut self, e: &Expr) -> bool {
        if let Some(&c) = self.constant.get(&e.ptr()) {
            return c;
        }
        let c = match e.node() {
            Node::Var(_) | Node::Chain(_) => false,
            _ => e.children().iter().all(|c| self.is_constant(c)),
        };
        self.constant.insert(e.ptr(), c);
        c
    }

    fn push(&mut self, op: Op) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    fn constant_value(&self, e: &Expr) -> Option<RigorousValue> {
        eval_with(e, &Env::point(&[]).with_params(self.params), 53).ok()
    }

    fn slot(&mut self, e: &Expr) -> usize {
        if let Some(&s) = self.slots.get(&e.ptr()) {
            return s;
        }
        let op = if self.is_constant(e) {
            match self.constant_value(e).as_ref().and_then(enclose) {
                Some(i) => Op::Const(i),
                None => Op::Fail,
            }
        } else {
            self.op(e)
        };
        let s = self.push(op);
        self.slots.insert(e.ptr(), s);
        s
    }

    fn op(&mut self, e: &Expr) -> Op {
        match e.node() {
            Node::Var(i) => Op::Var(*i),
            Node::Neg(a) => Op::Neg(self.slot(a)),
            Node::Add(a, b) => Op::Add(self.slot(a), self.slot(b)),
            Node::Sub(a, b) => Op::Sub(self.slot(a), self.slot(b)),
            Node::Mul(a, b) => Op::Mul(self.slot(a), self.slot(b)),
            Node::Div(a, b) => Op::Div(self.slot(a), self.slot(b)),
            Node::Pow(a, b) => {
                if self.is_constant(b) {
                    if let Some(RigorousValue::Exact(q)) = self.constant_value(b) {
                        if q.denom() == &1u32 {
                            if let Some(k) = q.numer().to_i64() {
                                return Op::PowI(self.slot(a), k);
                            }
                        }
                    }
                }
                if self.is_constant(a) {
                    let base = self.constant_value(a).as_ref().and_then(enclose);
                    if let Some(l) = base.and_then(|i| i.ln().ok()).filter(|l| l.is_finite()) {
                        return Op::ExpScaled(self.slot(b), l);
                    }
                }
                Op::Pow(self.slot(a), self.slot(b))
            }
            Node::Apply(Func::Exp, a) => Op::Exp(self.slot(a)),
            Node::Apply(Func::Log, a) => Op::Log(self.slot(a)),
            Node::Trig(t, a, lo, hi) => {
                let x = self.slot(a);
                let (l, h) = (lo.to_f64().next_up(), hi.to_f64().next_down());
                match t {
                    Trig::Sin => Op::Sin(x, l, h),
                    Trig::Cos => Op::Cos(x, l, h),
                }
            }
            Node::Chain(_) | Node::Const(_) | Node::Named(_) | Node::Param(_) => Op::Fail,
        }
    }
}

impl F64Program {
    /// Compiles a chain-free expression; parameters are taken from `params`.
    pub fn compile(e: &Expr, params: &Params) -> Self {
        let mut c = Compiler {
            params,
            ops: Vec::new(),
            slots: HashMap::new(),
            constant: HashMap::new(),
        };
        c.slot(e);
        F64Program { ops: c.ops }
    }

    /// An enclosure of the value at the point enclosed by `x`, or `None` when the
    /// double-precision tier cannot decide the domain conditions.
    pub fn eval(&self, x: &[F64Interval], scratch: &mut Vec<F64Interval>) -> Option<F64Interval> {
        scratch.clear();
        for op in &self.ops {
            let v = match *op {
                Op::Const(i) => i,
                Op::Fail => return None,
                Op::Var(i) => *x.get(i - 1)?,
                Op::Neg(a) => scratch[a].neg(),
                Op::Add(a, b) => scratch[a].add(&scratch[b]),
                Op::Sub(a, b) => scratch[a].sub(&scratch[b]),
                Op::Mul(a, b) => scratch[a].mul(&scratch[b]),
                Op::Div(a, b) => scratch[a].div(&scratch[b])?,
                Op::PowI(a, k) => scratch[a].powi(k)?,
                Op::ExpScaled(y, l) => scratch[y].mul(&l).exp()?,
                Op::Pow(a, b) => {
                    let base = scratch[a];
                    if !base.positive() {
                        return None;
                    }
                    base.ln().ok()?.mul(&scratch[b]).exp()?
                }
                Op::Exp(a) => scratch[a].exp()?,
                Op::Log(a) => scratch[a].ln().ok()?,
                Op::Sin(a, l, h) | Op::Cos(a, l, h) => {
                    let i = scratch[a];
                    if !(i.lo >= l && i.hi <= h) {
                        return None;
                    }
                    if matches!(op, Op::Sin(..)) {
                        i.sin()
                    } else {
                        i.cos()
                    }
                }
            };
            if !v.is_finite() {
                return None;
            }
            scratch.push(v);
        }
        scratch.last().copied()
    }
}

/// Enclosure of `a/b` for `b > 0`.
pub fn pair_interval((a, b): (i64, i64)) -> F64Interval {
    const EXACT: i64 = 1 << 53;
    if b == 1 && a.abs() <= EXACT {
        F64Interval::point(a as f64)
    } else if a.abs() <= EXACT && b <= EXACT {
        F64Interval::around(a as f64 / b as f64)
    } else {
        let r = F64Interval::around(a as f64).div(&F64Interval::around(b as f64));
        r.expect("positive denominator")
    }
}
