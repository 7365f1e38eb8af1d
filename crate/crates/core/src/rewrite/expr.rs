//! Attribute expressions, guards and their evaluation.

use std::cmp::Ordering;
use std::ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::rule::{ElementId, LevelId};
use crate::graph::{NodeId, Sort, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

/// An attribute expression. `Sum` and `Count` fold over the sub-matches of a
/// child quantification level of the level the expression is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Lit(Value),
    Attr { elem: ElementId, attr: String },
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Sum { level: LevelId, body: Box<Expr> },
    Count { level: LevelId },
}

impl Expr {
    pub fn lit(v: impl Into<Value>) -> Self {
        Expr::Lit(v.into())
    }

    pub fn attr(elem: ElementId, attr: &str) -> Self {
        Expr::Attr { elem, attr: attr.to_owned() }
    }

    pub fn sum(level: LevelId, body: Expr) -> Self {
        Expr::Sum { level, body: Box::new(body) }
    }

    pub fn count(level: LevelId) -> Self {
        Expr::Count { level }
    }

    pub fn abs(self) -> Self {
        Expr::Abs(Box::new(self))
    }

    fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    /// Calls `f` on every sub-expression, outermost first.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Lit(_) | Expr::Attr { .. } | Expr::Count { .. } => {}
            Expr::Neg(e) | Expr::Abs(e) => e.visit(f),
            Expr::Bin { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::Sum { body, .. } => body.visit(f),
        }
    }

    pub fn has_aggregate(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, Expr::Sum { .. } | Expr::Count { .. }));
        found
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Add, self, rhs)
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Sub, self, rhs)
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Mul, self, rhs)
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::bin(BinOp::Div, self, rhs)
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

/// A guard condition on a match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cond {
    Cmp {
        op: CmpOp,
        lhs: Expr,
        rhs: Expr,
    },
    /// The two node elements are mapped to different host nodes.
    NodeNeq(ElementId, ElementId),
}

impl Cond {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Self {
        Cond::Cmp { op, lhs, rhs }
    }

    /// `elem.attr = value`
    pub fn attr_eq(elem: ElementId, attr: &str, value: impl Into<Value>) -> Self {
        Cond::cmp(CmpOp::Eq, Expr::attr(elem, attr), Expr::lit(value))
    }

    pub fn elements(&self) -> Vec<ElementId> {
        match self {
            Cond::NodeNeq(a, b) => vec![*a, *b],
            Cond::Cmp { lhs, rhs, .. } => {
                let mut out = Vec::new();
                for e in [lhs, rhs] {
                    e.visit(&mut |x| {
                        if let Expr::Attr { elem, .. } = x {
                            out.push(*elem);
                        }
                    });
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("cannot apply {op} to {lhs} and {rhs}")]
    SortMismatch { op: &'static str, lhs: Sort, rhs: Sort },
    #[error("cannot apply {op} to {0}", op = .1)]
    UnarySortMismatch(Sort, &'static str),
    #[error("integer overflow")]
    Overflow,
    #[error("element {0:?} is not bound at this level")]
    Unbound(ElementId),
    #[error("host node {node} has no attribute `{attr}`")]
    UnknownAttr { node: NodeId, attr: String },
    #[error("aggregate over {0:?} is not available in this context")]
    NoSuchLevel(LevelId),
}

/// What an expression needs from its surroundings: attribute lookup through
/// the current match and the sub-matches of child levels.
pub trait EvalContext {
    fn attr(&self, elem: ElementId, attr: &str) -> Result<Value, EvalError>;
    /// Calls `f` once per sub-match of `level`, in match order.
    fn for_each_sub(
        &self,
        level: LevelId,
        f: &mut dyn FnMut(&dyn EvalContext) -> Result<(), EvalError>,
    ) -> Result<usize, EvalError>;
}

pub fn eval(expr: &Expr, ctx: &dyn EvalContext) -> Result<Value, EvalError> {
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Attr { elem, attr } => ctx.attr(*elem, attr),
        Expr::Neg(e) => match eval(e, ctx)? {
            Value::Int(i) => i.checked_neg().map(Value::Int).ok_or(EvalError::Overflow),
            Value::Real(r) => Ok(Value::Real(-r)),
            v => Err(EvalError::UnarySortMismatch(v.sort(), "neg")),
        },
        Expr::Abs(e) => match eval(e, ctx)? {
            Value::Int(i) => i.checked_abs().map(Value::Int).ok_or(EvalError::Overflow),
            Value::Real(r) => Ok(Value::Real(r.abs())),
            v => Err(EvalError::UnarySortMismatch(v.sort(), "abs")),
        },
        Expr::Bin { op, lhs, rhs } => binary(*op, eval(lhs, ctx)?, eval(rhs, ctx)?),
        Expr::Count { level } => {
            let n = ctx.for_each_sub(*level, &mut |_| Ok(()))?;
            Ok(Value::Int(n as i64))
        }
        Expr::Sum { level, body } => {
            let mut acc = Value::Int(0);
            ctx.for_each_sub(*level, &mut |sub| {
                let v = eval(body, sub)?;
                acc = binary(BinOp::Add, acc.clone(), v)?;
                Ok(())
            })?;
            Ok(acc)
        }
    }
}

/// Int op Int stays integral (except division); any real operand makes the
/// result real. Division always yields a real.
pub fn binary(op: BinOp, lhs: Value, rhs: Value) -> Result<Value, EvalError> {
    let name = match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Div => "/",
    };
    match (&lhs, &rhs) {
        (Value::Int(a), Value::Int(b)) if op != BinOp::Div => {
            let r = match op {
                BinOp::Add => a.checked_add(*b),
                BinOp::Sub => a.checked_sub(*b),
                BinOp::Mul => a.checked_mul(*b),
                BinOp::Div => unreachable!(),
            };
            r.map(Value::Int).ok_or(EvalError::Overflow)
        }
        _ => {
            let (Some(a), Some(b)) = (lhs.as_real(), rhs.as_real()) else {
                return Err(EvalError::SortMismatch { op: name, lhs: lhs.sort(), rhs: rhs.sort() });
            };
            Ok(Value::Real(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    a / b
                }
            }))
        }
    }
}

pub fn compare(op: CmpOp, lhs: &Value, rhs: &Value) -> Result<bool, EvalError> {
    let ord = match (lhs, rhs) {
        (Value::Bool(a), Value::Bool(b)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => a.cmp(b),
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        _ => match (lhs.as_real(), rhs.as_real()) {
            (Some(a), Some(b)) => match a.partial_cmp(&b) {
                Some(o) => o,
                // NaN: only `!=` holds
                None => return Ok(op == CmpOp::Ne),
            },
            _ => {
                return Err(EvalError::SortMismatch { op: "comparison", lhs: lhs.sort(), rhs: rhs.sort() });
            }
        },
    };
    Ok(match op {
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Ge => ord != Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
    })
}
