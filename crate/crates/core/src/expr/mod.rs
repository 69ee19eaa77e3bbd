//! Scalar expression trees over a coordinate vector.
//!
//! Expressions are immutable and share subtrees through `Arc`, so cloning is
//! cheap and the same subterm may appear in many places (the Lagrange
//! partials reuse constraint residuals heavily). Semantics are those of the
//! unfolded tree.
//!
//! For hot loops, compile a batch of expressions into a [`Tape`].

mod parse;
mod tape;

pub use parse::{parse, ParseError};
pub use tape::Tape;

use std::collections::HashMap;
use std::fmt;
use std::ops;
use std::sync::Arc;

use thiserror::Error;

/// Arguments of `sqrt` down to this negative value are treated as zero.
pub(crate) const SQRT_NEG_TOLERANCE: f64 = 1e-12;
/// Arguments of `acos` up to this far outside `[-1, 1]` are clamped.
pub(crate) const ACOS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in {op}: argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("variable x{index} is outside a coordinate vector of length {len}")]
    VariableOutOfRange { index: usize, len: usize },
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Powi(Expr, u32),
    Sqrt(Expr),
    Cos(Expr),
    Acos(Expr),
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn new(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        Expr::new(Node::Const(value))
    }

    pub fn var(index: usize) -> Self {
        Expr::new(Node::Var(index))
    }

    pub fn zero() -> Self {
        Expr::constant(0.0)
    }

    pub fn one() -> Self {
        Expr::constant(1.0)
    }

    pub fn powi(&self, exponent: u32) -> Self {
        Expr::new(Node::Powi(self.clone(), exponent))
    }

    pub fn sqrt(&self) -> Self {
        Expr::new(Node::Sqrt(self.clone()))
    }

    pub fn cos(&self) -> Self {
        Expr::new(Node::Cos(self.clone()))
    }

    pub fn acos(&self) -> Self {
        Expr::new(Node::Acos(self.clone()))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    /// Identity of the shared node, used for memoization.
    pub(crate) fn id(&self) -> usize {
        self.ptr() as usize
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best = None;
        self.visit_vars(&mut |i| best = Some(best.map_or(i, |b: usize| b.max(i))));
        best
    }

    /// True when variable `index` occurs anywhere in the tree.
    pub fn depends_on(&self, index: usize) -> bool {
        let mut found = false;
        self.visit_vars(&mut |i| found |= i == index);
        found
    }

    fn visit_vars(&self, visit: &mut impl FnMut(usize)) {
        match self.node() {
            Node::Const(_) => {}
            Node::Var(i) => visit(*i),
            Node::Neg(a) | Node::Powi(a, _) | Node::Sqrt(a) | Node::Cos(a) | Node::Acos(a) => {
                a.visit_vars(visit)
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.visit_vars(visit);
                b.visit_vars(visit);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        Ok(match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => *x.get(*i).ok_or(EvalError::VariableOutOfRange {
                index: *i,
                len: x.len(),
            })?,
            Node::Neg(a) => -a.eval(x)?,
            Node::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Node::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Node::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Node::Div(a, b) => {
                let num = a.eval(x)?;
                let den = b.eval(x)?;
                checked_div(num, den, matches!(b.node(), Node::Sqrt(_)))?
            }
            Node::Powi(a, n) => a.eval(x)?.powi(*n as i32),
            Node::Sqrt(a) => checked_sqrt(a.eval(x)?)?,
            Node::Cos(a) => a.eval(x)?.cos(),
            Node::Acos(a) => checked_acos(a.eval(x)?)?,
        })
    }

    /// Partial derivative with respect to variable `index`.
    ///
    /// Local identities are folded while building so that derivative trees
    /// stay proportional to the input.
    pub fn differentiate(&self, index: usize) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(index, &mut memo)
    }

    fn diff_memo(&self, index: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.id()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(i) => {
                if *i == index {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => neg(a.diff_memo(index, memo)),
            Node::Add(a, b) => add(a.diff_memo(index, memo), b.diff_memo(index, memo)),
            Node::Sub(a, b) => sub(a.diff_memo(index, memo), b.diff_memo(index, memo)),
            Node::Mul(a, b) => {
                let da = a.diff_memo(index, memo);
                let db = b.diff_memo(index, memo);
                add(mul(da, b.clone()), mul(a.clone(), db))
            }
            Node::Div(a, b) => {
                let da = a.diff_memo(index, memo);
                let db = b.diff_memo(index, memo);
                if db.is_const(0.0) {
                    div(da, b.clone())
                } else {
                    // (a'b - ab') / b^2
                    div(
                        sub(mul(da, b.clone()), mul(a.clone(), db)),
                        powi(b.clone(), 2),
                    )
                }
            }
            Node::Powi(a, n) => match *n {
                0 => Expr::zero(),
                n => {
                    let da = a.diff_memo(index, memo);
                    mul(
                        mul(Expr::constant(n as f64), powi(a.clone(), n - 1)),
                        da,
                    )
                }
            },
            Node::Sqrt(a) => {
                let da = a.diff_memo(index, memo);
                // The denominator stays a sqrt node so that sqrt'(0) reports
                // a domain error instead of an infinity.
                div(da, mul(Expr::constant(2.0), self.clone()))
            }
            Node::Cos(a) => {
                let da = a.diff_memo(index, memo);
                // sin u == cos(pi/2 - u)
                let sin = Expr::new(Node::Cos(sub(
                    Expr::constant(std::f64::consts::FRAC_PI_2),
                    a.clone(),
                )));
                neg(mul(sin, da))
            }
            Node::Acos(a) => {
                let da = a.diff_memo(index, memo);
                let root = Expr::new(Node::Sqrt(sub(Expr::one(), powi(a.clone(), 2))));
                neg(div(da, root))
            }
        };
        memo.insert(self.id(), d.clone());
        d
    }

    /// Constant folding and identity elimination.
    pub fn simplify(&self) -> Expr {
        let mut memo = HashMap::new();
        self.simplify_memo(&mut memo)
    }

    fn simplify_memo(&self, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(s) = memo.get(&self.id()) {
            return s.clone();
        }
        let s = match self.node() {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Neg(a) => neg(a.simplify_memo(memo)),
            Node::Add(a, b) => add(a.simplify_memo(memo), b.simplify_memo(memo)),
            Node::Sub(a, b) => sub(a.simplify_memo(memo), b.simplify_memo(memo)),
            Node::Mul(a, b) => mul(a.simplify_memo(memo), b.simplify_memo(memo)),
            Node::Div(a, b) => div(a.simplify_memo(memo), b.simplify_memo(memo)),
            Node::Powi(a, n) => powi(a.simplify_memo(memo), *n),
            Node::Sqrt(a) => fold_unary(Node::Sqrt(a.simplify_memo(memo))),
            Node::Cos(a) => fold_unary(Node::Cos(a.simplify_memo(memo))),
            Node::Acos(a) => fold_unary(Node::Acos(a.simplify_memo(memo))),
        };
        memo.insert(self.id(), s.clone());
        s
    }

    /// Replace every variable by the expression `map` returns for it.
    pub fn substitute(&self, map: &dyn Fn(usize) -> Expr) -> Expr {
        let mut memo = HashMap::new();
        self.subst_memo(map, &mut memo)
    }

    fn subst_memo(&self, map: &dyn Fn(usize) -> Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(s) = memo.get(&self.id()) {
            return s.clone();
        }
        let s = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => map(*i),
            Node::Neg(a) => Expr::new(Node::Neg(a.subst_memo(map, memo))),
            Node::Add(a, b) => Expr::new(Node::Add(a.subst_memo(map, memo), b.subst_memo(map, memo))),
            Node::Sub(a, b) => Expr::new(Node::Sub(a.subst_memo(map, memo), b.subst_memo(map, memo))),
            Node::Mul(a, b) => Expr::new(Node::Mul(a.subst_memo(map, memo), b.subst_memo(map, memo))),
            Node::Div(a, b) => Expr::new(Node::Div(a.subst_memo(map, memo), b.subst_memo(map, memo))),
            Node::Powi(a, n) => Expr::new(Node::Powi(a.subst_memo(map, memo), *n)),
            Node::Sqrt(a) => Expr::new(Node::Sqrt(a.subst_memo(map, memo))),
            Node::Cos(a) => Expr::new(Node::Cos(a.subst_memo(map, memo))),
            Node::Acos(a) => Expr::new(Node::Acos(a.subst_memo(map, memo))),
        };
        memo.insert(self.id(), s.clone());
        s
    }

    /// Number of nodes in the unfolded tree.
    pub fn tree_size(&self) -> usize {
        match self.node() {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Neg(a) | Node::Powi(a, _) | Node::Sqrt(a) | Node::Cos(a) | Node::Acos(a) => {
                1 + a.tree_size()
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.tree_size() + b.tree_size()
            }
        }
    }

    /// Structural equality of the unfolded trees.
    pub fn same_as(&self, other: &Expr) -> bool {
        if self.ptr() == other.ptr() {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Neg(a), Node::Neg(b))
            | (Node::Sqrt(a), Node::Sqrt(b))
            | (Node::Cos(a), Node::Cos(b))
            | (Node::Acos(a), Node::Acos(b)) => a.same_as(b),
            (Node::Powi(a, n), Node::Powi(b, k)) => n == k && a.same_as(b),
            (Node::Add(a, b), Node::Add(c, d))
            | (Node::Sub(a, b), Node::Sub(c, d))
            | (Node::Mul(a, b), Node::Mul(c, d))
            | (Node::Div(a, b), Node::Div(c, d)) => a.same_as(c) && b.same_as(d),
            _ => false,
        }
    }
}

pub(crate) fn checked_div(num: f64, den: f64, den_is_sqrt: bool) -> Result<f64, EvalError> {
    if den == 0.0 {
        if den_is_sqrt {
            // 1/sqrt(u) at u == 0: the derivative of a sqrt or acos at the
            // edge of its domain.
            return Err(EvalError::Domain { op: "sqrt", arg: 0.0 });
        }
        return Err(EvalError::DivisionByZero);
    }
    Ok(num / den)
}

pub(crate) fn checked_sqrt(arg: f64) -> Result<f64, EvalError> {
    if arg >= 0.0 {
        Ok(arg.sqrt())
    } else if arg >= -SQRT_NEG_TOLERANCE {
        Ok(0.0)
    } else {
        Err(EvalError::Domain { op: "sqrt", arg })
    }
}

pub(crate) fn checked_acos(arg: f64) -> Result<f64, EvalError> {
    if arg.abs() <= 1.0 {
        Ok(arg.acos())
    } else if arg.abs() <= 1.0 + ACOS_TOLERANCE {
        Ok(arg.clamp(-1.0, 1.0).acos())
    } else {
        Err(EvalError::Domain { op: "acos", arg })
    }
}

// Simplifying constructors. Each applies one level of folding, assuming its
// operands are already simplified.

fn fold_unary(node: Node) -> Expr {
    let e = Expr::new(node);
    match e.node() {
        Node::Sqrt(a) | Node::Cos(a) | Node::Acos(a) if a.as_const().is_some() => {
            match e.eval(&[]) {
                Ok(v) => Expr::constant(v),
                Err(_) => e,
            }
        }
        _ => e,
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a.node() {
        Node::Const(c) => Expr::constant(-c),
        Node::Neg(inner) => inner.clone(),
        _ => Expr::new(Node::Neg(a)),
    }
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::new(Node::Add(a, b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x - y),
        (Some(x), _) if x == 0.0 => neg(b),
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::new(Node::Sub(a, b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) => Expr::constant(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::zero(),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), _) if x == -1.0 => neg(b),
        (_, Some(y)) if y == -1.0 => neg(a),
        _ => Expr::new(Node::Mul(a, b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if y != 0.0 => Expr::constant(x / y),
        (Some(x), _) if x == 0.0 => Expr::zero(),
        (_, Some(y)) if y == 1.0 => a,
        _ => Expr::new(Node::Div(a, b)),
    }
}

pub(crate) fn powi(a: Expr, n: u32) -> Expr {
    match (a.as_const(), n) {
        (_, 0) => Expr::one(),
        (_, 1) => a,
        (Some(x), n) => Expr::constant(x.powi(n as i32)),
        _ => Expr::new(Node::Powi(a, n)),
    }
}

macro_rules! binary_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::new(Node::$variant(self, rhs))
            }
        }
        impl ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::new(Node::$variant(self.clone(), rhs.clone()))
            }
        }
        impl ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::new(Node::$variant(self, Expr::constant(rhs)))
            }
        }
        impl ops::$trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::new(Node::$variant(self.clone(), Expr::constant(rhs)))
            }
        }
        impl ops::$trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::new(Node::$variant(Expr::constant(self), rhs))
            }
        }
        impl ops::$trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::new(Node::$variant(Expr::constant(self), rhs.clone()))
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self))
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::new(Node::Neg(self.clone()))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Powi(a, n) => write!(f, "({a})^{n}"),
            Node::Sqrt(a) => write!(f, "sqrt({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Acos(a) => write!(f, "acos({a})"),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
