//! Flat evaluation program for a batch of expressions.
//!
//! Compilation hash-conses nodes, so shared and structurally repeated
//! subterms are evaluated once per call. Forward-mode tangents give exact
//! Jacobian columns.

use std::collections::HashMap;

use super::{checked_acos, checked_div, checked_sqrt, EvalError, Expr, Node, ACOS_TOLERANCE};

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32, bool),
    Powi(u32, u32),
    Sqrt(u32),
    Cos(u32),
    Acos(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    Var(u32),
    Neg(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Powi(u32, u32),
    Sqrt(u32),
    Cos(u32),
    Acos(u32),
}

#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    n_vars: usize,
}

struct Compiler {
    ops: Vec<Op>,
    by_key: HashMap<Key, u32>,
    by_node: HashMap<usize, u32>,
}

impl Compiler {
    fn push(&mut self, key: Key, op: Op) -> u32 {
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.ops.len() as u32;
        self.ops.push(op);
        self.by_key.insert(key, slot);
        slot
    }

    fn compile(&mut self, e: &Expr) -> u32 {
        if let Some(&slot) = self.by_node.get(&e.id()) {
            return slot;
        }
        let slot = match e.node() {
            Node::Const(c) => self.push(Key::Const(c.to_bits()), Op::Const(*c)),
            Node::Var(i) => self.push(Key::Var(*i as u32), Op::Var(*i as u32)),
            Node::Neg(a) => {
                let a = self.compile(a);
                self.push(Key::Neg(a), Op::Neg(a))
            }
            Node::Add(a, b) => {
                let (a, b) = (self.compile(a), self.compile(b));
                self.push(Key::Add(a.min(b), a.max(b)), Op::Add(a, b))
            }
            Node::Sub(a, b) => {
                let (a, b) = (self.compile(a), self.compile(b));
                self.push(Key::Sub(a, b), Op::Sub(a, b))
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.compile(a), self.compile(b));
                self.push(Key::Mul(a.min(b), a.max(b)), Op::Mul(a, b))
            }
            Node::Div(num, den) => {
                let sqrt_den = matches!(den.node(), Node::Sqrt(_));
                let (a, b) = (self.compile(num), self.compile(den));
                self.push(Key::Div(a, b), Op::Div(a, b, sqrt_den))
            }
            Node::Powi(a, n) => {
                let a = self.compile(a);
                self.push(Key::Powi(a, *n), Op::Powi(a, *n))
            }
            Node::Sqrt(a) => {
                let a = self.compile(a);
                self.push(Key::Sqrt(a), Op::Sqrt(a))
            }
            Node::Cos(a) => {
                let a = self.compile(a);
                self.push(Key::Cos(a), Op::Cos(a))
            }
            Node::Acos(a) => {
                let a = self.compile(a);
                self.push(Key::Acos(a), Op::Acos(a))
            }
        };
        self.by_node.insert(e.id(), slot);
        slot
    }
}

impl Tape {
    /// Compile `exprs` over a coordinate vector of length `n_vars`.
    pub fn compile(exprs: &[Expr], n_vars: usize) -> Tape {
        let mut c = Compiler {
            ops: Vec::new(),
            by_key: HashMap::new(),
            by_node: HashMap::new(),
        };
        let outputs = exprs.iter().map(|e| c.compile(e)).collect();
        Tape {
            ops: c.ops,
            outputs,
            n_vars,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Evaluate every output into `out`. `scratch` is resized as needed.
    pub fn eval(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), EvalError> {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => *x.get(i as usize).ok_or(EvalError::VariableOutOfRange {
                    index: i as usize,
                    len: x.len(),
                })?,
                Op::Neg(a) => -scratch[a as usize],
                Op::Add(a, b) => scratch[a as usize] + scratch[b as usize],
                Op::Sub(a, b) => scratch[a as usize] - scratch[b as usize],
                Op::Mul(a, b) => scratch[a as usize] * scratch[b as usize],
                Op::Div(a, b, s) => checked_div(scratch[a as usize], scratch[b as usize], s)?,
                Op::Powi(a, n) => scratch[a as usize].powi(n as i32),
                Op::Sqrt(a) => checked_sqrt(scratch[a as usize])?,
                Op::Cos(a) => scratch[a as usize].cos(),
                Op::Acos(a) => checked_acos(scratch[a as usize])?,
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot as usize];
        }
        Ok(())
    }

    /// Sum of squared outputs, `+inf` when evaluation fails or overflows.
    pub fn sum_of_squares(&self, x: &[f64], scratch: &mut Vec<f64>, out: &mut Vec<f64>) -> f64 {
        out.resize(self.outputs.len(), 0.0);
        match self.eval(x, scratch, out) {
            Ok(()) => {
                let s: f64 = out.iter().map(|v| v * v).sum();
                if s.is_finite() {
                    s
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    /// Values and directional derivatives along coordinate `dir`.
    fn eval_tangent(
        &self,
        x: &[f64],
        dir: usize,
        scratch: &mut Vec<(f64, f64)>,
    ) -> Result<(), EvalError> {
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => (c, 0.0),
                Op::Var(i) => {
                    let i = i as usize;
                    let v = *x.get(i).ok_or(EvalError::VariableOutOfRange {
                        index: i,
                        len: x.len(),
                    })?;
                    (v, if i == dir { 1.0 } else { 0.0 })
                }
                Op::Neg(a) => {
                    let (v, d) = scratch[a as usize];
                    (-v, -d)
                }
                Op::Add(a, b) => {
                    let ((va, da), (vb, db)) = (scratch[a as usize], scratch[b as usize]);
                    (va + vb, da + db)
                }
                Op::Sub(a, b) => {
                    let ((va, da), (vb, db)) = (scratch[a as usize], scratch[b as usize]);
                    (va - vb, da - db)
                }
                Op::Mul(a, b) => {
                    let ((va, da), (vb, db)) = (scratch[a as usize], scratch[b as usize]);
                    (va * vb, da * vb + va * db)
                }
                Op::Div(a, b, s) => {
                    let ((va, da), (vb, db)) = (scratch[a as usize], scratch[b as usize]);
                    let q = checked_div(va, vb, s)?;
                    (q, (da - q * db) / vb)
                }
                Op::Powi(a, n) => {
                    let (v, d) = scratch[a as usize];
                    match n {
                        0 => (1.0, 0.0),
                        n => (v.powi(n as i32), n as f64 * v.powi(n as i32 - 1) * d),
                    }
                }
                Op::Sqrt(a) => {
                    let (v, d) = scratch[a as usize];
                    let r = checked_sqrt(v)?;
                    if d == 0.0 {
                        (r, 0.0)
                    } else if r == 0.0 {
                        return Err(EvalError::Domain { op: "sqrt", arg: v });
                    } else {
                        (r, d / (2.0 * r))
                    }
                }
                Op::Cos(a) => {
                    let (v, d) = scratch[a as usize];
                    (v.cos(), -v.sin() * d)
                }
                Op::Acos(a) => {
                    let (v, d) = scratch[a as usize];
                    let r = checked_acos(v)?;
                    if d == 0.0 {
                        (r, 0.0)
                    } else {
                        let s = 1.0 - v * v;
                        if s <= ACOS_TOLERANCE {
                            return Err(EvalError::Domain { op: "acos", arg: v });
                        }
                        (r, -d / s.sqrt())
                    }
                }
            };
            scratch.push(v);
        }
        Ok(())
    }

    /// Dense Jacobian, row-major `n_outputs x n_vars`, with the values in `values`.
    pub fn jacobian(
        &self,
        x: &[f64],
        scratch: &mut Vec<(f64, f64)>,
        values: &mut [f64],
        jac: &mut [f64],
    ) -> Result<(), EvalError> {
        let n = self.n_vars;
        debug_assert_eq!(jac.len(), self.outputs.len() * n);
        for dir in 0..n {
            self.eval_tangent(x, dir, scratch)?;
            for (row, &slot) in self.outputs.iter().enumerate() {
                let (v, d) = scratch[slot as usize];
                jac[row * n + dir] = d;
                if dir == 0 {
                    values[row] = v;
                }
            }
        }
        if n == 0 {
            let mut plain = Vec::new();
            self.eval(x, &mut plain, values)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_subterms_compile_once() {
        let x = Expr::var(0);
        let y = Expr::var(1);
        let d = ((&x - &y).powi(2)).sqrt();
        let d2 = ((&x - &y).powi(2)).sqrt();
        let tape = Tape::compile(&[d.clone() + 1.0, d2 * 2.0], 2);
        // x, y, x-y, ^2, sqrt, 1, +, 2, *
        assert_eq!(tape.len(), 9);
        let mut s = Vec::new();
        let mut out = [0.0; 2];
        tape.eval(&[4.0, 1.0], &mut s, &mut out).unwrap();
        assert_eq!(out, [4.0, 6.0]);
    }

    #[test]
    fn jacobian_matches_symbolic() {
        let x = Expr::var(0);
        let y = Expr::var(1);
        let e = (&x * &y + x.acos()) / (y.powi(2) + 1.0).sqrt();
        let tape = Tape::compile(&[e.clone()], 2);
        let p = [0.3, -1.7];
        let mut s = Vec::new();
        let mut vals = [0.0];
        let mut jac = [0.0; 2];
        tape.jacobian(&p, &mut s, &mut vals, &mut jac).unwrap();
        assert!((vals[0] - e.eval(&p).unwrap()).abs() < 1e-15);
        for i in 0..2 {
            let sym = e.differentiate(i).eval(&p).unwrap();
            assert!((jac[i] - sym).abs() < 1e-12, "{} vs {}", jac[i], sym);
        }
    }

    #[test]
    fn domain_errors_propagate() {
        let tape = Tape::compile(&[Expr::var(0).sqrt()], 1);
        let mut s = Vec::new();
        let mut out = [0.0];
        assert!(tape.eval(&[-1.0], &mut s, &mut out).is_err());
        let mut ds = Vec::new();
        let mut jac = [0.0];
        assert!(tape.jacobian(&[0.0], &mut ds, &mut out, &mut jac).is_err());
    }
}
