//! Stationarity system of `f` on `G = 0` and its merit function.
//!
//! With multipliers `lambda_i` stored after the `m` coordinates,
//! `L = f + sum_i lambda_i g_i` and the equations are
//! `dL/dx_1 .. dL/dx_m, g_1 .. g_n`.

use crate::expr::{Expr, Tape};
use crate::lsq::{self, LmConfig, TapeResiduals};
use crate::separation::SeparatedFunction;

#[derive(Debug, Clone)]
pub struct LagrangeSystem {
    pub m: usize,
    pub n: usize,
    pub lagrangian: Expr,
    /// `m + n` equations over `(X, Lambda)`.
    pub equations: Vec<Expr>,
}

pub fn build_lagrange(sf: &SeparatedFunction) -> LagrangeSystem {
    build_lagrange_from(&sf.f, &sf.g, sf.m())
}

/// Lagrange system of `f` subject to `g` over `m` coordinates.
pub fn build_lagrange_from(f: &Expr, g: &[Expr], m: usize) -> LagrangeSystem {
    let n = g.len();
    let mut lagrangian = f.clone();
    for (i, gi) in g.iter().enumerate() {
        lagrangian = lagrangian + Expr::var(m + i) * gi.clone();
    }
    let mut equations: Vec<Expr> = (0..m)
        .map(|j| lagrangian.differentiate(j).simplify())
        .collect();
    equations.extend(g.iter().cloned());
    LagrangeSystem {
        m,
        n,
        lagrangian,
        equations,
    }
}

/// `h = sum of squared equations`, with a compiled evaluator.
#[derive(Debug, Clone)]
pub struct MeritFunction {
    pub h: Expr,
    equations: Vec<Expr>,
    tape: Tape,
}

pub fn build_merit(ls: &LagrangeSystem) -> MeritFunction {
    MeritFunction::from_equations(ls.equations.clone(), ls.m + ls.n)
}

impl MeritFunction {
    /// Merit function of an arbitrary equation system over `dim` variables.
    pub fn from_equations(equations: Vec<Expr>, dim: usize) -> Self {
        let mut h = Expr::zero();
        for e in &equations {
            h = h + e.powi(2);
        }
        let tape = Tape::compile(&equations, dim);
        MeritFunction { h, equations, tape }
    }

    pub fn dim(&self) -> usize {
        self.tape.n_vars()
    }

    pub fn equations(&self) -> &[Expr] {
        &self.equations
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn workspace(&self) -> MeritWorkspace<'_> {
        MeritWorkspace {
            merit: self,
            scratch: Vec::new(),
            out: Vec::new(),
            evaluations: 0,
        }
    }

    /// `h(x)`, or `+inf` outside the domain.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.workspace().fitness(x)
    }
}

/// Scratch buffers and an evaluation counter for one evaluating thread.
pub struct MeritWorkspace<'a> {
    merit: &'a MeritFunction,
    scratch: Vec<f64>,
    out: Vec<f64>,
    pub evaluations: usize,
}

impl MeritWorkspace<'_> {
    pub fn dim(&self) -> usize {
        self.merit.dim()
    }

    pub fn fitness(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        self.merit
            .tape
            .sum_of_squares(x, &mut self.scratch, &mut self.out)
    }

    /// Damped Gauss-Newton refinement of the equations from `x`.
    /// The returned fitness is never above `fitness(x)`.
    pub fn polish(&mut self, x: &[f64], iterations: usize) -> (Vec<f64>, f64) {
        let mut problem = TapeResiduals::new(&self.merit.tape);
        let cfg = LmConfig {
            max_iterations: iterations,
            target_cost: 1e-26,
            stall_ratio: 1e-4,
            stall_window: 10,
        };
        let res = lsq::minimize(&mut problem, x, &cfg);
        self.evaluations += res.evaluations;
        (res.x, res.cost)
    }
}
