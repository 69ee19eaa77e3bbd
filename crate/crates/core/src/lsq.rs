//! Damped least squares (Levenberg-Marquardt) on a residual vector.

use nalgebra::{DMatrix, DVector};

use crate::expr::Tape;

/// A residual vector `r(x)` with an exact Jacobian.
pub trait Residuals {
    fn n_residuals(&self) -> usize;
    fn n_vars(&self) -> usize;
    /// Writes `r(x)` into `out`. Returns false outside the domain.
    fn residuals(&mut self, x: &[f64], out: &mut [f64]) -> bool;
    /// Writes `r(x)` and the row-major Jacobian. Returns false outside the domain.
    fn jacobian(&mut self, x: &[f64], values: &mut [f64], jac: &mut [f64]) -> bool;
}

/// Residuals backed by a compiled tape.
pub struct TapeResiduals<'a> {
    tape: &'a Tape,
    scratch: Vec<f64>,
    dual: Vec<(f64, f64)>,
}

impl<'a> TapeResiduals<'a> {
    pub fn new(tape: &'a Tape) -> Self {
        TapeResiduals {
            tape,
            scratch: Vec::new(),
            dual: Vec::new(),
        }
    }
}

impl Residuals for TapeResiduals<'_> {
    fn n_residuals(&self) -> usize {
        self.tape.n_outputs()
    }

    fn n_vars(&self) -> usize {
        self.tape.n_vars()
    }

    fn residuals(&mut self, x: &[f64], out: &mut [f64]) -> bool {
        self.tape.eval(x, &mut self.scratch, out).is_ok() && out.iter().all(|v| v.is_finite())
    }

    fn jacobian(&mut self, x: &[f64], values: &mut [f64], jac: &mut [f64]) -> bool {
        self.tape.jacobian(x, &mut self.dual, values, jac).is_ok()
            && jac.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct LmConfig {
    /// Accepted steps.
    pub max_iterations: usize,
    /// Stop as soon as the sum of squares drops to this value.
    pub target_cost: f64,
    /// Stop when the relative decrease over `stall_window` iterations is below this.
    pub stall_ratio: f64,
    pub stall_window: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: 100,
            target_cost: 0.0,
            stall_ratio: 1e-3,
            stall_window: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`; `+inf` if never evaluable.
    pub cost: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub evaluations: usize,
}

/// Minimizes `sum r_i(x)^2` from `x0`. The returned cost never exceeds the
/// cost at `x0`.
pub fn minimize<R: Residuals>(problem: &mut R, x0: &[f64], cfg: &LmConfig) -> LmResult {
    let n = problem.n_vars();
    let m = problem.n_residuals();
    let mut x = x0.to_vec();
    let mut r = vec![0.0; m];
    let mut evaluations = 1;
    if !problem.residuals(&x, &mut r) {
        return LmResult {
            x,
            cost: f64::INFINITY,
            iterations: 0,
            evaluations,
        };
    }
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    if m == 0 || n == 0 {
        return LmResult {
            x,
            cost,
            iterations: 0,
            evaluations,
        };
    }

    let mut jac = vec![0.0; m * n];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut mu = -1.0;
    let mut nu = 2.0;
    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iterations + 1);
    history.push(cost);
    let mut iterations = 0;
    let mut need_jacobian = true;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);

    // rejected steps only raise the damping; they are bounded separately
    let mut rejections = 0;
    while iterations < cfg.max_iterations && cost > cfg.target_cost {
        if need_jacobian {
            if !jacobian_near(problem, &x, &mut r, &mut jac) {
                break;
            }
            let j = DMatrix::from_row_slice(m, n, &jac);
            let rv = DVector::from_column_slice(&r);
            a = j.tr_mul(&j);
            g = j.tr_mul(&rv);
            if g.amax() <= 1e-300 {
                break;
            }
            if mu < 0.0 {
                let diag_max = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
                mu = 1e-3 * diag_max.max(1e-12);
            }
            need_jacobian = false;
        }

        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += mu;
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => {
                mu *= nu;
                nu *= 2.0;
                rejections += 1;
                if rejections > 4 * cfg.max_iterations {
                    break;
                }
                continue;
            }
        };

        let step_norm = step.norm();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if step_norm <= 1e-15 * (x_norm + 1e-15) {
            break;
        }
        for i in 0..n {
            trial[i] = x[i] + step[i];
        }
        evaluations += 1;
        let new_cost = if problem.residuals(&trial, &mut r_trial) {
            r_trial.iter().map(|v| v * v).sum::<f64>()
        } else {
            f64::INFINITY
        };
        // predicted decrease of 0.5 * cost: 0.5 * step . (mu * step - g)
        let predicted = 0.5 * step.dot(&(step.scale(mu) - &g));
        let rho = if predicted > 0.0 {
            0.5 * (cost - new_cost) / predicted
        } else {
            -1.0
        };
        if new_cost < cost && rho > 0.0 {
            iterations += 1;
            x.copy_from_slice(&trial);
            r.copy_from_slice(&r_trial);
            cost = new_cost;
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            need_jacobian = true;
            history.push(cost);
            let k = history.len();
            if k > cfg.stall_window {
                let old = history[k - 1 - cfg.stall_window];
                if cost > (1.0 - cfg.stall_ratio) * old {
                    break;
                }
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            rejections += 1;
            if !mu.is_finite() || mu > 1e30 || rejections > 4 * cfg.max_iterations {
                break;
            }
        }
    }

    LmResult {
        x,
        cost,
        iterations,
        evaluations,
    }
}

/// Runs `minimize` from each start in turn and returns the best result,
/// stopping at the first one whose cost is below `accept`.
pub fn multistart<R, I>(problem: &mut R, starts: I, cfg: &LmConfig, accept: f64) -> Option<LmResult>
where
    R: Residuals,
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut best: Option<LmResult> = None;
    let mut evaluations = 0;
    for x0 in starts {
        let res = minimize(problem, &x0, cfg);
        evaluations += res.evaluations;
        let better = best.as_ref().map_or(true, |b| res.cost < b.cost);
        if better {
            best = Some(res);
        }
        if best.as_ref().is_some_and(|b| b.cost < accept) {
            break;
        }
    }
    best.map(|mut b| {
        b.evaluations = evaluations;
        b
    })
}

/// Jacobian at `x`, or at a nearby point when `x` sits on a derivative
/// singularity (for example two coincident points under a distance) or the
/// Jacobian vanishes away from a root.
fn jacobian_near<R: Residuals>(problem: &mut R, x: &[f64], r: &mut [f64], jac: &mut [f64]) -> bool {
    if problem.jacobian(x, r, jac) {
        let flat = jac.iter().all(|v| *v == 0.0);
        if !flat || r.iter().all(|v| *v == 0.0) {
            return true;
        }
    }
    let mut shifted = x.to_vec();
    for (i, v) in shifted.iter_mut().enumerate() {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        *v += sign * 1e-7 * (1.0 + v.abs()) * (1.0 + i as f64 / 7.0);
    }
    let mut r_shift = vec![0.0; r.len()];
    if problem.jacobian(&shifted, &mut r_shift, jac) {
        // keep r at x so the model stays anchored at the current point
        return true;
    }
    false
}
