//! Limited-memory BFGS with a backtracking line search that accepts Armijo
//! or approximate Wolfe steps.

use std::collections::VecDeque;
use std::fmt;

use crate::linalg::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖g‖ ≤ tol (1 + ‖g₀‖)`.
    pub tol: f64,
    pub max_backtracks: usize,
    /// Relative energy increase tolerated by the approximate Wolfe test,
    /// which takes over once energy differences drown in rounding error.
    pub energy_slack: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self { memory: 12, max_iterations: 5000, tol: 1e-8, max_backtracks: 40, energy_slack: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub iterations: usize,
    /// Objective value after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimFailure {
    IterationCap,
    LineSearch,
    NonFinite,
}

/// Failed minimization; carries the best state reached.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimError {
    pub kind: OptimFailure,
    pub best: OptimOutcome,
}

impl fmt::Display for OptimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            OptimFailure::IterationCap => "iteration cap reached",
            OptimFailure::LineSearch => "line search failed",
            OptimFailure::NonFinite => "objective became non-finite",
        };
        write!(
            f,
            "{what} after {} iterations (value {:.6e}, gradient norm {:.3e}, initial {:.3e})",
            self.best.iterations, self.best.value, self.best.grad_norm, self.best.initial_grad_norm
        )
    }
}

impl std::error::Error for OptimError {}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// `precond`, when given, applies an approximate inverse Hessian to a vector.
pub fn minimize<F>(
    mut objective: F,
    x0: Vec<f64>,
    settings: &LbfgsSettings,
    precond: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
) -> Result<OptimOutcome, OptimError>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let apply_h0 = |v: &[f64]| -> Vec<f64> {
        match precond {
            Some(p) => p(v),
            None => v.to_vec(),
        }
    };
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let g0 = norm(&g);
    let target = settings.tol * (1.0 + g0);
    let mut out = OptimOutcome {
        x: Vec::new(),
        value: f,
        grad_norm: g0,
        initial_grad_norm: g0,
        iterations: 0,
        history: vec![f],
    };
    let fail = |kind, x: &[f64], out: &OptimOutcome| OptimError {
        kind,
        best: OptimOutcome { x: x.to_vec(), ..out.clone() },
    };
    if !f.is_finite() || !g0.is_finite() {
        return Err(fail(OptimFailure::NonFinite, &x, &out));
    }
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for iter in 0..settings.max_iterations {
        let gn = norm(&g);
        out.grad_norm = gn;
        out.iterations = iter;
        out.value = f;
        if gn <= target {
            out.x = x;
            return Ok(out);
        }
        let mut restarted = false;
        loop {
            let d = two_loop(&g, &mem, &apply_h0);
            let slope = dot(&g, &d);
            if !(slope < 0.0) {
                if mem.is_empty() {
                    return Err(fail(OptimFailure::LineSearch, &x, &out));
                }
                mem.clear();
                continue;
            }
            let mut alpha = if mem.is_empty() && precond.is_none() {
                1.0 / norm(&d).max(1.0)
            } else {
                1.0
            };
            let slack = 4.0 * f64::EPSILON * f.abs();
            let mut accepted = None;
            for _ in 0..settings.max_backtracks {
                let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + alpha * di).collect();
                let (ft, gt) = objective(&xt);
                let armijo = ft <= f + 1e-4 * alpha * slope + slack;
                let approx_wolfe = ft <= f + settings.energy_slack * f.abs() && {
                    let dslope = dot(&gt, &d);
                    0.9 * slope <= dslope && dslope <= -0.8 * slope
                };
                if ft.is_finite() && (armijo || approx_wolfe) {
                    accepted = Some((xt, ft, gt));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((xt, ft, gt)) => {
                    let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-16 * norm(&s) * norm(&y) && sy > 0.0 {
                        if mem.len() == settings.memory {
                            mem.pop_front();
                        }
                        mem.push_back((s, y, 1.0 / sy));
                    }
                    x = xt;
                    f = ft;
                    g = gt;
                    out.history.push(f);
                    break;
                }
                None if !restarted && !mem.is_empty() => {
                    mem.clear();
                    restarted = true;
                }
                None => {
                    out.iterations = iter;
                    return Err(fail(OptimFailure::LineSearch, &x, &out));
                }
            }
        }
        if !g.iter().all(|v| v.is_finite()) {
            return Err(fail(OptimFailure::NonFinite, &x, &out));
        }
    }
    out.grad_norm = norm(&g);
    out.value = f;
    out.iterations = settings.max_iterations;
    if out.grad_norm <= target {
        out.x = x;
        return Ok(out);
    }
    Err(fail(OptimFailure::IterationCap, &x, &out))
}

fn two_loop(
    g: &[f64],
    mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    h0: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let mut r = h0(&q);
    if let Some((s, y, _)) = mem.back() {
        let hy = h0(y);
        let gamma = dot(s, y) / dot(y, &hy);
        r.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &r);
        for (ri, si) in r.iter_mut().zip(s) {
            *ri += (a - b) * si;
        }
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}
