//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the infinity norm of the gradient drops below this.
    pub gtol: f64,
    /// Stop when an iteration's relative decrease in the objective drops below this.
    pub ftol: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 1000,
            gtol: 1e-10,
            ftol: 1e-13,
            armijo_c1: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Objective,
    MaxIter,
    LineSearch,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    /// Objective at the start and after each accepted step.
    pub log: Vec<f64>,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    super::fastmath::dot(a, b)
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which writes the gradient into its second argument and
/// returns the objective value.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut log = vec![fx];
    if !fx.is_finite() {
        return LbfgsResult { x, f: fx, iterations: 0, log, termination: Termination::NonFinite };
    }

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut termination = Termination::MaxIter;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if inf_norm(&g) <= opts.gtol {
            termination = Termination::Gradient;
            break;
        }

        // Two-loop recursion: d = -H g.
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (m, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[m] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        if let Some((s, y, _)) = hist.back() {
            let scale = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= scale);
        }
        for (m, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha_buf[m] - b) * si);
        }

        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            hist.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = dot(&g, &d);
        }

        let mut step = if hist.is_empty() {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            x_new.iter_mut().zip(&x).zip(&d).for_each(|((xn, xi), di)| *xn = xi + step * di);
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + opts.armijo_c1 * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            termination = Termination::LineSearch;
            break;
        };
        iterations += 1;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }

        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        let f_prev = fx;
        fx = f_new;
        log.push(fx);
        if f_prev - fx <= opts.ftol * f_prev.abs().max(fx.abs()).max(1.0) {
            termination = Termination::Objective;
            break;
        }
    }

    LbfgsResult { x, f: fx, iterations, log, termination }
}
