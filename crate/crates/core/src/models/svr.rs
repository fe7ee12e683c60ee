//! Epsilon-insensitive support vector regression.
//!
//! The dual is solved in its doubled form over `2n` variables
//! `β = (α, α*)` with labels `z = (+1…, −1…)`:
//!
//! ```text
//! min ½ βᵀQβ + pᵀβ   s.t.  zᵀβ = 0,  0 ≤ β ≤ C
//! Q_tu = z_t z_u K(x_t mod n, x_u mod n),  p = (ε − y, ε + y)
//! ```
//!
//! by sequential minimal optimization with second-order working-set selection.
//! The fitted function is `f(x) = Σ (α_i − α*_i) K(x_i, x) + b`.

use serde::{Deserialize, Serialize};

use super::kernel::Kernel;
use super::params::SvrParams;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SMO_TOL: f64 = 1e-4;
pub const SMO_MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        Self { tol: SMO_TOL, max_iter: SMO_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i − α*_i` for each support vector, in `[−C, C]`.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Dual objective `½ θᵀKθ + ε Σ|θ| − yᵀθ` at the solution (θ over all training rows).
    pub objective: f64,
    pub iterations: usize,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.len() != x.len() {
                return Err(Error::Dimension { expected: sv.len(), got: x.len() });
            }
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias)
    }
}

/// Dual objective of the reduced problem for coefficients `theta` on gram matrix `k`.
pub fn dual_objective(k: &[f64], y: &[f64], epsilon: f64, theta: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        let ki = &k[i * n..(i + 1) * n];
        quad += theta[i] * ki.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>();
    }
    0.5 * quad + epsilon * theta.iter().map(|t| t.abs()).sum::<f64>()
        - y.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
}

pub fn svr_fit(x: &Matrix, y: &[f64], params: &SvrParams) -> Result<SvrModel> {
    params.validate()?;
    let kernel = Kernel::for_data(params.kernel, x);
    svr_fit_with_kernel(x, y, params.c, params.epsilon, kernel, SmoOptions::default())
}

pub fn svr_fit_with_kernel(
    x: &Matrix,
    y: &[f64],
    c: f64,
    epsilon: f64,
    kernel: Kernel,
    opts: SmoOptions,
) -> Result<SvrModel> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if y.len() != n {
        return Err(Error::Dimension { expected: n, got: y.len() });
    }
    let k = kernel.gram(x);
    let sol = solve_dual(&k, y, c, epsilon, opts)?;

    let theta: Vec<f64> = (0..n).map(|i| sol.beta[i] - sol.beta[i + n]).collect();
    let objective = dual_objective(&k, y, epsilon, &theta);
    let (support_vectors, dual_coef) = theta
        .iter()
        .enumerate()
        .filter(|(_, t)| **t != 0.0)
        .map(|(i, t)| (x.row(i).to_vec(), *t))
        .unzip();
    Ok(SvrModel {
        kernel,
        support_vectors,
        dual_coef,
        bias: -sol.rho,
        objective,
        iterations: sol.iterations,
    })
}

struct DualSolution {
    beta: Vec<f64>,
    rho: f64,
    iterations: usize,
}

fn solve_dual(k: &[f64], y: &[f64], c: f64, epsilon: f64, opts: SmoOptions) -> Result<DualSolution> {
    let n = y.len();
    let l = 2 * n;
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    let kk = |t: usize, u: usize| k[(t % n) * n + (u % n)];
    let q = |t: usize, u: usize| z(t) * z(u) * kk(t, u);

    let mut beta = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();
    let qd: Vec<f64> = (0..l).map(|t| kk(t, t)).collect();

    let is_upper = |b: f64| b >= c;
    let is_lower = |b: f64| b <= 0.0;

    let mut iterations = 0;
    loop {
        // Working set: i maximizes −z G over I_up, j minimizes the second-order
        // decrease over I_low.
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax_idx = usize::MAX;
        for t in 0..l {
            let up = if z(t) > 0.0 { !is_upper(beta[t]) } else { !is_lower(beta[t]) };
            if up && -z(t) * grad[t] >= gmax {
                gmax = -z(t) * grad[t];
                gmax_idx = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gmin_idx = usize::MAX;
        let mut obj_min = f64::INFINITY;
        let i = gmax_idx;
        for t in 0..l {
            let low = if z(t) > 0.0 { !is_lower(beta[t]) } else { !is_upper(beta[t]) };
            if !low {
                continue;
            }
            let zg = z(t) * grad[t];
            if zg >= gmax2 {
                gmax2 = zg;
            }
            if i == usize::MAX {
                continue;
            }
            let grad_diff = gmax + zg;
            if grad_diff > 0.0 {
                let quad = qd[i] + qd[t] - 2.0 * z(i) * z(t) * q(i, t);
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    gmin_idx = t;
                }
            }
        }
        let violation = gmax + gmax2;
        if violation < opts.tol || gmin_idx == usize::MAX || i == usize::MAX {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence { iterations, max_violation: violation });
        }
        iterations += 1;
        let j = gmin_idx;

        let (old_i, old_j) = (beta[i], beta[j]);
        let qij = q(i, j);
        if z(i) != z(j) {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }

        let (di, dj) = (beta[i] - old_i, beta[j] - old_j);
        for t in 0..l {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Bias from free variables, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = z(t) * grad[t];
        if is_upper(beta[t]) {
            if z(t) < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if is_lower(beta[t]) {
            if z(t) > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Ok(DualSolution { beta, rho, iterations })
}
