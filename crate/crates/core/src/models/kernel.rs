use serde::{Deserialize, Serialize};

use super::params::KernelKind;
use crate::matrix::Matrix;

/// A kernel with its constants resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub degree: i32,
    pub coef0: f64,
}

impl Kernel {
    pub const DEGREE: i32 = 3;
    pub const COEF0: f64 = 0.0;

    /// Constants for training data `x`: `gamma = 1 / (n_features · Var(x))` over
    /// all entries, degree 3, coef0 0.
    pub fn for_data(kind: KernelKind, x: &Matrix) -> Self {
        let all = x.as_slice();
        let var = if all.is_empty() {
            0.0
        } else {
            crate::metrics::population_std(all).powi(2)
        };
        let gamma = if var > 0.0 {
            1.0 / (x.cols() as f64 * var)
        } else {
            1.0
        };
        Self {
            kind,
            gamma,
            degree: Self::DEGREE,
            coef0: Self::COEF0,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Rbf => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Poly => (self.gamma * dot(x, z) + self.coef0).powi(self.degree),
            KernelKind::Sigmoid => (self.gamma * dot(x, z) + self.coef0).tanh(),
        }
    }

    pub fn gram(&self, x: &Matrix) -> Vec<f64> {
        let n = x.rows();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(x.row(i), x.row(j));
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }
}

#[inline]
fn dot(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a * b).sum()
}
