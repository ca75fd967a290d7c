use super::{normalize, StationarySolver};
use crate::chain::TransitionMatrix;
use crate::error::{Error, Result};

/// Gauss-Seidel sweeps over the balance equations
/// `pi[k] (1 - A[k][k]) = sum_{i != k} pi[i] A[i][k]`.
#[derive(Clone, Debug)]
pub struct GaussSeidel {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for GaussSeidel {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_sweeps: 1_000_000,
        }
    }
}

impl StationarySolver for GaussSeidel {
    fn name(&self) -> &'static str {
        "gauss-seidel"
    }

    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>> {
        let n = matrix.len();
        let incoming = matrix.transpose();
        let stay: Vec<f64> = (0..n).map(|k| matrix.get(k, k)).collect();
        if n > 1 {
            if let Some(k) = stay.iter().position(|&a| a >= 1.0) {
                return Err(Error::SolverNotApplicable {
                    solver: self.name(),
                    reason: format!("state {k} is absorbing"),
                });
            }
        }
        let mut pi = vec![1.0 / n as f64; n];
        let mut residual = f64::INFINITY;
        for sweep in 0..self.max_sweeps {
            for k in 0..n {
                let inflow: f64 = incoming
                    .row(k)
                    .filter(|&(i, _)| i != k)
                    .map(|(i, p)| pi[i] * p)
                    .sum();
                pi[k] = inflow / (1.0 - stay[k]);
            }
            let sum: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= sum);
            if sweep % 8 == 7 || n == 1 {
                residual = matrix.residual(&pi);
                if residual <= self.tolerance {
                    return normalize(self.name(), pi);
                }
            }
        }
        Err(Error::NotConverged {
            solver: self.name(),
            iterations: self.max_sweeps,
            residual,
        })
    }
}
