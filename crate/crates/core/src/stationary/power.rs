use super::{normalize, StationarySolver};
use crate::chain::TransitionMatrix;
use crate::error::{Error, Result};

/// Power iteration on the lazy chain `(I + A) / 2`, which has the same
/// stationary vector as `A` but no periodic oscillation.
#[derive(Clone, Debug)]
pub struct PowerIteration {
    /// Stop once `max |pi A - pi|` falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 5_000_000,
        }
    }
}

impl StationarySolver for PowerIteration {
    fn name(&self) -> &'static str {
        "power"
    }

    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>> {
        let n = matrix.len();
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..self.max_iterations {
            matrix.left_multiply(&pi, &mut next);
            residual = 0.0;
            let mut sum = 0.0;
            for (p, q) in pi.iter_mut().zip(&next) {
                residual = f64::max(residual, (q - *p).abs());
                *p = 0.5 * (*p + q);
                sum += *p;
            }
            pi.iter_mut().for_each(|p| *p /= sum);
            if residual <= self.tolerance {
                return normalize(self.name(), pi);
            }
        }
        Err(Error::NotConverged {
            solver: self.name(),
            iterations: self.max_iterations,
            residual,
        })
    }
}
