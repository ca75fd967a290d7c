use faer::prelude::*;
use faer::Mat;

use super::{normalize, StationarySolver};
use crate::chain::TransitionMatrix;
use crate::error::{Error, Result};

/// Dense LU solve of `pi (A - I) = 0` with one balance equation replaced by
/// `sum(pi) = 1`.
#[derive(Clone, Debug)]
pub struct Direct {
    pub max_states: usize,
}

impl Default for Direct {
    fn default() -> Self {
        Self { max_states: 3000 }
    }
}

impl StationarySolver for Direct {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>> {
        let n = matrix.len();
        if n > self.max_states {
            return Err(Error::SolverNotApplicable {
                solver: self.name(),
                reason: format!("{n} states exceeds dense limit {}", self.max_states),
            });
        }
        // Row j of the system is column j of (A - I).
        let mut system = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for (j, p) in matrix.row(i) {
                system[(j, i)] += p;
            }
            system[(i, i)] -= 1.0;
        }
        for i in 0..n {
            system[(n - 1, i)] = 1.0;
        }
        let mut rhs = Mat::<f64>::zeros(n, 1);
        rhs[(n - 1, 0)] = 1.0;
        let pi = system.partial_piv_lu().solve(&rhs);
        let pi: Vec<f64> = (0..n).map(|i| pi[(i, 0)]).collect();
        if pi.iter().any(|p| !p.is_finite()) {
            return Err(Error::SolverNotApplicable {
                solver: self.name(),
                reason: "singular system (chain not irreducible?)".into(),
            });
        }
        normalize(self.name(), pi)
    }
}
