use super::{normalize, StationarySolver};
use crate::chain::TransitionMatrix;
use crate::error::{Error, Result};

/// Detailed balance for tridiagonal (birth-death) chains:
/// `pi[i+1] / pi[i] = A[i][i+1] / A[i+1][i]`, accumulated in log space.
///
/// For the two-form learner this is the geometric profile `pi[m] ~ lambda^m`.
#[derive(Clone, Copy, Debug, Default)]
pub struct BirthDeath;

impl StationarySolver for BirthDeath {
    fn name(&self) -> &'static str {
        "birth-death"
    }

    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>> {
        let n = matrix.len();
        for i in 0..n {
            if let Some((j, _)) = matrix.row(i).find(|&(j, _)| j.abs_diff(i) > 1) {
                return Err(Error::SolverNotApplicable {
                    solver: self.name(),
                    reason: format!("entry ({i}, {j}) is off the tridiagonal band"),
                });
            }
        }
        let mut log_pi = vec![0.0; n];
        for i in 0..n.saturating_sub(1) {
            let up = matrix.get(i, i + 1);
            let down = matrix.get(i + 1, i);
            if up == 0.0 || down == 0.0 {
                return Err(Error::SolverNotApplicable {
                    solver: self.name(),
                    reason: format!("states {i} and {} do not communicate", i + 1),
                });
            }
            log_pi[i + 1] = log_pi[i] + up.ln() - down.ln();
        }
        let top = log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        normalize(self.name(), log_pi.iter().map(|l| (l - top).exp()).collect())
    }
}
