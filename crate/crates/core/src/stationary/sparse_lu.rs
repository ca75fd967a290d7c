use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use super::{normalize, StationarySolver};
use crate::chain::TransitionMatrix;
use crate::error::{Error, Result};

/// Sparse LU solve of the balance equations with one state's mass pinned to 1.
///
/// Pinning keeps the system sparse (a row of ones for the normalization would
/// fill the factors). If the pinned state turns out to carry negligible mass
/// the solve is repeated pinned at the heaviest state, which keeps the other
/// entries representable.
#[derive(Clone, Copy, Debug, Default)]
pub struct SparseLu;

/// Pinned mass relative to the largest entry below which we re-pin.
const REPIN_RATIO: f64 = 1e-3;

impl SparseLu {
    fn solve_pinned(&self, matrix: &TransitionMatrix, pin: usize) -> Result<Vec<f64>> {
        let n = matrix.len();
        // Unknown/equation index with `pin` removed.
        let reduced = |k: usize| if k < pin { k } else { k - 1 };
        let mut triplets = Vec::with_capacity(matrix.nnz() + n);
        let mut rhs = Col::<f64>::zeros(n - 1);
        for i in 0..n {
            for (j, p) in matrix.row(i) {
                // Equation j collects inflow from i.
                if j == pin {
                    continue;
                }
                if i == pin {
                    rhs[reduced(j)] -= p;
                } else {
                    triplets.push(Triplet::new(reduced(j), reduced(i), p));
                }
            }
            if i != pin {
                triplets.push(Triplet::new(reduced(i), reduced(i), -1.0));
            }
        }
        let system = SparseColMat::<usize, f64>::try_new_from_triplets(n - 1, n - 1, &triplets)
            .map_err(|e| self.failure(format!("assembly failed: {e:?}")))?;
        let lu = system
            .sp_lu()
            .map_err(|e| self.failure(format!("factorization failed: {e:?}")))?;
        let x = lu.solve(&rhs);
        let mut pi = Vec::with_capacity(n);
        for k in 0..n {
            pi.push(if k == pin { 1.0 } else { x[reduced(k)] });
        }
        Ok(pi)
    }

    fn failure(&self, reason: String) -> Error {
        Error::SolverNotApplicable {
            solver: self.name(),
            reason,
        }
    }
}

impl StationarySolver for SparseLu {
    fn name(&self) -> &'static str {
        "sparse-lu"
    }

    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>> {
        let n = matrix.len();
        if n == 1 {
            return Ok(vec![1.0]);
        }
        // Corners of the learner lattice are the only states with self-loops,
        // and the stickiest one carries the most mass.
        let mut pin = (0..n)
            .max_by(|&a, &b| matrix.get(a, a).total_cmp(&matrix.get(b, b)).then(a.cmp(&b)))
            .unwrap();
        for _ in 0..3 {
            let pi = self.solve_pinned(matrix, pin)?;
            let heaviest = pi
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(k, _)| k)
                .unwrap();
            let top = pi[heaviest].abs();
            if pi.iter().all(|p| p.is_finite()) && top * REPIN_RATIO <= 1.0 {
                return normalize(self.name(), pi);
            }
            if heaviest == pin {
                break;
            }
            pin = heaviest;
        }
        Err(self.failure("could not find a well-conditioned pinned state".into()))
    }
}
