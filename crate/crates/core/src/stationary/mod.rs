//! Stationary distributions of learner chains.
//!
//! Solvers are interchangeable strategies behind [`StationarySolver`] and are
//! looked up by name in a [`SolverRegistry`]. Every solver works on an
//! irreducible row-stochastic matrix; [`stationary`] first restricts a chain
//! to its unique closed class so a degenerate source (some `nu[i]` equal to 0
//! or 1) is handled the same way by all of them.

mod birth_death;
mod direct;
mod gauss_seidel;
mod power;
mod sparse_lu;

use std::collections::BTreeMap;
use std::sync::Arc;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::chain::{ChainModel, TransitionMatrix};
use crate::error::{invalid, Error, Result};

pub use birth_death::BirthDeath;
pub use direct::Direct;
pub use gauss_seidel::GaussSeidel;
pub use power::PowerIteration;
pub use sparse_lu::SparseLu;

/// A method for computing the stationary vector of an irreducible chain.
pub trait StationarySolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns `pi` with `pi A = pi`, `sum(pi) = 1`, `pi >= 0`.
    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>>;
}

/// Dense LU for small chains, sparse LU above `direct_limit` states.
pub struct Auto {
    pub direct_limit: usize,
    direct: Direct,
    sparse: SparseLu,
}

impl Default for Auto {
    fn default() -> Self {
        Self {
            direct_limit: 200,
            direct: Direct::default(),
            sparse: SparseLu,
        }
    }
}

impl StationarySolver for Auto {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn solve(&self, matrix: &TransitionMatrix) -> Result<Vec<f64>> {
        if matrix.len() <= self.direct_limit {
            self.direct.solve(matrix)
        } else {
            self.sparse.solve(matrix)
        }
    }
}

/// Name-indexed set of solvers.
#[derive(Clone)]
pub struct SolverRegistry {
    solvers: BTreeMap<&'static str, Arc<dyn StationarySolver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut registry = Self {
            solvers: BTreeMap::new(),
        };
        registry.register(Arc::new(Auto::default()));
        registry.register(Arc::new(Direct::default()));
        registry.register(Arc::new(PowerIteration::default()));
        registry.register(Arc::new(GaussSeidel::default()));
        registry.register(Arc::new(BirthDeath));
        registry.register(Arc::new(SparseLu));
        registry
    }
}

impl SolverRegistry {
    pub fn register(&mut self, solver: Arc<dyn StationarySolver>) {
        self.solvers.insert(solver.name(), solver);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn StationarySolver>> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.solvers.keys().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// `max |pi A - pi|` over the full chain.
    pub residual: f64,
    pub solver: &'static str,
}

impl StationaryDistribution {
    /// `sum_s pi(s) * p(s)`: long-run expected usage frequency of every form.
    pub fn expected_frequencies(&self, chain: &ChainModel) -> Vec<f64> {
        let mut out = vec![0.0; chain.forms()];
        let total: f64 = chain.state(0).iter().map(|&u| u as f64).sum();
        for (i, &p) in self.pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &u) in out.iter_mut().zip(chain.state(i)) {
                *o += p * (u as f64 / total);
            }
        }
        out
    }
}

/// Stationary distribution of `chain` with the `auto` solver.
pub fn stationary(chain: &ChainModel) -> Result<StationaryDistribution> {
    stationary_with(chain, &Auto::default())
}

pub fn stationary_with(
    chain: &ChainModel,
    solver: &dyn StationarySolver,
) -> Result<StationaryDistribution> {
    let pi = solve_on_closed_class(chain.matrix(), solver)?;
    let residual = chain.matrix().residual(&pi);
    Ok(StationaryDistribution {
        pi,
        residual,
        solver: solver.name(),
    })
}

/// Long-run expected frequency of every form, `sum_s pi(s) * p(s)`.
pub fn expected_frequencies(chain: &ChainModel) -> Result<Vec<f64>> {
    Ok(stationary(chain)?.expected_frequencies(chain))
}

/// Solves on the unique closed communicating class and pads transient states
/// with zero mass. More than one closed class has no unique answer.
pub fn solve_on_closed_class(
    matrix: &TransitionMatrix,
    solver: &dyn StationarySolver,
) -> Result<Vec<f64>> {
    let n = matrix.len();
    if n == 0 {
        return Err(invalid("empty chain"));
    }
    let class = closed_class(matrix)?;
    if class.len() == n {
        return solver.solve(matrix);
    }
    let sub = matrix.restrict(&class);
    let sub_pi = if class.len() == 1 {
        vec![1.0]
    } else {
        solver.solve(&sub)?
    };
    let mut pi = vec![0.0; n];
    for (&i, p) in class.iter().zip(sub_pi) {
        pi[i] = p;
    }
    Ok(pi)
}

/// States of the single closed class, ascending.
pub fn closed_class(matrix: &TransitionMatrix) -> Result<Vec<usize>> {
    let n = matrix.len();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, matrix.nnz());
    for _ in 0..n {
        graph.add_node(());
    }
    for i in 0..n {
        for (j, _) in matrix.row(i) {
            if i != j {
                graph.add_edge(NodeIndex::new(i), NodeIndex::new(j), ());
            }
        }
    }
    // Kosaraju walks with an explicit stack; Tarjan recurses once per state.
    let components = kosaraju_scc(&graph);
    if components.len() == 1 {
        return Ok((0..n).collect());
    }
    let mut component_of = vec![0usize; n];
    for (c, members) in components.iter().enumerate() {
        for v in members {
            component_of[v.index()] = c;
        }
    }
    let mut closed: Vec<Vec<usize>> = components
        .iter()
        .enumerate()
        .filter(|(c, members)| {
            members.iter().all(|v| {
                matrix
                    .row(v.index())
                    .all(|(j, _)| component_of[j] == *c)
            })
        })
        .map(|(_, members)| members.iter().map(|v| v.index()).collect())
        .collect();
    if closed.len() != 1 {
        return Err(Error::Reducible {
            classes: closed.len(),
        });
    }
    let mut class = closed.pop().unwrap();
    class.sort_unstable();
    Ok(class)
}

/// Normalizes a solution vector, absorbing round-off negatives.
pub(crate) fn normalize(solver: &'static str, mut pi: Vec<f64>) -> Result<Vec<f64>> {
    let scale = pi.iter().map(|p| p.abs()).fold(0.0, f64::max);
    for p in pi.iter_mut() {
        if *p < 0.0 {
            if *p < -1e-9 * scale.max(1.0) {
                return Err(Error::SolverNotApplicable {
                    solver,
                    reason: format!("solution has negative entry {p}"),
                });
            }
            *p = 0.0;
        }
    }
    let sum: f64 = pi.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::SolverNotApplicable {
            solver,
            reason: format!("solution sums to {sum}"),
        });
    }
    pi.iter_mut().for_each(|p| *p /= sum);
    Ok(pi)
}
