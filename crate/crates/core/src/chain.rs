//! The Markov chain a learner follows under a frozen source.
//!
//! States are all compositions of `L*(M-1)` quanta into `M` parts, listed in
//! lexicographic order of `(units[0], units[1], ...)`. For two forms that puts
//! state `i` at `units[0] = i`, i.e. learner frequency `i/L`.

use crate::error::{invalid, Error, Result};
use crate::learner::{apply_update, total_quanta, validate_shape, SourceDistribution};

pub const DEFAULT_STATE_CAP: usize = 200_000;

/// Sparse row-stochastic matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from per-row `(column, probability)` lists. Duplicate columns are
    /// merged and zero entries dropped.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(c, _)| c);
            let start = cols.len();
            for (c, p) in row {
                if c >= n {
                    return Err(invalid(format!("row {i} points at column {c} of {n}")));
                }
                if !p.is_finite() || p < 0.0 {
                    return Err(invalid(format!("row {i} has bad probability {p}")));
                }
                if p == 0.0 {
                    continue;
                }
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += p;
                } else {
                    cols.push(c);
                    vals.push(p);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn len(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, p)| p)
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, p)| p).sum()
    }

    /// `out = x A`.
    pub fn left_multiply(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, p) in self.row(i) {
                out[j] += xi * p;
            }
        }
    }

    /// `max_j |(x A)_j - x_j|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.len()];
        self.left_multiply(x, &mut y);
        y.iter()
            .zip(x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for i in 0..n {
            for (j, p) in self.row(i) {
                rows[j].push((i, p));
            }
        }
        Self::from_rows(rows).expect("transpose of a valid matrix")
    }

    /// Restriction to `keep` (indices into this matrix, in the new order).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut position = vec![usize::MAX; self.len()];
        for (new, &old) in keep.iter().enumerate() {
            position[old] = new;
        }
        let rows = keep
            .iter()
            .map(|&old| {
                self.row(old)
                    .filter(|&(j, _)| position[j] != usize::MAX)
                    .map(|(j, p)| (position[j], p))
                    .collect()
            })
            .collect();
        Self::from_rows(rows).expect("restriction of a valid matrix")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                for (j, p) in self.row(i) {
                    r[j] = p;
                }
                r
            })
            .collect()
    }
}

/// Number of compositions of `total` into `parts` nonnegative parts.
pub fn composition_count(total: u64, parts: usize) -> u128 {
    if parts == 0 {
        return u128::from(total == 0);
    }
    binomial(total as u128 + parts as u128 - 1, parts as u128 - 1)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of lattice states for `M` forms at capacity `L`.
pub fn state_count(forms: usize, capacity: u32) -> u128 {
    composition_count(total_quanta(forms, capacity), forms)
}

#[derive(Clone, Debug)]
pub struct ChainModel {
    forms: usize,
    capacity: u32,
    source: SourceDistribution,
    states: Vec<u32>,
    matrix: TransitionMatrix,
}

impl ChainModel {
    pub fn build(forms: usize, capacity: u32, source: &SourceDistribution) -> Result<Self> {
        Self::build_with_cap(forms, capacity, source, DEFAULT_STATE_CAP)
    }

    pub fn build_with_cap(
        forms: usize,
        capacity: u32,
        source: &SourceDistribution,
        cap: usize,
    ) -> Result<Self> {
        validate_shape(forms, capacity)?;
        if source.forms() != forms {
            return Err(invalid(format!(
                "source has {} forms, chain has M = {forms}",
                source.forms()
            )));
        }
        let count = state_count(forms, capacity);
        if count > cap as u128 {
            return Err(Error::StateSpaceCap { states: count, cap });
        }
        let total = total_quanta(forms, capacity);
        let states = enumerate_compositions(total as u32, forms, count as usize);

        let nu = source.probabilities();
        let mut next = vec![0u32; forms];
        let rows = states
            .chunks_exact(forms)
            .map(|from| {
                let mut row = Vec::with_capacity(forms);
                for (j, &p) in nu.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    next.copy_from_slice(from);
                    apply_update(&mut next, j);
                    row.push((rank(&next, total), p));
                }
                row
            })
            .collect();
        let matrix = TransitionMatrix::from_rows(rows)?;
        Ok(Self {
            forms,
            capacity,
            source: source.clone(),
            states,
            matrix,
        })
    }

    pub fn forms(&self) -> usize {
        self.forms
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn source(&self) -> &SourceDistribution {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    /// Quanta per form in state `i`.
    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i * self.forms..(i + 1) * self.forms]
    }

    /// Usage frequencies of every form in state `i`.
    pub fn frequencies(&self, i: usize) -> Vec<f64> {
        let total = total_quanta(self.forms, self.capacity) as f64;
        self.state(i).iter().map(|&u| u as f64 / total).collect()
    }

    /// Index of the state with the given quanta, if it is on the lattice.
    pub fn index_of(&self, units: &[u32]) -> Option<usize> {
        let total = total_quanta(self.forms, self.capacity);
        if units.len() != self.forms || units.iter().map(|&u| u as u64).sum::<u64>() != total {
            return None;
        }
        Some(rank(units, total))
    }
}

fn enumerate_compositions(total: u32, forms: usize, count: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity(count * forms);
    let mut current = vec![0u32; forms];
    fill(&mut current, 0, total, &mut out);
    debug_assert_eq!(out.len(), count * forms);
    out
}

fn fill(current: &mut [u32], k: usize, remaining: u32, out: &mut Vec<u32>) {
    let forms = current.len();
    if k == forms - 1 {
        current[k] = remaining;
        out.extend_from_slice(current);
        return;
    }
    for v in 0..=remaining {
        current[k] = v;
        fill(current, k + 1, remaining - v, out);
    }
}

/// Lexicographic rank of a composition, matching `enumerate_compositions`.
fn rank(units: &[u32], total: u64) -> usize {
    let forms = units.len();
    let mut remaining = total;
    let mut r: u128 = 0;
    for (k, &u) in units[..forms - 1].iter().enumerate() {
        let parts_after = forms - k - 1;
        // Compositions whose k-th part is below u, with the prefix fixed.
        r += composition_count(remaining, parts_after + 1)
            - composition_count(remaining - u as u64, parts_after + 1);
        remaining -= u as u64;
    }
    r as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_form_matrix_small() {
        let chain = ChainModel::build(2, 2, &SourceDistribution::binary(0.7).unwrap()).unwrap();
        let want = [[0.3, 0.7, 0.0], [0.3, 0.0, 0.7], [0.0, 0.3, 0.7]];
        let got = chain.matrix().to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - want[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn two_form_matrix_is_the_tridiagonal_display() {
        for capacity in [2u32, 5, 17] {
            for nu in [0.1, 0.5, 0.83] {
                let chain =
                    ChainModel::build(2, capacity, &SourceDistribution::binary(nu).unwrap())
                        .unwrap();
                let mu = 1.0 - nu;
                let n = capacity as usize + 1;
                let a = chain.matrix().to_dense();
                for i in 0..n {
                    assert_eq!(chain.state(i)[0] as usize, i);
                    for j in 0..n {
                        let want = if i == 0 && j == 0 {
                            mu
                        } else if i == n - 1 && j == n - 1 {
                            nu
                        } else if j == i + 1 {
                            nu
                        } else if j + 1 == i {
                            mu
                        } else {
                            0.0
                        };
                        assert!((a[i][j] - want).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn consistent_source_is_upper_bidiagonal() {
        let chain = ChainModel::build(2, 6, &SourceDistribution::binary(1.0).unwrap()).unwrap();
        let a = chain.matrix().to_dense();
        for (i, row) in a.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if j != i && j != i + 1 {
                    assert_eq!(p, 0.0);
                }
            }
        }
        assert_eq!(a[6][6], 1.0);
    }

    #[test]
    fn three_form_state_count_and_rows() {
        let source = SourceDistribution::new(vec![1.0 / 3.0; 3]).unwrap();
        let chain = ChainModel::build(3, 2, &source).unwrap();
        assert_eq!(chain.len(), 15);
        for i in 0..chain.len() {
            assert!((chain.matrix().row_sum(i) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_matches_enumeration() {
        for forms in 2..=5 {
            for capacity in 2..=5u32 {
                let source = SourceDistribution::new(vec![1.0 / forms as f64; forms]).unwrap();
                let chain = ChainModel::build(forms, capacity, &source).unwrap();
                assert_eq!(chain.len() as u128, state_count(forms, capacity));
                for i in 0..chain.len() {
                    assert_eq!(chain.index_of(chain.state(i)), Some(i));
                }
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let source = SourceDistribution::equal_split(3, 0.5).unwrap();
        let err = ChainModel::build_with_cap(3, 100, &source, 1000).unwrap_err();
        assert!(matches!(err, Error::StateSpaceCap { states: 20301, cap: 1000 }));
    }

    #[test]
    fn restrict_and_transpose() {
        let m = TransitionMatrix::from_rows(vec![
            vec![(0, 0.5), (1, 0.25), (1, 0.25)],
            vec![(2, 1.0)],
            vec![(0, 1.0)],
        ])
        .unwrap();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.nnz(), 4);
        let t = m.transpose();
        assert_eq!(t.get(1, 0), 0.5);
        assert_eq!(t.get(0, 2), 1.0);
        let r = m.restrict(&[2, 0]);
        assert_eq!(r.to_dense(), vec![vec![0.0, 1.0], vec![0.0, 0.5]]);
    }
}
