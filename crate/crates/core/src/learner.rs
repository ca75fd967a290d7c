//! Learner state, the frozen source, and the M-form update rule.
//!
//! The learner holds `L` units of probability mass split across `M` forms.
//! Mass is stored as integer quanta of `1/(M-1)` units (one quantum is one
//! unit when `M = 2`), so every update is exact: the increment removed from a
//! losing form is either one quantum or whatever that form has left.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Starting point of a learner.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum Init {
    /// Equal usage probability `1/M` for every form.
    #[default]
    Uniform,
    /// As even as the quanta allow; the remainder goes to the last forms.
    Balanced,
    /// Explicit quanta per form; must sum to `L*(M-1)`.
    Explicit(Vec<u32>),
}

impl Init {
    /// `Uniform` when `M` divides `L*(M-1)`, else `Balanced`.
    pub fn nearest_uniform(forms: usize, capacity: u32) -> Self {
        if forms > 0 && total_quanta(forms, capacity).is_multiple_of(forms as u64) {
            Init::Uniform
        } else {
            Init::Balanced
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LearnerState {
    capacity: u32,
    units: Vec<u32>,
}

impl LearnerState {
    pub fn new(forms: usize, capacity: u32, init: &Init) -> Result<Self> {
        validate_shape(forms, capacity)?;
        let total = total_quanta(forms, capacity);
        let units = match init {
            Init::Uniform => {
                if !total.is_multiple_of(forms as u64) {
                    return Err(Error::NotDivisible { total, forms });
                }
                vec![(total / forms as u64) as u32; forms]
            }
            Init::Balanced => {
                let base = (total / forms as u64) as u32;
                let extra = (total % forms as u64) as usize;
                (0..forms).map(|i| base + u32::from(i >= forms - extra)).collect()
            }
            Init::Explicit(units) => {
                if units.len() != forms {
                    return Err(invalid(format!(
                        "explicit start has {} entries, expected M = {forms}",
                        units.len()
                    )));
                }
                let sum: u64 = units.iter().map(|&u| u as u64).sum();
                if sum != total {
                    return Err(invalid(format!(
                        "explicit start sums to {sum} quanta, expected L*(M-1) = {total}"
                    )));
                }
                units.clone()
            }
        };
        Ok(Self { capacity, units })
    }

    /// Builds a state from raw quanta without the `Init` indirection.
    pub fn from_units(capacity: u32, units: Vec<u32>) -> Result<Self> {
        let forms = units.len();
        Self::new(forms, capacity, &Init::Explicit(units))
    }

    pub fn forms(&self) -> usize {
        self.units.len()
    }

    /// The capacity `L` (so the learning increment is `s = 1/L`).
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    /// Total quanta, `L*(M-1)`.
    pub fn total(&self) -> u64 {
        total_quanta(self.forms(), self.capacity)
    }

    /// Mass of form `i` in the paper's X-units (`units[i] / (M-1)`).
    pub fn mass(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.units[i] as f64 / (self.forms() - 1) as f64)
    }

    /// Usage probability of form `i` (0-based).
    pub fn frequency(&self, i: usize) -> Result<f64> {
        self.check_index(i)?;
        Ok(self.units[i] as f64 / self.total() as f64)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.units.iter().map(|&u| u as f64 / total).collect()
    }

    /// Applies one exposure to form `j` (0-based).
    ///
    /// Every other form gives up one quantum, or nothing if it is already
    /// empty; form `j` collects what was given up.
    pub fn update(&mut self, j: usize) -> Result<()> {
        self.check_index(j)?;
        apply_update(&mut self.units, j);
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.forms() {
            Ok(())
        } else {
            Err(Error::FormIndex {
                index: i,
                forms: self.forms(),
            })
        }
    }
}

impl fmt::Display for LearnerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, u) in self.units.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{u}")?;
        }
        write!(f, "] / {}", self.total())
    }
}

/// The update rule on a raw quanta slice. Caller guarantees `j < units.len()`.
#[inline]
pub(crate) fn apply_update(units: &mut [u32], j: usize) {
    let mut gained = 0;
    for (i, u) in units.iter_mut().enumerate() {
        let take = u32::from(i != j && *u > 0);
        *u -= take;
        gained += take;
    }
    units[j] += gained;
}

pub(crate) fn validate_shape(forms: usize, capacity: u32) -> Result<()> {
    if forms < 2 {
        return Err(invalid(format!("need at least 2 forms, got M = {forms}")));
    }
    if capacity < 2 {
        return Err(invalid(format!("capacity L must be at least 2, got {capacity}")));
    }
    if total_quanta(forms, capacity) > u32::MAX as u64 {
        return Err(invalid(format!(
            "L*(M-1) quanta overflow for M = {forms}, L = {capacity}"
        )));
    }
    Ok(())
}

pub(crate) fn total_quanta(forms: usize, capacity: u32) -> u64 {
    capacity as u64 * (forms as u64 - 1)
}

/// Emission probabilities of a source whose statistics never change.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceDistribution {
    nu: Vec<f64>,
    cumulative: Vec<f64>,
}

impl SourceDistribution {
    /// Accepts any vector of at least two probabilities summing to one within
    /// `1e-9`. The stored vector is renormalized to sum to one.
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        if nu.len() < 2 {
            return Err(invalid(format!(
                "source needs at least 2 forms, got {}",
                nu.len()
            )));
        }
        for (i, &p) in nu.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("nu{} = {p} is not in [0, 1]", i + 1)));
            }
        }
        let sum: f64 = nu.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("source probabilities sum to {sum}, not 1")));
        }
        let nu: Vec<f64> = nu.into_iter().map(|p| p / sum).collect();

        let mut cumulative = Vec::with_capacity(nu.len());
        let mut acc = 0.0;
        for &p in &nu {
            acc += p;
            cumulative.push(acc);
        }
        // The last form with positive weight absorbs rounding in the running sum.
        let last = nu.iter().rposition(|&p| p > 0.0).unwrap_or(nu.len() - 1);
        for c in cumulative.iter_mut().skip(last) {
            *c = f64::INFINITY;
        }
        Ok(Self { nu, cumulative })
    }

    /// Two-form source `(nu, 1 - nu)`.
    pub fn binary(nu: f64) -> Result<Self> {
        Self::new(vec![nu, 1.0 - nu])
    }

    /// `(nu1, (1-nu1)/(M-1), ..., (1-nu1)/(M-1))`: the first form against
    /// equally weighted alternatives.
    pub fn equal_split(forms: usize, nu1: f64) -> Result<Self> {
        if forms < 2 {
            return Err(invalid(format!("need at least 2 forms, got M = {forms}")));
        }
        let rest = (1.0 - nu1) / (forms - 1) as f64;
        let mut nu = vec![rest; forms];
        nu[0] = nu1;
        Self::new(nu)
    }

    pub fn forms(&self) -> usize {
        self.nu.len()
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.nu
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.nu[i]
    }

    /// Draws one emitted form (0-based), consuming exactly one `u64`.
    #[inline]
    pub fn emit(&self, rng: &mut RngStream) -> usize {
        let u = rng.next_f64();
        // First j with u < cumulative[j]; thresholds are nondecreasing.
        self.cumulative.iter().map(|&c| usize::from(u >= c)).sum()
    }
}
