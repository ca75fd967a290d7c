//! Monte Carlo teacher-learner runs.
//!
//! A trial is one learner exposed to `iterations` emissions of a frozen
//! source. Trial `k` draws from `RngStream::for_trial(master_seed, k)`, and
//! ensemble aggregates are integer sums of quanta, so every result is
//! bit-identical whatever the rayon thread count.

use std::ops::ControlFlow;

use rayon::prelude::*;

use crate::analytic;
use crate::chain::{ChainModel, DEFAULT_STATE_CAP};
use crate::error::{invalid, Error, Result};
use crate::learner::{apply_update, Init, LearnerState, SourceDistribution};
use crate::rng::RngStream;
use crate::stationary;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TRIALS: u64 = 200;
pub const DEFAULT_WINDOW: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 0.001;

/// Long-run single-run estimate used when no exact target is available.
pub const LONG_RUN_STEPS: u64 = 1_000_000;
pub const LONG_RUN_BURN_IN: u64 = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub forms: usize,
    pub capacity: u32,
    pub source: SourceDistribution,
    pub iterations: u64,
    pub trials: u64,
    pub master_seed: u64,
    pub init: Init,
}

impl SimConfig {
    /// Defaults: uniform (or balanced) start, 30,000 iterations, 200 trials, seed 42.
    pub fn new(capacity: u32, source: SourceDistribution) -> Self {
        let forms = source.forms();
        Self {
            forms,
            capacity,
            source,
            iterations: 30_000,
            trials: DEFAULT_TRIALS,
            master_seed: DEFAULT_SEED,
            init: Init::nearest_uniform(forms, capacity),
        }
    }

    pub fn with_iterations(mut self, iterations: u64) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    /// The learning increment `s = 1/L`.
    pub fn increment(&self) -> f64 {
        1.0 / self.capacity as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(invalid("iterations must be at least 1"));
        }
        if self.trials < 1 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.source.forms() != self.forms {
            return Err(invalid(format!(
                "source has {} forms, config has M = {}",
                self.source.forms(),
                self.forms
            )));
        }
        self.initial_state().map(|_| ())
    }

    pub fn initial_state(&self) -> Result<LearnerState> {
        LearnerState::new(self.forms, self.capacity, &self.init)
    }
}

/// Drives one trial, handing the quanta after each step (step 0 is the start)
/// to `visit` until it breaks or the iterations run out.
fn drive<B>(
    config: &SimConfig,
    trial: u64,
    iterations: u64,
    mut visit: impl FnMut(u64, &[u32]) -> ControlFlow<B>,
) -> Result<Option<B>> {
    let start = config.initial_state()?;
    let mut units = start.units().to_vec();
    let mut rng = RngStream::for_trial(config.master_seed, trial);
    if let ControlFlow::Break(b) = visit(0, &units) {
        return Ok(Some(b));
    }
    for t in 1..=iterations {
        let j = config.source.emit(&mut rng);
        apply_update(&mut units, j);
        if let ControlFlow::Break(b) = visit(t, &units) {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

/// Learner quanta after every step of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub trial: u64,
    pub master_seed: u64,
    forms: usize,
    total: u64,
    units: Vec<u32>,
}

impl Trajectory {
    pub fn forms(&self) -> usize {
        self.forms
    }

    /// Number of recorded states, `iterations + 1`.
    pub fn len(&self) -> usize {
        self.units.len() / self.forms
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self, t: usize) -> &[u32] {
        &self.units[t * self.forms..(t + 1) * self.forms]
    }

    pub fn frequency(&self, t: usize, i: usize) -> f64 {
        self.units(t)[i] as f64 / self.total as f64
    }

    pub fn frequencies(&self, t: usize) -> Vec<f64> {
        (0..self.forms).map(|i| self.frequency(t, i)).collect()
    }

    /// Frequency of form `i` at every step.
    pub fn series(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|t| self.frequency(t, i)).collect()
    }
}

pub fn run_trajectory(config: &SimConfig, trial: u64) -> Result<Trajectory> {
    config.validate()?;
    let forms = config.forms;
    let mut units = Vec::with_capacity((config.iterations as usize + 1) * forms);
    drive::<()>(config, trial, config.iterations, |_, u| {
        units.extend_from_slice(u);
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory {
        trial,
        master_seed: config.master_seed,
        forms,
        total: crate::learner::total_quanta(forms, config.capacity),
        units,
    })
}

/// Ensemble aggregates over all trials of a config.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub trials: u64,
    pub iterations: u64,
    forms: usize,
    total: u64,
    /// Per-step sums over trials, when the curve was recorded.
    curve_sums: Option<Vec<u64>>,
    final_units: Vec<u32>,
}

impl EnsembleStats {
    fn mean_of(&self, sums: impl Iterator<Item = u64>) -> Vec<f64> {
        let denom = (self.trials * self.total) as f64;
        sums.map(|s| s as f64 / denom).collect()
    }

    /// Mean over trials of each form's frequency after the last iteration.
    pub fn final_mean(&self) -> Vec<f64> {
        self.mean_of((0..self.forms).map(|i| {
            self.final_units
                .iter()
                .skip(i)
                .step_by(self.forms)
                .map(|&u| u as u64)
                .sum()
        }))
    }

    /// Mean over trials of each form's frequency after `t` iterations, if the
    /// curve was recorded and `t` is in range.
    pub fn mean_at(&self, t: usize) -> Option<Vec<f64>> {
        let sums = self.curve_sums.as_ref()?;
        let row = sums.get(t * self.forms..(t + 1) * self.forms)?;
        Some(self.mean_of(row.iter().copied()))
    }

    /// Per-step mean frequency of form `i`, if the curve was recorded.
    pub fn mean_curve(&self, i: usize) -> Option<Vec<f64>> {
        let sums = self.curve_sums.as_ref()?;
        Some(self.mean_of(sums.iter().skip(i).step_by(self.forms).copied()))
    }

    /// Final quanta of trial `k`.
    pub fn final_state(&self, k: usize) -> &[u32] {
        &self.final_units[k * self.forms..(k + 1) * self.forms]
    }
}

struct Accumulator {
    curve: Vec<u64>,
    finals: Vec<(u64, Vec<u32>)>,
}

/// Runs every trial, recording the per-step mean curve and final states.
pub fn ensemble_mean_frequency(config: &SimConfig) -> Result<EnsembleStats> {
    ensemble(config, true)
}

/// Like [`ensemble_mean_frequency`] but keeps only the final states, which
/// is cheaper when the curve is not needed.
pub fn ensemble_final_states(config: &SimConfig) -> Result<EnsembleStats> {
    ensemble(config, false)
}

fn ensemble(config: &SimConfig, with_curve: bool) -> Result<EnsembleStats> {
    config.validate()?;
    let forms = config.forms;
    let len = if with_curve {
        (config.iterations as usize + 1) * forms
    } else {
        0
    };
    let empty = || Accumulator {
        curve: vec![0; len],
        finals: Vec::new(),
    };
    let acc = (0..config.trials)
        .into_par_iter()
        .try_fold(empty, |mut acc, k| -> Result<Accumulator> {
            let mut last = Vec::new();
            drive::<()>(config, k, config.iterations, |t, u| {
                if with_curve {
                    let row = &mut acc.curve[t as usize * forms..(t as usize + 1) * forms];
                    for (s, &x) in row.iter_mut().zip(u) {
                        *s += x as u64;
                    }
                }
                if t == config.iterations {
                    last = u.to_vec();
                }
                ControlFlow::Continue(())
            })?;
            acc.finals.push((k, last));
            Ok(acc)
        })
        .try_reduce(empty, |mut a, b| {
            for (x, y) in a.curve.iter_mut().zip(b.curve) {
                *x += y;
            }
            a.finals.extend(b.finals);
            Ok(a)
        })?;
    let mut finals = acc.finals;
    finals.sort_unstable_by_key(|(k, _)| *k);
    Ok(EnsembleStats {
        trials: config.trials,
        iterations: config.iterations,
        forms,
        total: crate::learner::total_quanta(forms, config.capacity),
        curve_sums: with_curve.then_some(acc.curve),
        final_units: finals.into_iter().flat_map(|(_, u)| u).collect(),
    })
}

/// Time-average of every form's frequency over one long run, after discarding
/// `burn_in` steps. Uses the trial stream `trial`.
pub fn long_run_average(config: &SimConfig, trial: u64, steps: u64, burn_in: u64) -> Result<Vec<f64>> {
    config.validate()?;
    if steps <= burn_in {
        return Err(invalid("long run must be longer than its burn-in"));
    }
    let mut sums = vec![0u64; config.forms];
    drive::<()>(config, trial, steps, |t, u| {
        if t > burn_in {
            for (s, &x) in sums.iter_mut().zip(u) {
                *s += x as u64;
            }
        }
        ControlFlow::Continue(())
    })?;
    let denom = ((steps - burn_in) * crate::learner::total_quanta(config.forms, config.capacity)) as f64;
    Ok(sums.into_iter().map(|s| s as f64 / denom).collect())
}

/// Trailing mean over full windows only: `out[k]` is the mean of
/// `series[k ..= k + w - 1]`, i.e. the average ending at index `k + w - 1`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(invalid("window must be at least 1"));
    }
    if series.len() < window {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            window,
        });
    }
    let w = window as f64;
    let mut out = Vec::with_capacity(series.len() - window + 1);
    let mut sum: f64 = series[..window].iter().sum();
    out.push(sum / w);
    for end in window..series.len() {
        if (end - window + 1).is_multiple_of(window) {
            // Re-sum periodically so rounding in the running sum cannot drift.
            sum = series[end + 1 - window..=end].iter().sum();
        } else {
            sum += series[end] - series[end - window];
        }
        out.push(sum / w);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceOptions {
    pub window: usize,
    pub tolerance: f64,
    /// Overrides the computed target when set.
    pub target: Option<f64>,
    /// For `M >= 3` chains over `state_cap`, estimate the target from a long run.
    pub monte_carlo_fallback: bool,
    pub state_cap: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            tolerance: DEFAULT_TOLERANCE,
            target: None,
            monte_carlo_fallback: true,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceTarget {
    pub value: f64,
    /// True when the value is a Monte Carlo estimate rather than exact.
    pub estimated: bool,
}

/// Long-run expected frequency of form 1: closed form for two forms, the
/// stationary solve for larger chains, else a flagged long-run estimate.
pub fn convergence_target(config: &SimConfig, options: &ConvergenceOptions) -> Result<ConvergenceTarget> {
    if let Some(value) = options.target {
        return Ok(ConvergenceTarget {
            value,
            estimated: false,
        });
    }
    if config.forms == 2 {
        return Ok(ConvergenceTarget {
            value: analytic::expected_frequency(config.capacity, config.source.probability(0)),
            estimated: false,
        });
    }
    match ChainModel::build_with_cap(config.forms, config.capacity, &config.source, options.state_cap) {
        Ok(chain) => Ok(ConvergenceTarget {
            value: stationary::expected_frequencies(&chain)?[0],
            estimated: false,
        }),
        Err(Error::StateSpaceCap { .. }) if options.monte_carlo_fallback => {
            let avg = long_run_average(config, u64::MAX, LONG_RUN_STEPS, LONG_RUN_BURN_IN)?;
            Ok(ConvergenceTarget {
                value: avg[0],
                estimated: true,
            })
        }
        Err(Error::StateSpaceCap { states, cap }) => Err(Error::TargetUnavailable(format!(
            "{states} states exceed cap {cap} and Monte Carlo fallback is off"
        ))),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceResult {
    /// First converged step per trial; `None` if it never converged.
    pub per_trial: Vec<Option<u64>>,
    /// Mean over converged trials.
    pub mean: Option<f64>,
    /// Standard error of that mean (needs two converged trials).
    pub stderr: Option<f64>,
    pub n_nonconverged: u64,
    pub target: ConvergenceTarget,
    pub window: usize,
    pub tolerance: f64,
}

/// First step `n >= w - 1` at which the trailing `w`-step average of form 1's
/// frequency is within `tolerance` of the target, for every trial.
pub fn convergence_time(config: &SimConfig, options: &ConvergenceOptions) -> Result<ConvergenceResult> {
    config.validate()?;
    if options.window < 1 {
        return Err(invalid("window must be at least 1"));
    }
    if !(options.tolerance >= 0.0) {
        return Err(invalid(format!("tolerance {} must be nonnegative", options.tolerance)));
    }
    let target = convergence_target(config, options)?;
    let per_trial = (0..config.trials)
        .into_par_iter()
        .map(|k| first_crossing(config, k, options.window, options.tolerance, target.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_trial, target, options))
}

fn first_crossing(config: &SimConfig, trial: u64, window: usize, tolerance: f64, target: f64) -> Result<Option<u64>> {
    let denom = (window as u64 * crate::learner::total_quanta(config.forms, config.capacity)) as f64;
    let mut ring = vec![0u32; window];
    let mut sum: u64 = 0;
    let mut slot = 0;
    drive(config, trial, config.iterations, |t, u| {
        sum = sum - ring[slot] as u64 + u[0] as u64;
        ring[slot] = u[0];
        slot = if slot + 1 == window { 0 } else { slot + 1 };
        if t + 1 >= window as u64 && (sum as f64 / denom - target).abs() <= tolerance {
            ControlFlow::Break(t)
        } else {
            ControlFlow::Continue(())
        }
    })
}

fn summarize(per_trial: Vec<Option<u64>>, target: ConvergenceTarget, options: &ConvergenceOptions) -> ConvergenceResult {
    let times: Vec<f64> = per_trial.iter().flatten().map(|&t| t as f64).collect();
    let n = times.len();
    let mean = (n > 0).then(|| times.iter().sum::<f64>() / n as f64);
    let stderr = mean.filter(|_| n > 1).map(|m| {
        let var = times.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    ConvergenceResult {
        n_nonconverged: (per_trial.len() - n) as u64,
        per_trial,
        mean,
        stderr,
        target,
        window: options.window,
        tolerance: options.tolerance,
    }
}
