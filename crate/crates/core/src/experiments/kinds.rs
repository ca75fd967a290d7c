use std::sync::Arc;

use rayon::prelude::*;

use super::{Experiment, ExperimentSpec, Row};
use crate::analytic;
use crate::chain::{ChainModel, DEFAULT_STATE_CAP};
use crate::error::{Error, Result};
use crate::learner::SourceDistribution;
use crate::sim::{self, ConvergenceOptions, SimConfig};
use crate::stationary;

/// Convergence sweeps stop a trial after this many steps.
const CONVERGENCE_ITERATIONS: u64 = 50_000;

/// Trials for the fig1a overlay; 200 leaves the mean too noisy for a ±0.01 match near ν = 0.5.
const FIG1A_TRIALS: u64 = 10_000;

/// `(k/20, (20-k)/20)` for `k` in `ks`.
fn binary_sources(ks: impl IntoIterator<Item = u32>) -> Vec<Vec<f64>> {
    ks.into_iter()
        .map(|k| vec![k as f64 / 20.0, (20 - k) as f64 / 20.0])
        .collect()
}

/// `(k/10, (10-k)/20, (10-k)/20)` for `k` in `ks`.
fn equal_split_sources(ks: impl IntoIterator<Item = u32>) -> Vec<Vec<f64>> {
    ks.into_iter()
        .map(|k| {
            let rest = (10 - k) as f64 / 20.0;
            vec![k as f64 / 10.0, rest, rest]
        })
        .collect()
}

/// s ∈ {0.001, 0.005, 0.01, 0.05}.
const FOUR_CAPACITIES: [u32; 4] = [1000, 200, 100, 20];

const FIG2_SOURCE: [f64; 3] = [0.4, 0.25, 0.35];

/// Exact long-run frequencies, when the chain fits under the default cap.
fn exact_frequencies(capacity: u32, source: &SourceDistribution) -> Result<Option<Vec<f64>>> {
    if source.forms() == 2 {
        let p = analytic::expected_frequency(capacity, source.probability(0));
        return Ok(Some(vec![p, 1.0 - p]));
    }
    match ChainModel::build_with_cap(source.forms(), capacity, source, DEFAULT_STATE_CAP) {
        Ok(chain) => stationary::expected_frequencies(&chain).map(Some),
        Err(Error::StateSpaceCap { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn config(spec: &ExperimentSpec, capacity: u32, source: &SourceDistribution) -> SimConfig {
    SimConfig::new(capacity, source.clone())
        .with_iterations(spec.iterations)
        .with_trials(spec.trials)
        .with_seed(spec.seed)
}

fn row(spec: &ExperimentSpec, capacity: u32, nu: &[f64], form: usize) -> Row {
    Row {
        figure: spec.figure.clone(),
        capacity,
        nu: nu.to_vec(),
        iterations: spec.iterations,
        trials: spec.trials,
        seed: spec.seed,
        form: form + 1,
        p_analytic: None,
        p_montecarlo: None,
        conv_mean: None,
        conv_stderr: None,
        n_nonconverged: None,
    }
}

/// All (capacity, source) pairs, capacity-major.
fn points<'a>(
    spec: &'a ExperimentSpec,
    sources: &'a [SourceDistribution],
) -> impl Iterator<Item = (u32, &'a [f64], &'a SourceDistribution)> + 'a {
    spec.capacities.iter().flat_map(move |&l| {
        spec.sources
            .iter()
            .zip(sources)
            .map(move |(nu, src)| (l, nu.as_slice(), src))
    })
}

/// One row per (capacity, source, reported form): final ensemble mean and exact value.
pub fn boost_curve(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    let sources = spec.validate()?;
    let mut rows = Vec::new();
    for (capacity, nu, source) in points(spec, &sources) {
        let stats = sim::ensemble_final_states(&config(spec, capacity, source))?;
        let mc = stats.final_mean();
        let exact = exact_frequencies(capacity, source)?;
        for &i in &spec.report_forms {
            rows.push(Row {
                p_analytic: exact.as_ref().map(|p| p[i]),
                p_montecarlo: Some(mc[i]),
                ..row(spec, capacity, nu, i)
            });
        }
    }
    Ok(rows)
}

/// One row per kept step of trial 0, per (capacity, source, reported form).
pub fn typical_runs(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    let sources = spec.validate()?;
    let work: Vec<_> = points(spec, &sources).collect();
    let blocks = work
        .par_iter()
        .map(|&(capacity, nu, source)| -> Result<Vec<Row>> {
            let trajectory = sim::run_trajectory(&config(spec, capacity, source).with_trials(1), 0)?;
            let exact = exact_frequencies(capacity, source)?;
            let last = trajectory.len() as u64 - 1;
            let mut steps: Vec<u64> = (0..=last).step_by(spec.stride as usize).collect();
            if steps.last() != Some(&last) {
                steps.push(last);
            }
            let mut rows = Vec::with_capacity(steps.len() * spec.report_forms.len());
            for t in steps {
                for &i in &spec.report_forms {
                    rows.push(Row {
                        iterations: t,
                        trials: 1,
                        p_analytic: exact.as_ref().map(|p| p[i]),
                        p_montecarlo: Some(trajectory.frequency(t as usize, i)),
                        ..row(spec, capacity, nu, i)
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

/// One row per (capacity, source): convergence-time summary for form 1.
pub fn convergence_sweep(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    let sources = spec.validate()?;
    let options = ConvergenceOptions {
        window: spec.window,
        tolerance: spec.tolerance,
        ..ConvergenceOptions::default()
    };
    let mut rows = Vec::new();
    for (capacity, nu, source) in points(spec, &sources) {
        let result = sim::convergence_time(&config(spec, capacity, source), &options)?;
        rows.push(Row {
            p_analytic: Some(result.target.value),
            conv_mean: result.mean,
            conv_stderr: result.stderr,
            n_nonconverged: Some(result.n_nonconverged),
            ..row(spec, capacity, nu, 0)
        });
    }
    Ok(rows)
}

/// Ensemble mean frequency after `iterations` steps against the exact value.
pub struct BoostCurve {
    id: &'static str,
    description: &'static str,
    defaults: fn() -> ExperimentSpec,
}

impl Experiment for BoostCurve {
    fn id(&self) -> &'static str {
        self.id
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn default_spec(&self) -> ExperimentSpec {
        (self.defaults)()
    }

    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<Row>> {
        boost_curve(spec)
    }
}

/// Single-trial trajectories, subsampled every `stride` steps.
pub struct TypicalRuns {
    id: &'static str,
    description: &'static str,
    defaults: fn() -> ExperimentSpec,
}

impl Experiment for TypicalRuns {
    fn id(&self) -> &'static str {
        self.id
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn default_spec(&self) -> ExperimentSpec {
        (self.defaults)()
    }

    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<Row>> {
        typical_runs(spec)
    }
}

/// Mean first-crossing time of the windowed form-1 frequency.
pub struct ConvergenceSweep {
    id: &'static str,
    description: &'static str,
    defaults: fn() -> ExperimentSpec,
}

impl Experiment for ConvergenceSweep {
    fn id(&self) -> &'static str {
        self.id
    }

    fn description(&self) -> &'static str {
        self.description
    }

    fn default_spec(&self) -> ExperimentSpec {
        (self.defaults)()
    }

    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<Row>> {
        convergence_sweep(spec)
    }
}

pub(super) fn figures() -> Vec<Arc<dyn Experiment>> {
    vec![
        Arc::new(BoostCurve {
            id: "fig1a",
            description: "two forms, s = 0.05: mean learner frequency vs nu against the closed form",
            defaults: || ExperimentSpec {
                trials: FIG1A_TRIALS,
                ..ExperimentSpec::new("fig1a", binary_sources(10..=20), vec![20])
            },
        }),
        Arc::new(BoostCurve {
            id: "fig1b",
            description: "two forms: mean learner frequency vs nu for four increments",
            defaults: || {
                ExperimentSpec::new("fig1b", binary_sources(10..=20), FOUR_CAPACITIES.to_vec())
            },
        }),
        Arc::new(TypicalRuns {
            id: "fig2a",
            description: "three forms, nu = (0.4, 0.25, 0.35), s = 0.01: one run, all forms",
            defaults: || ExperimentSpec {
                report_forms: vec![0, 1, 2],
                ..ExperimentSpec::new("fig2a", vec![FIG2_SOURCE.to_vec()], vec![100])
            },
        }),
        Arc::new(BoostCurve {
            id: "fig2b",
            description: "three forms, equal-split alternatives: mean form-1 frequency vs nu1 for three increments",
            defaults: || ExperimentSpec::new("fig2b", equal_split_sources(1..=10), vec![100, 20, 10]),
        }),
        Arc::new(TypicalRuns {
            id: "fig3a",
            description: "two forms, nu = 0.7: one run per increment",
            defaults: || ExperimentSpec::new("fig3a", binary_sources([14]), FOUR_CAPACITIES.to_vec()),
        }),
        Arc::new(ConvergenceSweep {
            id: "fig3b",
            description: "two forms, nu = 0.7: convergence time vs increment",
            defaults: || ExperimentSpec {
                iterations: CONVERGENCE_ITERATIONS,
                ..ExperimentSpec::new("fig3b", binary_sources([14]), FOUR_CAPACITIES.to_vec())
            },
        }),
        Arc::new(TypicalRuns {
            id: "fig4a",
            description: "three forms, nu = (0.4, 0.25, 0.35): one run per increment, form 1",
            defaults: || ExperimentSpec::new("fig4a", vec![FIG2_SOURCE.to_vec()], FOUR_CAPACITIES.to_vec()),
        }),
        Arc::new(ConvergenceSweep {
            id: "fig4b",
            description: "two forms, s = 0.001: convergence time vs nu",
            defaults: || ExperimentSpec {
                iterations: CONVERGENCE_ITERATIONS,
                ..ExperimentSpec::new("fig4b", binary_sources(12..=19), vec![1000])
            },
        }),
    ]
}
