//! Figure pipelines: each experiment turns a parameter grid into CSV rows.
//!
//! All rows share one schema:
//!
//! ```text
//! figure,M,L,s,nu1..nuM,iterations,trials,seed,form,p_analytic,p_montecarlo,conv_mean,conv_stderr,n_nonconverged
//! ```
//!
//! Fields that do not apply to a row are left empty.

mod kinds;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

pub use kinds::{boost_curve, convergence_sweep, typical_runs, BoostCurve, ConvergenceSweep, TypicalRuns};

use crate::error::{invalid, Error, Result};
use crate::learner::SourceDistribution;
use crate::sim;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub figure: String,
    /// Source vectors; all must have the same number of forms.
    pub sources: Vec<Vec<f64>>,
    pub capacities: Vec<u32>,
    pub iterations: u64,
    pub trials: u64,
    pub seed: u64,
    /// Convergence window and tolerance (convergence sweeps only).
    pub window: usize,
    pub tolerance: f64,
    /// Keep every `stride`-th step of a trajectory (typical runs only).
    pub stride: u64,
    /// Forms reported by trajectory rows, 0-based.
    pub report_forms: Vec<usize>,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(figure: &str, sources: Vec<Vec<f64>>, capacities: Vec<u32>) -> Self {
        Self {
            figure: figure.to_string(),
            sources,
            capacities,
            iterations: 30_000,
            trials: sim::DEFAULT_TRIALS,
            seed: sim::DEFAULT_SEED,
            window: sim::DEFAULT_WINDOW,
            tolerance: sim::DEFAULT_TOLERANCE,
            stride: 10,
            report_forms: vec![0],
            output: None,
        }
    }

    pub fn forms(&self) -> usize {
        self.sources.first().map_or(0, Vec::len)
    }

    /// Parses every source vector, checking the grid invariants.
    pub fn validate(&self) -> Result<Vec<SourceDistribution>> {
        if self.sources.is_empty() {
            return Err(invalid("source grid is empty"));
        }
        if self.capacities.is_empty() {
            return Err(invalid("capacity grid is empty"));
        }
        if let Some(&l) = self.capacities.iter().find(|&&l| l < 2) {
            return Err(invalid(format!("capacity L must be at least 2, got {l}")));
        }
        let forms = self.forms();
        if self.sources.iter().any(|nu| nu.len() != forms) {
            return Err(invalid("all source vectors must have the same number of forms"));
        }
        if self.iterations == 0 || self.trials == 0 {
            return Err(invalid("iterations and trials must be positive"));
        }
        if self.stride == 0 {
            return Err(invalid("trajectory stride must be positive"));
        }
        if let Some(&i) = self.report_forms.iter().find(|&&i| i >= forms) {
            return Err(Error::FormIndex { index: i, forms });
        }
        self.sources.iter().map(|nu| SourceDistribution::new(nu.clone())).collect()
    }
}

/// One CSV record.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub figure: String,
    pub capacity: u32,
    pub nu: Vec<f64>,
    /// Iteration budget, or the step index for trajectory rows.
    pub iterations: u64,
    pub trials: u64,
    pub seed: u64,
    /// 1-based form index.
    pub form: usize,
    pub p_analytic: Option<f64>,
    pub p_montecarlo: Option<f64>,
    pub conv_mean: Option<f64>,
    pub conv_stderr: Option<f64>,
    pub n_nonconverged: Option<u64>,
}

impl Row {
    pub fn forms(&self) -> usize {
        self.nu.len()
    }

    pub fn increment(&self) -> f64 {
        1.0 / self.capacity as f64
    }
}

pub trait Experiment: Send + Sync {
    fn id(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn default_spec(&self) -> ExperimentSpec;
    fn run(&self, spec: &ExperimentSpec) -> Result<Vec<Row>>;
}

pub struct ExperimentRegistry {
    experiments: BTreeMap<&'static str, Arc<dyn Experiment>>,
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut registry = Self {
            experiments: BTreeMap::new(),
        };
        for e in kinds::figures() {
            registry.register(e);
        }
        registry
    }
}

impl ExperimentRegistry {
    pub fn register(&mut self, experiment: Arc<dyn Experiment>) {
        self.experiments.insert(experiment.id(), experiment);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Experiment>> {
        self.experiments
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownExperiment(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.experiments.keys().copied()
    }

    /// Runs `spec.figure` and writes to `spec.output` when set.
    pub fn run(&self, spec: &ExperimentSpec) -> Result<Vec<Row>> {
        let rows = self.get(&spec.figure)?.run(spec)?;
        if let Some(path) = &spec.output {
            let mut out = BufWriter::new(File::create(path)?);
            write_csv(&mut out, spec.forms(), &rows)?;
            out.flush()?;
        }
        Ok(rows)
    }
}

pub fn header(forms: usize) -> Vec<String> {
    let mut h: Vec<String> = ["figure", "M", "L", "s"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=forms).map(|i| format!("nu{i}")));
    h.extend(
        [
            "iterations",
            "trials",
            "seed",
            "form",
            "p_analytic",
            "p_montecarlo",
            "conv_mean",
            "conv_stderr",
            "n_nonconverged",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv<W: Write>(writer: W, forms: usize, rows: &[Row]) -> Result<()> {
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    csv.write_record(header(forms))?;
    for r in rows {
        if r.forms() != forms {
            return Err(invalid(format!("row has {} forms, header has {forms}", r.forms())));
        }
        let mut record = vec![
            r.figure.clone(),
            r.forms().to_string(),
            r.capacity.to_string(),
            r.increment().to_string(),
        ];
        record.extend(r.nu.iter().map(f64::to_string));
        record.extend([
            r.iterations.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
            r.form.to_string(),
            opt(r.p_analytic),
            opt(r.p_montecarlo),
            opt(r.conv_mean),
            opt(r.conv_stderr),
            opt(r.n_nonconverged),
        ]);
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn to_csv_string(forms: usize, rows: &[Row]) -> Result<String> {
    let mut out = Vec::new();
    write_csv(&mut out, forms, rows)?;
    Ok(String::from_utf8(out).expect("csv output is UTF-8"))
}

/// Looks up and runs `spec.figure` in the default registry.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    ExperimentRegistry::default().run(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_every_figure() {
        let ids: Vec<_> = ExperimentRegistry::default().ids().collect();
        assert_eq!(
            ids,
            ["fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b", "fig4a", "fig4b"]
        );
        assert!(matches!(
            ExperimentRegistry::default().get("fig9"),
            Err(Error::UnknownExperiment(_))
        ));
    }

    #[test]
    fn default_specs_are_valid() {
        let registry = ExperimentRegistry::default();
        for id in registry.ids() {
            let spec = registry.get(id).unwrap().default_spec();
            assert_eq!(spec.figure, id);
            spec.validate().unwrap();
        }
    }

    #[test]
    fn invalid_specs() {
        let base = ExperimentSpec::new("fig1a", vec![vec![0.7, 0.3]], vec![20]);
        let mut s = base.clone();
        s.sources.clear();
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.capacities = vec![1];
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.sources.push(vec![0.4, 0.3, 0.3]);
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.sources = vec![vec![0.7, 0.7]];
        assert!(s.validate().is_err());
        let mut s = base;
        s.report_forms = vec![2];
        assert!(matches!(s.validate(), Err(Error::FormIndex { .. })));
    }

    #[test]
    fn csv_layout() {
        let row = Row {
            figure: "fig1a".into(),
            capacity: 20,
            nu: vec![0.7, 0.30000000000000004],
            iterations: 30_000,
            trials: 200,
            seed: 42,
            form: 1,
            p_analytic: Some(0.5),
            p_montecarlo: None,
            conv_mean: None,
            conv_stderr: None,
            n_nonconverged: Some(3),
        };
        let text = to_csv_string(2, &[row]).unwrap();
        assert_eq!(
            text,
            "figure,M,L,s,nu1,nu2,iterations,trials,seed,form,p_analytic,p_montecarlo,conv_mean,conv_stderr,n_nonconverged\n\
             fig1a,2,20,0.05,0.7,0.30000000000000004,30000,200,42,1,0.5,,,,3\n"
        );
    }

    #[test]
    fn small_runs_of_each_kind() {
        let registry = ExperimentRegistry::default();
        for id in registry.ids() {
            let e = registry.get(id).unwrap();
            let mut spec = e.default_spec();
            spec.sources.truncate(2);
            spec.capacities = vec![5, 10];
            spec.iterations = 2_000;
            spec.trials = 8;
            spec.window = 20;
            spec.tolerance = 0.05;
            spec.stride = 100;
            let rows = e.run(&spec).unwrap();
            assert!(!rows.is_empty(), "{id}");
            assert!(rows.iter().all(|r| r.figure == id && r.seed == spec.seed));
            let again = e.run(&spec).unwrap();
            assert_eq!(
                to_csv_string(spec.forms(), &rows).unwrap(),
                to_csv_string(spec.forms(), &again).unwrap()
            );
        }
    }
}
