//! Fitting the learning increment to observed teacher/learner frequencies.
//!
//! Each observation pairs two parents' usage of a form with the child's usage
//! of the same form. The model input is the exposure-weighted parent mean,
//! and the model output is the learner's long-run expected frequency for a
//! capacity `L`. The fit is a least-squares grid search over integer `L`.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;

use crate::analytic;
use crate::chain::{state_count, ChainModel, TransitionMatrix, DEFAULT_STATE_CAP};
use crate::error::{invalid, Error, Result};
use crate::learner::{total_quanta, SourceDistribution};
use crate::sim::{self, SimConfig};
use crate::stationary;

/// The sample records shipped with the crate, in percent.
pub const BUNDLED_CSV: &str = include_str!("../../../samples/simon.csv");

/// Any value above this marks a file as percentages.
pub const PERCENT_THRESHOLD: f64 = 1.5;

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub label: String,
    pub category: String,
    pub parent1: f64,
    pub parent2: f64,
    pub learner: f64,
}

impl Observation {
    /// Model input: `w * parent1 + (1 - w) * parent2`.
    pub fn input(&self, parent1_weight: f64) -> f64 {
        parent1_weight * self.parent1 + (1.0 - parent1_weight) * self.parent2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    records: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(records: Vec<Observation>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            for (name, v) in [("parent1", r.parent1), ("parent2", r.parent2), ("learner", r.learner)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(format!("{}: {name} = {v} is not in [0, 1]", r.label)));
                }
            }
            if !seen.insert(r.label.as_str()) {
                return Err(invalid(format!("duplicate label `{}`", r.label)));
            }
        }
        Ok(Self { records })
    }

    /// Reads `label,category,parent1,parent2,simon`. Values are fractions
    /// unless any of them exceeds 1.5, in which case the whole file is percent.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let expected = ["label", "category", "parent1", "parent2", "simon"];
        let headers = csv.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Malformed {
                line: 1,
                message: format!("header must be `{}`", expected.join(",")),
            });
        }
        let mut raw = Vec::new();
        for record in csv.records() {
            let record = record.map_err(|e| Error::Malformed {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let number = |k: usize| -> Result<f64> {
                let field = &record[k];
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Malformed {
                    line,
                    message: format!("{} = `{field}` is not a number", expected[k]),
                })
            };
            raw.push((
                line,
                Observation {
                    label: record[0].to_string(),
                    category: record[1].to_string(),
                    parent1: number(2)?,
                    parent2: number(3)?,
                    learner: number(4)?,
                },
            ));
        }
        let percent = raw
            .iter()
            .any(|(_, o)| [o.parent1, o.parent2, o.learner].iter().any(|&v| v > PERCENT_THRESHOLD));
        let mut records = Vec::with_capacity(raw.len());
        for (line, mut o) in raw {
            if percent {
                o.parent1 /= 100.0;
                o.parent2 /= 100.0;
                o.learner /= 100.0;
            }
            for v in [o.parent1, o.parent2, o.learner] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Malformed {
                        line,
                        message: format!("frequency {v} is out of range"),
                    });
                }
            }
            records.push(o);
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_reader(BUNDLED_CSV.as_bytes()).expect("bundled sample data is valid")
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&Observation> {
        self.records.iter().find(|r| r.label == label)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// Set when the state space was too large and a long Monte Carlo run was used.
    pub estimated: bool,
}

/// Long-run learner frequency of form 1 for a source using it with
/// probability `input`. `M = 3` splits the rest equally between two alternatives.
pub fn predict(forms: usize, capacity: u32, input: f64) -> Result<Prediction> {
    predict_with_cap(forms, capacity, input, DEFAULT_STATE_CAP)
}

pub fn predict_with_cap(forms: usize, capacity: u32, input: f64, cap: usize) -> Result<Prediction> {
    if !(0.0..=1.0).contains(&input) {
        return Err(invalid(format!("input frequency {input} is not in [0, 1]")));
    }
    if capacity < 2 {
        return Err(invalid(format!("capacity L must be at least 2, got {capacity}")));
    }
    match forms {
        2 => Ok(Prediction {
            value: analytic::expected_frequency(capacity, input),
            estimated: false,
        }),
        3 => {
            let source = SourceDistribution::equal_split(3, input)?;
            match ChainModel::build_with_cap(3, capacity, &source, cap) {
                Ok(chain) => Ok(Prediction {
                    value: equal_split_frequency(&chain)?,
                    estimated: false,
                }),
                Err(Error::StateSpaceCap { .. }) => {
                    let config = SimConfig::new(capacity, source);
                    let avg = sim::long_run_average(
                        &config,
                        0,
                        sim::LONG_RUN_STEPS,
                        sim::LONG_RUN_BURN_IN,
                    )?;
                    Ok(Prediction {
                        value: avg[0],
                        estimated: true,
                    })
                }
                Err(e) => Err(e),
            }
        }
        _ => Err(invalid(format!("prediction supports M = 2 or 3, got {forms}"))),
    }
}

/// Long-run form-1 frequency of a three-form chain whose forms 2 and 3 have
/// equal source probability.
///
/// Swapping forms 2 and 3 is a symmetry of such a chain, so it lumps exactly
/// onto the states with `units[1] <= units[2]`, about half the lattice.
fn equal_split_frequency(chain: &ChainModel) -> Result<f64> {
    let n = chain.len();
    let mut class = vec![usize::MAX; n];
    let mut representatives = Vec::with_capacity(n / 2 + 1);
    for k in 0..n {
        let u = chain.state(k);
        if u[1] <= u[2] {
            class[k] = representatives.len();
            representatives.push(k);
        }
    }
    for k in 0..n {
        let u = chain.state(k);
        if u[1] > u[2] {
            let mirror = chain
                .index_of(&[u[0], u[2], u[1]])
                .expect("mirrored state is on the lattice");
            class[k] = class[mirror];
        }
    }
    let rows = representatives
        .iter()
        .map(|&r| chain.matrix().row(r).map(|(j, p)| (class[j], p)).collect())
        .collect();
    let lumped = TransitionMatrix::from_rows(rows)?;
    let pi = stationary::solve_on_closed_class(&lumped, &stationary::Auto::default())?;
    let total = total_quanta(3, chain.capacity()) as f64;
    Ok(representatives
        .iter()
        .zip(&pi)
        .map(|(&r, p)| p * chain.state(r)[0] as f64 / total)
        .sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub forms: usize,
    pub capacities: RangeInclusive<u32>,
    pub parent1_weight: f64,
    /// Number of evenly spaced inputs on `[0, 1]` for the fitted curve.
    pub curve_points: usize,
    pub state_cap: usize,
}

impl FitOptions {
    pub fn new(forms: usize) -> Self {
        Self {
            forms,
            capacities: 2..=200,
            parent1_weight: 0.5,
            curve_points: 101,
            state_cap: DEFAULT_STATE_CAP,
        }
    }

    pub fn with_max_capacity(mut self, max: u32) -> Self {
        self.capacities = *self.capacities.start()..=max;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub forms: usize,
    pub capacity: u32,
    pub sse: f64,
    /// Model prediction for each observation, in input order.
    pub predictions: Vec<f64>,
    /// `(input, prediction)` samples of the fitted model over `[0, 1]`.
    pub curve: Vec<(f64, f64)>,
}

impl FitResult {
    /// The fitted increment `s = 1/L`.
    pub fn increment(&self) -> f64 {
        1.0 / self.capacity as f64
    }
}

/// Least-squares grid search over `options.capacities`; ties go to the smaller `L`.
pub fn fit(observations: &ObservationSet, options: &FitOptions) -> Result<FitResult> {
    if observations.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if !(0.0..=1.0).contains(&options.parent1_weight) {
        return Err(invalid(format!(
            "parent weight {} is not in [0, 1]",
            options.parent1_weight
        )));
    }
    let (lo, hi) = (*options.capacities.start(), *options.capacities.end());
    if lo < 2 || hi < lo {
        return Err(invalid(format!("capacity grid {lo}..={hi} is empty or below 2")));
    }
    if !matches!(options.forms, 2 | 3) {
        return Err(invalid(format!("fit supports M = 2 or 3, got {}", options.forms)));
    }
    if options.forms == 3 {
        let states = state_count(3, hi);
        if states > options.state_cap as u128 {
            return Err(Error::StateSpaceCap {
                states,
                cap: options.state_cap,
            });
        }
    }
    let inputs: Vec<f64> = observations
        .records()
        .iter()
        .map(|o| o.input(options.parent1_weight))
        .collect();
    let scored = (lo..=hi)
        .into_par_iter()
        .map(|capacity| -> Result<(u32, f64, Vec<f64>)> {
            let predictions = inputs
                .iter()
                .map(|&x| predict_with_cap(options.forms, capacity, x, options.state_cap).map(|p| p.value))
                .collect::<Result<Vec<_>>>()?;
            let sse = predictions
                .iter()
                .zip(observations.records())
                .map(|(p, o)| (p - o.learner).powi(2))
                .sum();
            Ok((capacity, sse, predictions))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut best = &scored[0];
    for candidate in &scored[1..] {
        if candidate.1 < best.1 {
            best = candidate;
        }
    }
    let (capacity, sse, predictions) = best.clone();
    let curve = model_curve(options.forms, capacity, options.curve_points, options.state_cap)?;
    Ok(FitResult {
        forms: options.forms,
        capacity,
        sse,
        predictions,
        curve,
    })
}

/// `(input, prediction)` at `points` evenly spaced inputs on `[0, 1]`.
pub fn model_curve(forms: usize, capacity: u32, points: usize, cap: usize) -> Result<Vec<(f64, f64)>> {
    if points == 0 {
        return Ok(Vec::new());
    }
    let step = if points > 1 { 1.0 / (points - 1) as f64 } else { 0.0 };
    (0..points)
        .into_par_iter()
        .map(|k| {
            let x = (k as f64 * step).min(1.0);
            predict_with_cap(forms, capacity, x, cap).map(|p| (x, p.value))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    /// Input above 1/2: boosted by any `M`.
    MajorityBoosting,
    /// Input in `(1/M, 1/2]`: only boosted when there are several alternatives.
    SubMajorityBoosting,
    /// Input at or below `1/M`: not the dominant form under equal-split alternatives.
    BelowUniform,
}

impl Classification {
    pub fn of(input: f64, forms: usize) -> Self {
        if input > 0.5 {
            Classification::MajorityBoosting
        } else if input > 1.0 / forms as f64 {
            Classification::SubMajorityBoosting
        } else {
            Classification::BelowUniform
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::MajorityBoosting => "majority-form boosting",
            Classification::SubMajorityBoosting => "sub-majority boosting (requires M ≥ 3)",
            Classification::BelowUniform => "dominant-form below 1/M",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseRecord {
    pub label: String,
    pub input: f64,
    pub observed: f64,
    pub predicted: f64,
    /// `observed - predicted`.
    pub residual: f64,
    pub classification: Classification,
    pub estimated: bool,
}

pub fn case_report(
    observations: &ObservationSet,
    forms: usize,
    capacity: u32,
    parent1_weight: f64,
) -> Result<Vec<CaseRecord>> {
    observations
        .records()
        .iter()
        .map(|o| {
            let input = o.input(parent1_weight);
            let p = predict(forms, capacity, input)?;
            Ok(CaseRecord {
                label: o.label.clone(),
                input,
                observed: o.learner,
                predicted: p.value,
                residual: o.learner - p.value,
                classification: Classification::of(input, forms),
                estimated: p.estimated,
            })
        })
        .collect()
}

/// Writes the fit summary block followed by one row per case.
pub fn write_report<W: Write>(writer: W, fit: &FitResult, cases: &[CaseRecord]) -> Result<()> {
    let mut csv = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    csv.write_record(["M", "L_fit", "s_fit", "sse"])?;
    csv.write_record([
        fit.forms.to_string(),
        fit.capacity.to_string(),
        fit.increment().to_string(),
        fit.sse.to_string(),
    ])?;
    csv.write_record(["label", "input", "observed", "predicted", "residual", "classification"])?;
    for c in cases {
        csv.write_record([
            c.label.clone(),
            c.input.to_string(),
            c.observed.to_string(),
            c.predicted.to_string(),
            c.residual.to_string(),
            c.classification.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(label: &str, p1: f64, p2: f64, learner: f64) -> Observation {
        Observation {
            label: label.into(),
            category: "test".into(),
            parent1: p1,
            parent2: p2,
            learner,
        }
    }

    #[test]
    fn bundled_records() {
        let set = ObservationSet::bundled();
        assert_eq!(set.len(), 3);
        let b = set.get("vehicle_B_edge").unwrap();
        assert!((b.input(0.5) - 0.57).abs() < 1e-12);
        assert!((b.learner - 0.73).abs() < 1e-12);
        let so = set.get("secondary_object").unwrap();
        assert!((so.input(0.5) - 0.40).abs() < 1e-12);
        assert!((so.learner - 0.59).abs() < 1e-12);
        let plane = set.get("plane").unwrap();
        assert!((plane.input(0.5) - 0.275).abs() < 1e-12);
        assert!((plane.learner - 0.67).abs() < 1e-12);
    }

    #[test]
    fn fractions_are_kept() {
        let text = "label,category,parent1,parent2,simon\na,x,0.6,0.4,0.7\n";
        let set = ObservationSet::from_reader(text.as_bytes()).unwrap();
        assert_eq!(set.records()[0].parent1, 0.6);
    }

    #[test]
    fn malformed_inputs() {
        let bad_header = "label,parent1,parent2,simon\na,0.6,0.4,0.7\n";
        assert!(matches!(
            ObservationSet::from_reader(bad_header.as_bytes()),
            Err(Error::Malformed { line: 1, .. })
        ));
        let bad_number = "label,category,parent1,parent2,simon\na,x,0.6,abc,0.7\n";
        assert!(matches!(
            ObservationSet::from_reader(bad_number.as_bytes()),
            Err(Error::Malformed { line: 2, .. })
        ));
        let out_of_range = "label,category,parent1,parent2,simon\na,x,60,40,170\n";
        assert!(matches!(
            ObservationSet::from_reader(out_of_range.as_bytes()),
            Err(Error::Malformed { line: 2, .. })
        ));
        let short = "label,category,parent1,parent2,simon\na,x,0.6\n";
        assert!(ObservationSet::from_reader(short.as_bytes()).is_err());
        let dup = "label,category,parent1,parent2,simon\na,x,0.6,0.4,0.7\na,y,0.5,0.5,0.5\n";
        assert!(matches!(
            ObservationSet::from_reader(dup.as_bytes()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(2, 17, 0.5).unwrap().value, 0.5);
        assert!((predict(2, 10, 0.7).unwrap().value - 0.925_098_556_882_288_6).abs() < 1e-12);
        let p = predict(3, 6, 0.40).unwrap();
        assert!(!p.estimated);
        assert!(p.value > 0.40, "{}", p.value);
        assert!((predict(3, 9, 1.0 / 3.0).unwrap().value - 1.0 / 3.0).abs() < 1e-10);
        assert!(predict(4, 6, 0.4).is_err());
        assert!(predict(2, 6, 1.4).is_err());
    }

    #[test]
    fn lumped_chain_matches_the_full_chain() {
        for capacity in [2, 3, 7, 20] {
            for k in 0..=10 {
                let x = k as f64 / 10.0;
                let source = SourceDistribution::equal_split(3, x).unwrap();
                let chain = ChainModel::build(3, capacity, &source).unwrap();
                let full = stationary::expected_frequencies(&chain).unwrap()[0];
                let lumped = equal_split_frequency(&chain).unwrap();
                assert!((full - lumped).abs() < 1e-11, "L={capacity} x={x}: {full} vs {lumped}");
            }
        }
    }

    #[test]
    fn predict_is_the_closed_form_for_two_forms() {
        for capacity in [2, 9, 150] {
            for k in 0..=20 {
                let x = k as f64 / 20.0;
                assert_eq!(
                    predict(2, capacity, x).unwrap().value,
                    analytic::expected_frequency(capacity, x)
                );
            }
        }
    }

    #[test]
    fn predict_is_monotone_in_input() {
        for (forms, capacity) in [(2, 2), (2, 40), (3, 4), (3, 12)] {
            let curve = model_curve(forms, capacity, 101, DEFAULT_STATE_CAP).unwrap();
            for w in curve.windows(2) {
                assert!(w[1].1 >= w[0].1 - 1e-12, "M={forms} L={capacity}: {w:?}");
            }
        }
    }

    #[test]
    fn single_majority_point() {
        let set = ObservationSet::new(vec![obs("b", 0.67, 0.47, 0.73)]).unwrap();
        let r = fit(&set, &FitOptions::new(2)).unwrap();
        assert_eq!(r.capacity, 9);
        assert!((r.predictions[0] - 0.7293).abs() < 1e-3);
        assert_eq!(r.curve.len(), 101);
    }

    #[test]
    fn symmetric_point_ties_to_smallest_capacity() {
        let set = ObservationSet::new(vec![obs("half", 0.5, 0.5, 0.5)]).unwrap();
        let r = fit(&set, &FitOptions::new(2)).unwrap();
        assert_eq!(r.capacity, 2);
        assert_eq!(r.sse, 0.0);
    }

    #[test]
    fn planted_three_form_capacity() {
        let planted = 7;
        let records = [0.4, 0.5, 0.7]
            .iter()
            .enumerate()
            .map(|(k, &x)| obs(&format!("r{k}"), x, x, predict(3, planted, x).unwrap().value))
            .collect();
        let set = ObservationSet::new(records).unwrap();
        let options = FitOptions {
            capacities: 2..=20,
            curve_points: 5,
            ..FitOptions::new(3)
        };
        let r = fit(&set, &options).unwrap();
        assert_eq!(r.capacity, planted);
        assert!(r.sse < 1e-20);
    }

    #[test]
    fn fit_errors() {
        let empty = ObservationSet::new(vec![]).unwrap();
        assert!(matches!(fit(&empty, &FitOptions::new(2)), Err(Error::EmptyObservations)));
        let set = ObservationSet::bundled();
        let options = FitOptions {
            state_cap: 1000,
            ..FitOptions::new(3)
        };
        assert!(matches!(fit(&set, &options), Err(Error::StateSpaceCap { .. })));
    }

    #[test]
    fn classification_bands() {
        assert_eq!(Classification::of(0.57, 2), Classification::MajorityBoosting);
        assert_eq!(Classification::of(0.40, 3), Classification::SubMajorityBoosting);
        assert_eq!(Classification::of(0.40, 2), Classification::BelowUniform);
        assert_eq!(Classification::of(0.275, 3), Classification::BelowUniform);
        assert_eq!(Classification::of(0.5, 3), Classification::SubMajorityBoosting);
    }

    #[test]
    fn report_layout() {
        let set = ObservationSet::bundled();
        let r = fit(&set, &FitOptions::new(2).with_max_capacity(30)).unwrap();
        let cases = case_report(&set, 2, r.capacity, 0.5).unwrap();
        let mut out = Vec::new();
        write_report(&mut out, &r, &cases).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "M,L_fit,s_fit,sse");
        assert!(lines[1].starts_with(&format!("2,{},", r.capacity)));
        assert_eq!(lines[2], "label,input,observed,predicted,residual,classification");
        assert_eq!(lines.len(), 6);
        let fields: Vec<&str> = lines[3].split(',').collect();
        assert_eq!(fields[0], "vehicle_B_edge");
        assert!((fields[1].parse::<f64>().unwrap() - 0.57).abs() < 1e-12);
        assert!((fields[2].parse::<f64>().unwrap() - 0.73).abs() < 1e-12);
        assert_eq!(fields[5], "majority-form boosting");
        assert!(!text.contains('\r'));
    }
}
