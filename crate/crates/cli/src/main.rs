use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use freqboost::analytic;
use freqboost::chain::ChainModel;
use freqboost::experiments::{self, ExperimentRegistry, ExperimentSpec};
use freqboost::fit::{self, FitOptions, ObservationSet};
use freqboost::learner::SourceDistribution;
use freqboost::sim::{self, ConvergenceOptions, SimConfig};
use freqboost::stationary::{self, SolverRegistry};
use freqboost::Error;

/// Teacher-learner frequency boosting: exact chains, simulation and fitting.
#[derive(Parser, Debug)]
#[command(name = "freqboost", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact stationary distribution and long-run frequencies
    Stationary(StationaryArgs),
    /// Ensemble mean learner frequency over a grid of source frequencies
    BoostCurve(BoostCurveArgs),
    /// Per-step learner frequencies of one run
    Trajectory(TrajectoryArgs),
    /// Time until the windowed learner frequency settles at its long-run value
    Converge(ConvergeArgs),
    /// Regenerate the data behind one figure
    Experiment(ExperimentArgs),
    /// Fit the capacity L to observed parent/child frequencies
    Fit(FitArgs),
}

/// Learning increment, given either as s or as capacity L = 1/s.
#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
struct Increment {
    /// Increment s per update, a fraction of the total mass; must equal 1/L for an integer L >= 2
    #[arg(long = "s")]
    s: Option<f64>,
    /// Capacity L (integer units of mass; s = 1/L), at least 2
    #[arg(long = "L")]
    capacity: Option<u32>,
}

impl Increment {
    fn capacity(&self) -> Result<u32, Error> {
        match (self.s, self.capacity) {
            (_, Some(l)) if l >= 2 => Ok(l),
            (_, Some(l)) => Err(Error::InvalidParameter(format!("L must be at least 2, got {l}"))),
            (Some(s), None) => capacity_from_increment(s),
            (None, None) => Err(Error::InvalidParameter("one of --s or --L is required".into())),
        }
    }
}

fn capacity_from_increment(s: f64) -> Result<u32, Error> {
    let bad = || Error::InvalidParameter(format!("s = {s} is not 1/L for an integer L >= 2"));
    if !(s > 0.0 && s <= 0.5) {
        return Err(bad());
    }
    let l = (1.0 / s).round();
    if l > u32::MAX as f64 || (1.0 / l - s).abs() > 1e-12 * s {
        return Err(bad());
    }
    Ok(l as u32)
}

#[derive(Args, Debug)]
struct StationaryArgs {
    /// Number of competing forms M
    #[arg(long = "M")]
    forms: usize,
    #[command(flatten)]
    increment: Increment,
    /// Source probabilities nu1,...,nuM (must sum to 1)
    #[arg(long, value_delimiter = ',', required = true)]
    nu: Vec<f64>,
    /// Solver name: auto, birth-death, direct, gauss-seidel, power, sparse-lu
    #[arg(long, default_value = "auto")]
    solver: String,
    /// Maximum number of chain states
    #[arg(long, default_value_t = freqboost::chain::DEFAULT_STATE_CAP)]
    state_cap: usize,
    /// Write the distribution as CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimFlags {
    /// Learner updates per trial
    #[arg(long = "iters", default_value_t = 30_000)]
    iterations: u64,
    /// Master seed; trial k uses its own stream derived from it
    #[arg(long, default_value_t = sim::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BoostCurveArgs {
    /// Number of forms: 2, or 3 with the remaining mass split equally
    #[arg(long = "M")]
    forms: usize,
    #[command(flatten)]
    increment: Increment,
    /// Source frequencies of form 1
    #[arg(long, value_delimiter = ',', required = true)]
    nu_grid: Vec<f64>,
    #[command(flatten)]
    sim: SimFlags,
    /// Independent trials per grid point
    #[arg(long, default_value_t = sim::DEFAULT_TRIALS)]
    trials: u64,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    /// Number of competing forms M
    #[arg(long = "M")]
    forms: usize,
    #[command(flatten)]
    increment: Increment,
    /// Source probabilities nu1,...,nuM
    #[arg(long, value_delimiter = ',', required = true)]
    nu: Vec<f64>,
    #[command(flatten)]
    sim: SimFlags,
    /// Trial index (selects the random stream)
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    /// Number of competing forms M
    #[arg(long = "M")]
    forms: usize,
    #[command(flatten)]
    increment: Increment,
    /// Source probabilities nu1,...,nuM
    #[arg(long, value_delimiter = ',', required = true)]
    nu: Vec<f64>,
    /// Moving-average window in steps
    #[arg(long, default_value_t = sim::DEFAULT_WINDOW)]
    window: usize,
    /// Tolerance on the form-1 frequency (0.001 = 0.1%)
    #[arg(long, default_value_t = sim::DEFAULT_TOLERANCE)]
    eps: f64,
    /// Independent trials
    #[arg(long, default_value_t = sim::DEFAULT_TRIALS)]
    trials: u64,
    /// Step budget per trial; trials that never settle are counted, not averaged
    #[arg(long = "iters", default_value_t = 50_000)]
    iterations: u64,
    /// Master seed
    #[arg(long, default_value_t = sim::DEFAULT_SEED)]
    seed: u64,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write each trial's first converged step here
    #[arg(long)]
    per_trial: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Figure id (fig1a, fig1b, fig2a, fig2b, fig3a, fig3b, fig4a, fig4b)
    #[arg(long, required_unless_present = "list")]
    figure: Option<String>,
    /// Master seed
    #[arg(long, default_value_t = sim::DEFAULT_SEED)]
    seed: u64,
    /// Override the figure's trial count
    #[arg(long)]
    trials: Option<u64>,
    /// Override the figure's iteration count
    #[arg(long = "iters")]
    iterations: Option<u64>,
    /// Output CSV (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// List the available figures
    #[arg(long)]
    list: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Observations CSV (label,category,parent1,parent2,simon); bundled sample if omitted
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model: 2 forms, or 3 with equal-split alternatives
    #[arg(long = "M", default_value_t = 2)]
    forms: usize,
    /// Largest capacity L searched (grid is 2..=L-max)
    #[arg(long = "L-max", default_value_t = 200)]
    max_capacity: u32,
    /// Weight of parent1 in the model input
    #[arg(long, default_value_t = 0.5)]
    weight: f64,
    /// Report CSV (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the fitted curve (input,predicted) here
    #[arg(long)]
    curve: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn source(forms: usize, nu: Vec<f64>) -> Result<SourceDistribution, Error> {
    if nu.len() != forms {
        return Err(Error::InvalidParameter(format!(
            "--nu has {} values but M = {forms}",
            nu.len()
        )));
    }
    SourceDistribution::new(nu)
}

fn run_stationary(args: StationaryArgs) -> anyhow::Result<()> {
    let capacity = args.increment.capacity()?;
    let solver = SolverRegistry::default().get(&args.solver)?;
    let src = source(args.forms, args.nu)?;
    let chain = ChainModel::build_with_cap(args.forms, capacity, &src, args.state_cap)?;
    let dist = stationary::stationary_with(&chain, solver.as_ref())?;
    let freqs = dist.expected_frequencies(&chain);

    let mut out = output(args.out.as_deref())?;
    let mut header = vec!["state".to_string()];
    header.extend((1..=args.forms).map(|i| format!("units{i}")));
    header.push("pi".into());
    writeln!(out, "{}", header.join(","))?;
    for (k, p) in dist.pi.iter().enumerate() {
        let units: Vec<String> = chain.state(k).iter().map(u32::to_string).collect();
        writeln!(out, "{k},{},{p}", units.join(","))?;
    }
    out.flush()?;
    drop(out);

    let mut summary = io::stdout().lock();
    writeln!(summary, "# solver: {} (residual {:e})", dist.solver, dist.residual)?;
    let listed: Vec<String> = freqs.iter().map(f64::to_string).collect();
    writeln!(summary, "# expected frequencies: {}", listed.join(","))?;
    if args.forms == 2 {
        let p = analytic::expected_frequency(capacity, src.probability(0));
        writeln!(summary, "# closed form P(L={capacity}, nu={}): {p}", src.probability(0))?;
    }
    Ok(())
}

fn boost_sources(forms: usize, grid: &[f64]) -> Result<Vec<Vec<f64>>, Error> {
    grid.iter()
        .map(|&nu| match forms {
            2 => Ok(vec![nu, 1.0 - nu]),
            3 => Ok(vec![nu, (1.0 - nu) / 2.0, (1.0 - nu) / 2.0]),
            _ => Err(Error::InvalidParameter(format!(
                "boost-curve supports M = 2 or 3, got {forms}"
            ))),
        })
        .collect()
}

fn run_boost_curve(args: BoostCurveArgs) -> anyhow::Result<()> {
    let capacity = args.increment.capacity()?;
    let spec = ExperimentSpec {
        iterations: args.sim.iterations,
        trials: args.trials,
        seed: args.sim.seed,
        ..ExperimentSpec::new("boost-curve", boost_sources(args.forms, &args.nu_grid)?, vec![capacity])
    };
    spec.validate()?;
    let rows = experiments::boost_curve(&spec)?;
    let mut out = output(args.out.as_deref())?;
    experiments::write_csv(&mut out, spec.forms(), &rows)?;
    out.flush()?;
    Ok(())
}

fn run_trajectory(args: TrajectoryArgs) -> anyhow::Result<()> {
    let capacity = args.increment.capacity()?;
    let config = SimConfig::new(capacity, source(args.forms, args.nu)?)
        .with_iterations(args.sim.iterations)
        .with_seed(args.sim.seed);
    config.validate()?;
    let trajectory = sim::run_trajectory(&config, args.trial)?;
    let mut out = output(args.out.as_deref())?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=args.forms).map(|i| format!("p{i}")));
    writeln!(out, "{}", header.join(","))?;
    for t in 0..trajectory.len() {
        let p: Vec<String> = trajectory.frequencies(t).iter().map(f64::to_string).collect();
        writeln!(out, "{t},{}", p.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn run_converge(args: ConvergeArgs) -> anyhow::Result<()> {
    let capacity = args.increment.capacity()?;
    let src = source(args.forms, args.nu.clone())?;
    let config = SimConfig::new(capacity, src)
        .with_iterations(args.iterations)
        .with_trials(args.trials)
        .with_seed(args.seed);
    config.validate()?;
    let options = ConvergenceOptions {
        window: args.window,
        tolerance: args.eps,
        ..ConvergenceOptions::default()
    };
    let result = sim::convergence_time(&config, &options)?;
    let row = experiments::Row {
        figure: "converge".into(),
        capacity,
        nu: args.nu,
        iterations: args.iterations,
        trials: args.trials,
        seed: args.seed,
        form: 1,
        p_analytic: Some(result.target.value),
        p_montecarlo: None,
        conv_mean: result.mean,
        conv_stderr: result.stderr,
        n_nonconverged: Some(result.n_nonconverged),
    };
    let mut out = output(args.out.as_deref())?;
    experiments::write_csv(&mut out, args.forms, &[row])?;
    out.flush()?;
    if let Some(path) = &args.per_trial {
        let mut f = BufWriter::new(create(path)?);
        writeln!(f, "trial,converged_at")?;
        for (k, t) in result.per_trial.iter().enumerate() {
            writeln!(f, "{k},{}", t.map(|t| t.to_string()).unwrap_or_default())?;
        }
        f.flush()?;
    }
    if result.target.estimated {
        eprintln!("note: target estimated by a long Monte Carlo run (chain too large to solve)");
    }
    Ok(())
}

fn run_experiment(args: ExperimentArgs) -> anyhow::Result<()> {
    let registry = ExperimentRegistry::default();
    if args.list {
        let mut out = io::stdout().lock();
        for id in registry.ids() {
            writeln!(out, "{id}\t{}", registry.get(id)?.description())?;
        }
        return Ok(());
    }
    let figure = args.figure.unwrap_or_default();
    let experiment = registry.get(&figure)?;
    let mut spec = experiment.default_spec();
    spec.seed = args.seed;
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(i) = args.iterations {
        spec.iterations = i;
    }
    spec.validate()?;
    let rows = experiment.run(&spec)?;
    let mut out = output(args.out.as_deref())?;
    experiments::write_csv(&mut out, spec.forms(), &rows)?;
    out.flush()?;
    Ok(())
}

fn run_fit(args: FitArgs) -> anyhow::Result<()> {
    if args.max_capacity < 2 {
        return Err(Error::InvalidParameter(format!("--L-max must be at least 2, got {}", args.max_capacity)).into());
    }
    let observations = match &args.data {
        Some(path) => ObservationSet::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ObservationSet::bundled(),
    };
    let options = FitOptions {
        parent1_weight: args.weight,
        curve_points: if args.curve.is_some() { 101 } else { 0 },
        ..FitOptions::new(args.forms).with_max_capacity(args.max_capacity)
    };
    let result = fit::fit(&observations, &options)?;
    let cases = fit::case_report(&observations, args.forms, result.capacity, args.weight)?;
    let mut out = output(args.out.as_deref())?;
    fit::write_report(&mut out, &result, &cases)?;
    out.flush()?;
    if let Some(path) = &args.curve {
        let mut f = BufWriter::new(create(path)?);
        writeln!(f, "input,predicted")?;
        for (x, p) in &result.curve {
            writeln!(f, "{x},{p}")?;
        }
        f.flush()?;
    }
    if cases.iter().any(|c| c.estimated) {
        eprintln!("note: some predictions are long-run Monte Carlo estimates");
    }
    Ok(())
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            let message = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: usage: {}", one_line(message));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Stationary(a) => run_stationary(a),
        Command::BoostCurve(a) => run_boost_curve(a),
        Command::Trajectory(a) => run_trajectory(a),
        Command::Converge(a) => run_converge(a),
        Command::Experiment(a) => run_experiment(a),
        Command::Fit(a) => run_fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<Error>() {
            Some(err) => {
                eprintln!("error: {}: {}", err.code(), one_line(&format!("{e:#}")));
                ExitCode::from(if err.is_validation() { 2 } else { 1 })
            }
            None if e.downcast_ref::<io::Error>().is_some() => {
                eprintln!("error: io: {}", one_line(&format!("{e:#}")));
                ExitCode::from(1)
            }
            None => {
                eprintln!("error: runtime: {}", one_line(&format!("{e:#}")));
                ExitCode::from(1)
            }
        },
    }
}
