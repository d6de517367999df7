mod format;
mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use tou_core::config::{self, ConfigError};
use tou_core::demand::{aggregate_users, align_to_scheme, cv, DEFAULT_GRID_STEP, DEFAULT_TAIL_MASS};
use tou_core::experiments::{aggregation_experiment, cv_cost_gap_experiment, ExperimentConfig, ExperimentError};
use tou_core::oracle::{brute_force_dp, OracleError};
use tou_core::policy::{self, charge_timing_probs, compute_policy, evaluate_policy, PolicyError, Threshold, DEFAULT_TOL};
use tou_core::sizing::{optimal_capacity, SizingError, SizingOptions, DEFAULT_CURVE_POINTS};
use tou_core::tariff::{local_extrema, pi_max};
use tou_core::{DemandDescriptor, DiscreteDemand, Rate, TouScheme};

use format::{console, csv_bytes, full, reservation_kwh, table, write_file};
use manifest::{digest_file, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Diagnostic(String),
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diagnostic(_) => 3,
            CliError::Mismatch(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<tou_core::demand::DemandError> for CliError {
    fn from(e: tou_core::demand::DemandError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::NotMonotone { .. } => CliError::Diagnostic(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<SizingError> for CliError {
    fn from(e: SizingError) -> Self {
        match e {
            SizingError::Policy(p) => p.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::StateSpaceTooLarge { .. } => CliError::Diagnostic(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Demand(d) => d.into(),
            ExperimentError::Sizing(s) => s.into(),
            ExperimentError::Oracle(o) => o.into(),
            ExperimentError::Config(c) => CliError::Config(c),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tou", version, about = "Storage reservation and sizing under time-of-use tariffs")]
struct Cli {
    /// Energy grid step in kWh [default: 0.01, or the experiment file's value]
    #[arg(long, global = true)]
    grid_step: Option<f64>,
    /// Upper-tail probability folded into the last grid cell [default: 1e-6]
    #[arg(long, global = true)]
    tail_mass: Option<f64>,
    /// Marginal revenue tolerance in cents/kWh [default: 1e-6]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Random seed for Monte Carlo runs [default: 0, or the experiment file's value]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for outputs with relative paths and for the run manifest
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tariff files
    Tariff {
        #[command(subcommand)]
        action: TariffAction,
    },
    /// Demand files
    Demand {
        #[command(subcommand)]
        action: DemandAction,
    },
    /// Reservation policy and expected cost
    Solve {
        #[arg(long)]
        tariff: PathBuf,
        #[arg(long)]
        demand: PathBuf,
        /// Storage capacity in kWh
        #[arg(long, default_value_t = 0.0)]
        capacity: f64,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        output: OutputFormat,
        /// Write CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal storage capacity
    Size {
        #[arg(long)]
        tariff: PathBuf,
        #[arg(long)]
        demand: PathBuf,
        /// Amortized storage cost in cents per kWh of capacity per day
        #[arg(long)]
        amortized_cost: Rate,
        /// Write the sampled capacity marginal revenue curve as CSV
        #[arg(long)]
        mr_curve: Option<PathBuf>,
        /// Number of curve samples
        #[arg(long, default_value_t = DEFAULT_CURVE_POINTS)]
        curve_points: usize,
    },
    /// Brute-force dynamic programming reference
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
    /// Synthetic demand studies
    Experiment {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Debug, Subcommand)]
enum TariffAction {
    /// Validate a tariff and print its extremal prices
    Check { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum DemandAction {
    /// Print per-period mean, standard deviation and CV
    Inspect { file: PathBuf },
}

#[derive(Debug, Subcommand)]
enum OracleAction {
    /// Compare the policy cost against the exact optimum
    Compare {
        #[arg(long)]
        tariff: PathBuf,
        #[arg(long)]
        demand: PathBuf,
        /// Storage capacity in kWh
        #[arg(long)]
        capacity: f64,
        /// Largest accepted absolute cost difference in cents
        #[arg(long, default_value_t = 1e-9)]
        threshold: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StudyKind {
    CvGap,
    Aggregate,
}

#[derive(Debug, Subcommand)]
enum Study {
    /// Cost gap between random and constant demand across CV levels
    CvGap(StudyArgs),
    /// Per-user cost as more users share one storage
    Aggregate(StudyArgs),
}

#[derive(Debug, clap::Args)]
struct StudyArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write an SVG chart of the CSV series
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Table,
    Csv,
}

struct Run<'a> {
    cli: &'a Cli,
    command: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    grid_step: f64,
    tail_mass: f64,
    tol: f64,
    seed: u64,
}

impl<'a> Run<'a> {
    fn new(cli: &'a Cli, command: &str) -> Self {
        Run {
            cli,
            command: command.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            grid_step: cli.grid_step.unwrap_or(DEFAULT_GRID_STEP),
            tail_mass: cli.tail_mass.unwrap_or(DEFAULT_TAIL_MASS),
            tol: cli.tol.unwrap_or(DEFAULT_TOL),
            seed: cli.seed.unwrap_or(0),
        }
    }

    fn output_path(&self, path: &Path) -> PathBuf {
        match &self.cli.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn write_output(&mut self, path: &Path, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.output_path(path);
        write_file(&target, bytes)?;
        self.outputs.push(target.clone());
        Ok(target)
    }

    fn finish(self) -> Result<(), CliError> {
        let Some(location) = RunManifest::location(self.cli.out_dir.as_deref(), &self.outputs) else {
            return Ok(());
        };
        let inputs = self.inputs.iter().map(|p| digest_file(p)).collect::<Result<Vec<_>, _>>()?;
        let manifest = RunManifest {
            command: self.command,
            argv: std::env::args().collect(),
            inputs,
            grid_step: self.grid_step,
            tail_mass: self.tail_mass,
            tol: self.tol,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        manifest.write(&location)
    }

    fn check_numerics(&self) -> Result<(), CliError> {
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return Err(CliError::Config(format!("--grid-step must be positive, got {}", self.grid_step)));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass < 1.0) {
            return Err(CliError::Config(format!("--tail-mass must lie in (0, 1), got {}", self.tail_mass)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(CliError::Config(format!("--tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn tariff(&mut self, path: &Path) -> Result<TouScheme, CliError> {
        self.inputs.push(path.to_path_buf());
        Ok(config::load_tariff(path)?)
    }

    /// Loads a demand file on the run's grid, pooling multiple users.
    fn demand(&mut self, path: &Path, scheme: &TouScheme) -> Result<Vec<DiscreteDemand>, CliError> {
        self.inputs.push(path.to_path_buf());
        let users = config::load_demand(path)?;
        let grid = if users.len() == 1 {
            users[0].discretize(self.grid_step, self.tail_mass)?
        } else {
            aggregate_users(&users, self.grid_step, self.tail_mass)?
        };
        Ok(align_to_scheme(grid, scheme)?)
    }

    fn cells(&self, kwh: f64, flag: &str) -> Result<usize, CliError> {
        if !(kwh.is_finite() && kwh >= 0.0) {
            return Err(CliError::Config(format!("{flag} must be a nonnegative number of kWh, got {kwh}")));
        }
        let cells = kwh / self.grid_step;
        if (cells - cells.round()).abs() > 1e-6 {
            return Err(CliError::Config(format!("{flag} {kwh} kWh is not a multiple of the grid step {}", self.grid_step)));
        }
        Ok(cells.round() as usize)
    }
}

fn tariff_check(run: &mut Run, file: &Path) -> Result<(), CliError> {
    let scheme = run.tariff(file)?;
    let extrema = local_extrema(&scheme);
    let join = |rates: &[Rate]| rates.iter().map(Rate::to_string).collect::<Vec<_>>().join(" ");
    let rows = vec![
        vec!["periods".to_string(), scheme.len().to_string()],
        vec!["raw periods".to_string(), scheme.raw_len().to_string()],
        vec!["rates".to_string(), join(&scheme.rates())],
        vec!["local maxima".to_string(), join(&extrema.maxima)],
        vec!["local minima".to_string(), join(&extrema.minima)],
        vec!["pi_max".to_string(), pi_max(&scheme).to_string()],
    ];
    print!("{}", table(&["field", "value"], &rows));
    Ok(())
}

fn descriptor_kind(d: &DemandDescriptor) -> &'static str {
    match d {
        DemandDescriptor::Exponential { .. } => "exponential",
        DemandDescriptor::LogNormal { .. } => "log_normal",
        DemandDescriptor::TruncatedNormal { .. } => "truncated_normal",
        DemandDescriptor::PointMass { .. } => "point_mass",
        DemandDescriptor::EmpiricalHistogram { .. } => "empirical_histogram",
    }
}

fn demand_inspect(run: &mut Run, file: &Path) -> Result<(), CliError> {
    run.inputs.push(file.to_path_buf());
    let users = config::load_demand(file)?;
    let mut rows = Vec::new();
    for (u, spec) in users.iter().enumerate() {
        let grid = spec.discretize(run.grid_step, run.tail_mass)?;
        for (k, (descriptor, d)) in spec.periods.iter().zip(&grid).enumerate() {
            let ratio = cv(d).map(console).unwrap_or_else(|_| "-".into());
            rows.push(vec![
                u.to_string(),
                (k + 1).to_string(),
                descriptor_kind(descriptor).to_string(),
                console(d.mean()),
                console(d.sd()),
                ratio,
            ]);
        }
    }
    print!("{}", table(&["user", "period", "kind", "mean_kwh", "sd_kwh", "cv"], &rows));
    Ok(())
}

fn solve(run: &mut Run, tariff: &Path, demand: &Path, capacity: f64, output: OutputFormat, out: Option<&Path>) -> Result<(), CliError> {
    run.check_numerics()?;
    let scheme = run.tariff(tariff)?;
    let demands = run.demand(demand, &scheme)?;
    let capacity = run.cells(capacity, "--capacity")?;
    let policy = compute_policy(&scheme, &demands, run.tol)?;
    let evaluation = evaluate_policy(&policy, capacity, &scheme, &demands)?;
    let step = run.grid_step;
    let rates = scheme.rates();
    let n = scheme.len();

    let row = |i: usize, number: fn(f64) -> String| {
        let m = reservation_kwh(policy.reservations()[i], step);
        vec![
            (i + 1).to_string(),
            rates[i].to_string(),
            number(m),
            number(evaluation.projections[i] as f64 * step),
            number(evaluation.purchases[i]),
            number(evaluation.costs[i]),
        ]
    };
    let header = ["period", "rate", "M_star", "N", "expected_purchase", "expected_cost"];

    if output == OutputFormat::Csv {
        let rows: Vec<Vec<String>> = (0..n).map(|i| row(i, full)).collect();
        let bytes = csv_bytes(&header, &rows)?;
        match out {
            Some(path) => {
                run.write_output(path, &bytes)?;
            }
            None => print!("{}", String::from_utf8_lossy(&bytes)),
        }
        return Ok(());
    }

    let rows: Vec<Vec<String>> = (0..n).map(|i| row(i, console)).collect();
    print!("{}", table(&header, &rows));
    println!();
    println!("capacity {} kWh, expected daily cost {} cents", console(capacity as f64 * step), console(evaluation.total));
    println!();

    let thresholds: Vec<Threshold> = evaluation.projections.iter().map(|&p| Threshold::Level(p)).collect();
    let mut timing_header = vec!["held after".to_string()];
    timing_header.extend((1..n).map(|j| format!("P[{}]", j + 1)));
    let mut timing_rows = Vec::new();
    for i in 0..n - 1 {
        let timing = charge_timing_probs(i, evaluation.projections[i], &thresholds, &demands)?;
        let mut cells = vec![(i + 1).to_string()];
        cells.extend((1..n).map(|j| if j > i { console(timing.prob(j)) } else { "-".into() }));
        timing_rows.push(cells);
    }
    println!("first period to buy from the grid, from level N after each period:");
    let header_refs: Vec<&str> = timing_header.iter().map(String::as_str).collect();
    print!("{}", table(&header_refs, &timing_rows));
    if let Some(path) = out {
        let rows: Vec<Vec<String>> = (0..n).map(|i| row(i, full)).collect();
        run.write_output(path, &csv_bytes(&header, &rows)?)?;
    }
    Ok(())
}

fn size(run: &mut Run, tariff: &Path, demand: &Path, pi_s: Rate, mr_curve: Option<&Path>, curve_points: usize) -> Result<(), CliError> {
    run.check_numerics()?;
    let scheme = run.tariff(tariff)?;
    let demands = run.demand(demand, &scheme)?;
    let options = SizingOptions { tol: run.tol, curve_points: if mr_curve.is_some() { curve_points } else { 0 } };
    let result = optimal_capacity(&scheme, &demands, pi_s, options)?;
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }
    if !result.feasible {
        let relation = if pi_s > result.pi_max { ">" } else { ">=" };
        println!("infeasible: pi_s {} {relation} pi_max {}", pi_s, result.pi_max);
    }
    let rows = vec![
        vec!["feasible".to_string(), result.feasible.to_string()],
        vec!["pi_s".to_string(), console(pi_s.cents())],
        vec!["pi_max".to_string(), console(result.pi_max.cents())],
        vec!["C* (kWh)".to_string(), console(result.c_star)],
        vec!["expected daily cost at C*".to_string(), console(result.expected_daily_cost_at_c_star)],
        vec!["storage cost pi_s * C*".to_string(), console(pi_s.cents() * result.c_star)],
        vec!["total daily cost".to_string(), console(result.total_daily_cost())],
        vec!["expected daily cost at C = 0".to_string(), console(result.expected_daily_cost_without_storage)],
        vec!["daily savings".to_string(), console(result.daily_savings())],
    ];
    print!("{}", table(&["quantity", "value"], &rows));
    if let Some(path) = mr_curve {
        let rows: Vec<Vec<String>> = result.mr_curve.iter().map(|&(c, mr)| vec![full(c), full(mr)]).collect();
        run.write_output(path, &csv_bytes(&["capacity_kwh", "total_marginal_revenue"], &rows)?)?;
    }
    Ok(())
}

fn oracle_compare(run: &mut Run, tariff: &Path, demand: &Path, capacity: f64, threshold: f64) -> Result<(), CliError> {
    run.check_numerics()?;
    let scheme = run.tariff(tariff)?;
    let demands = run.demand(demand, &scheme)?;
    let capacity = run.cells(capacity, "--capacity")?;
    let policy = compute_policy(&scheme, &demands, run.tol)?;
    let policy_cost = policy::expected_cost(&policy, capacity, &scheme, &demands)?;
    let (dp_cost, _) = brute_force_dp(&scheme, &demands, capacity)?;
    let difference = policy_cost - dp_cost;
    let rows = vec![
        vec!["dp cost".to_string(), console(dp_cost)],
        vec!["policy cost".to_string(), console(policy_cost)],
        vec!["difference".to_string(), format!("{difference:.3e}")],
    ];
    print!("{}", table(&["quantity", "value"], &rows));
    if difference.abs() > threshold {
        return Err(CliError::Mismatch(format!("policy and DP costs differ by {difference:.3e}, threshold {threshold:.3e}")));
    }
    Ok(())
}

fn experiment_config(run: &mut Run, path: &Path) -> Result<ExperimentConfig, CliError> {
    run.inputs.push(path.to_path_buf());
    let mut config = config::load_experiment(path)?;
    let cli = run.cli;
    if let Some(step) = cli.grid_step {
        config.grid_step = step;
    }
    if let Some(tail) = cli.tail_mass {
        config.tail_mass = tail;
    }
    if let Some(tol) = cli.tol {
        config.tol = tol;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    run.grid_step = config.grid_step;
    run.tail_mass = config.tail_mass;
    run.tol = config.tol;
    run.seed = config.seed;
    run.check_numerics()?;
    Ok(config)
}

fn experiment(run: &mut Run, kind: StudyKind, args: &StudyArgs) -> Result<(), CliError> {
    let config = experiment_config(run, &args.config)?;
    let (header, rows, points, console_rows, console_header, labels) = match kind {
        StudyKind::CvGap => {
            let result = cv_cost_gap_experiment(&config)?;
            let rows: Vec<Vec<String>> = result.iter().map(|r| vec![full(r.cv), full(r.cost_gap)]).collect();
            let points: Vec<(f64, f64)> = result.iter().map(|r| (r.cv, r.cost_gap)).collect();
            let console_rows: Vec<Vec<String>> = result
                .iter()
                .map(|r| {
                    vec![
                        console(r.cv),
                        console(r.cost_gap),
                        console(r.random.c_star),
                        console(r.random.total_cost),
                        console(r.baseline.c_star),
                        console(r.baseline.total_cost),
                    ]
                })
                .collect();
            (
                vec!["cv", "cost_gap"],
                rows,
                points,
                console_rows,
                vec!["cv", "cost_gap", "C*_random", "total_random", "C*_constant", "total_constant"],
                ("Cost gap versus demand CV", "coefficient of variation", "cost gap"),
            )
        }
        StudyKind::Aggregate => {
            let result = aggregation_experiment(&config)?;
            let rows: Vec<Vec<String>> = result.iter().map(|r| vec![r.group_size.to_string(), full(r.per_user_cost)]).collect();
            let points: Vec<(f64, f64)> = result.iter().map(|r| (r.group_size as f64, r.per_user_cost)).collect();
            let console_rows: Vec<Vec<String>> = result
                .iter()
                .map(|r| vec![r.group_size.to_string(), console(r.per_user_cost), console(r.group.c_star), console(r.group.total_cost)])
                .collect();
            (
                vec!["group_size", "per_user_cost"],
                rows,
                points,
                console_rows,
                vec!["group_size", "per_user_cost", "C*", "group_total"],
                ("Per-user daily cost versus group size", "users sharing storage", "cents per user per day"),
            )
        }
    };
    print!("{}", table(&console_header, &console_rows));
    run.write_output(&args.out, &csv_bytes(&header, &rows)?)?;
    if let Some(path) = &args.plot {
        let target = run.output_path(path);
        plot::line_chart(&target, labels.0, labels.1, labels.2, &points)?;
        run.outputs.push(target);
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let (name, result) = match &cli.command {
        Command::Tariff { action: TariffAction::Check { file } } => {
            let mut run = Run::new(cli, "tariff check");
            let r = tariff_check(&mut run, file);
            ("tariff check", r.and_then(|_| run.finish()))
        }
        Command::Demand { action: DemandAction::Inspect { file } } => {
            let mut run = Run::new(cli, "demand inspect");
            let r = run.check_numerics().and_then(|_| demand_inspect(&mut run, file));
            ("demand inspect", r.and_then(|_| run.finish()))
        }
        Command::Solve { tariff, demand, capacity, output, out } => {
            let mut run = Run::new(cli, "solve");
            let r = solve(&mut run, tariff, demand, *capacity, *output, out.as_deref());
            ("solve", r.and_then(|_| run.finish()))
        }
        Command::Size { tariff, demand, amortized_cost, mr_curve, curve_points } => {
            let mut run = Run::new(cli, "size");
            let r = size(&mut run, tariff, demand, *amortized_cost, mr_curve.as_deref(), *curve_points);
            ("size", r.and_then(|_| run.finish()))
        }
        Command::Oracle { action: OracleAction::Compare { tariff, demand, capacity, threshold } } => {
            let mut run = Run::new(cli, "oracle compare");
            let r = oracle_compare(&mut run, tariff, demand, *capacity, *threshold);
            ("oracle compare", r.and_then(|_| run.finish()))
        }
        Command::Experiment { study } => {
            let (kind, args, name) = match study {
                Study::CvGap(args) => (StudyKind::CvGap, args, "experiment cv-gap"),
                Study::Aggregate(args) => (StudyKind::Aggregate, args, "experiment aggregate"),
            };
            let mut run = Run::new(cli, name);
            let r = experiment(&mut run, kind, args);
            (name, r.and_then(|_| run.finish()))
        }
    };
    result.map_err(|e| {
        eprintln!("tou {name}: {e}");
        e
    })
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("TOU_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("TOU_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("tou: {e}");
        return ExitCode::from(e.exit_code());
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(e.exit_code()),
    }
}
