//! Command implementations behind the `bdc` binary. Every command returns
//! its standard output as a string so it can be tested without a process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bdc_core::design_file::{parse_fraction, read_design, save_design, DesignFileError, DesignFormat};
use bdc_core::evaluation::{
    evaluate, format_float, per_finisher_set_loads, EvalError, EvalMode, FinisherSet, PerformanceReport,
};
use bdc_core::model::{load_mds_breakdown, strategy_thresholds, to_f64, ParameterError, Strategy};
use bdc_core::shuffle::{best_strategy_trace, simulate_shuffle};
use bdc_core::solvers::{random_assign, run_solver, SolverConfig, SolverError, SolverKind};
use bdc_core::{Fraction, RawParameters, StorageDesign, SystemParameters};
use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid parameters: {0}")]
    Params(#[from] ParameterError),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Params(_) | CliError::Validation(_) | CliError::Eval(_) => EXIT_VALIDATION,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

impl From<DesignFileError> for CliError {
    fn from(e: DesignFileError) -> Self {
        match e {
            DesignFileError::Io { path, source } => CliError::Io { path, message: source.to_string() },
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Debug, Parser)]
#[command(name = "bdc", version, about = "Block-diagonal coded distributed matrix multiplication designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check parameters and print derived quantities.
    Validate(ParamArgs),
    /// Produce an assignment matrix and write the design file.
    Solve(SolveArgs),
    /// Report load and delay of a design.
    Evaluate(EvaluateArgs),
    /// Print the message-level shuffle trace for one finisher set.
    Simulate(SimulateArgs),
    /// Evaluate a range of partition counts or system sizes as CSV.
    Sweep(SweepArgs),
}

/// Parameter file plus per-field overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ParamArgs {
    /// TOML file with keys m, n, N, K, mu ("p/q"), r, T.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long = "m")]
    pub m: Option<u64>,
    #[arg(long = "n")]
    pub n: Option<u64>,
    #[arg(long = "N")]
    pub vectors: Option<u64>,
    #[arg(long = "K")]
    pub servers: Option<u64>,
    /// Storage fraction as a rational string, e.g. 1/3.
    #[arg(long = "mu")]
    pub mu: Option<String>,
    #[arg(long = "r")]
    pub r: Option<u64>,
    #[arg(long = "T")]
    pub partitions: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamFile {
    m: Option<u64>,
    n: Option<u64>,
    #[serde(rename = "N")]
    vectors: Option<u64>,
    #[serde(rename = "K")]
    servers: Option<u64>,
    mu: Option<String>,
    r: Option<u64>,
    #[serde(rename = "T")]
    partitions: Option<u64>,
}

impl ParamArgs {
    /// File values overridden by flags; no validation yet.
    pub fn raw(&self) -> Result<RawParameters, CliError> {
        let file = match &self.params {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                toml::from_str::<ParamFile>(&text)
                    .map_err(|e| CliError::Validation(format!("{}: {}", path.display(), e.message())))?
            }
            None => ParamFile::default(),
        };
        let pick = |flag: Option<u64>, file: Option<u64>, name: &str| {
            flag.or(file).ok_or_else(|| CliError::Validation(format!("missing parameter `{name}`")))
        };
        let mu_text = self
            .mu
            .clone()
            .or(file.mu)
            .ok_or_else(|| CliError::Validation("missing parameter `mu`".into()))?;
        let mu: Fraction = parse_fraction(&mu_text).map_err(|e| CliError::Validation(format!("mu: {e}")))?;
        Ok(RawParameters {
            source_rows: pick(self.m, file.m, "m")?,
            columns: pick(self.n, file.n, "n")?,
            vectors: pick(self.vectors, file.vectors, "N")?,
            servers: pick(self.servers, file.servers, "K")?,
            mu,
            coded_rows: pick(self.r, file.r, "r")?,
            partitions: pick(self.partitions, file.partitions, "T")?,
        })
    }

    pub fn load(&self) -> Result<SystemParameters, CliError> {
        Ok(self.raw()?.validate()?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// heuristic, bnb, hybrid, random or exhaustive.
    #[arg(long, default_value = "heuristic")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Design file to write; `.json` selects the structured format.
    #[arg(long)]
    pub out: PathBuf,
    /// Solver log path (default: the design path with `.log` appended).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// `exhaustive` or `sampled:COUNT`.
    #[arg(long, default_value = "exhaustive")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub design: PathBuf,
    /// Comma-separated finisher set, e.g. 1,2,3,4.
    #[arg(long = "q")]
    pub finisher_set: String,
    /// `best`, `primary`, `extended`, or a multicast threshold.
    #[arg(long, default_value = "best")]
    pub strategy: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    /// Partition counts to evaluate.
    #[arg(long, value_delimiter = ',', conflicts_with = "k_values")]
    pub t_values: Vec<u64>,
    /// Server counts to evaluate, scaling the base point with fixed
    /// `mu q`, `mu m`, `m/T` and `m/r`.
    #[arg(long, value_delimiter = ',')]
    pub k_values: Vec<u64>,
    #[arg(long, default_value = "heuristic")]
    pub solver: SolverKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "exhaustive")]
    pub mode: String,
    /// Also report the mean over this many random assignments per point.
    #[arg(long)]
    pub random_baseline: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// `exhaustive` or `sampled:COUNT`; `seed` applies to sampling.
pub fn parse_mode(text: &str, seed: u64) -> Result<EvalMode, CliError> {
    match text.split_once(':') {
        None if text == "exhaustive" => Ok(EvalMode::Exhaustive),
        Some(("sampled", count)) => {
            let count: usize =
                count.parse().map_err(|_| CliError::Usage(format!("bad sample count in mode `{text}`")))?;
            if count == 0 {
                return Err(CliError::Usage("sample count must be at least 1".into()));
            }
            Ok(EvalMode::Sampled { count, seed })
        }
        _ => Err(CliError::Usage(format!("mode must be `exhaustive` or `sampled:N`, got `{text}`"))),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    if let Some(path) = path {
        std::fs::write(path, text).map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

/// Derived quantities, one `name: value` line each.
pub fn cmd_validate(args: &ParamArgs) -> Result<String, CliError> {
    let p = args.load()?;
    let mds = load_mds_breakdown(&p).map_err(EvalError::from)?;
    let thresholds = strategy_thresholds(&p).map_err(EvalError::from)?;
    let mut out = String::new();
    let rows: Vec<(&str, String)> = vec![
        ("m", p.source_rows().to_string()),
        ("n", p.columns().to_string()),
        ("N", p.vectors().to_string()),
        ("K", p.servers().to_string()),
        ("mu", format!("{}/{}", p.mu().numer(), p.mu().denom())),
        ("r", p.coded_rows().to_string()),
        ("T", p.partitions().to_string()),
        ("q", p.q().to_string()),
        ("mu_q", p.mu_q().to_string()),
        ("mu_m", p.mu_m().to_string()),
        ("batch_count", p.batch_count().to_string()),
        ("batch_size", p.batch_size().to_string()),
        ("rows_per_partition", p.rows_per_partition().to_string()),
        ("decode_threshold", p.decode_threshold().to_string()),
        ("vectors_per_server", p.vectors_per_server().to_string()),
        ("s_q", thresholds[0].1.to_string()),
        ("L_MDS", mds.load.to_string()),
        ("L_MDS_strategy", mds.strategy.to_string()),
    ];
    for (name, value) in rows {
        writeln!(out, "{name:<20} {value}").unwrap();
    }
    Ok(out)
}

/// Runs a solver, writes the design and its log, returns the log.
pub fn cmd_solve(args: &SolveArgs) -> Result<String, CliError> {
    let p = args.params.load()?;
    let config = SolverConfig::new(args.solver, &p)?.with_seed(args.seed);
    let run = run_solver(&p, &config)?;
    let design = StorageDesign::new(p, run.matrix).map_err(SolverError::from)?;
    let json = args.out.extension().is_some_and(|e| e == "json");
    let text = if json {
        save_design(&design, DesignFormat::Json)
    } else {
        format!("# solver={} seed={}\n{}", args.solver, args.seed, save_design(&design, DesignFormat::Lines))
    };
    std::fs::write(&args.out, text).map_err(|e| io_error(&args.out, e))?;
    let mut log = run.log.to_kv();
    if run.log.load.is_none() && design.params().finisher_set_count().is_ok_and(|c| c <= 100_000) {
        let load = bdc_core::evaluation::load_bdc(&design, EvalMode::Exhaustive)?.load;
        writeln!(log, "load={load}").unwrap();
    }
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut name = args.out.clone().into_os_string();
        name.push(".log");
        PathBuf::from(name)
    });
    std::fs::write(&log_path, &log).map_err(|e| io_error(&log_path, e))?;
    Ok(log)
}

/// Report as `key=value` lines, plus a per-finisher-set breakdown for
/// exhaustive runs over at most 100 sets.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let design = read_design(&args.design)?;
    let mode = parse_mode(&args.mode, args.seed)?;
    let report = evaluate(&design, mode)?;
    let mut out = report.to_kv();
    if let EvalMode::Sampled { count, seed } = mode {
        writeln!(out, "samples={count}\nsample_seed={seed}").unwrap();
    }
    if mode == EvalMode::Exhaustive && design.params().finisher_set_count().is_ok_and(|c| c <= 100) {
        writeln!(out, "# per finisher set, strategy {} (threshold {})", report.strategy, report.threshold).unwrap();
        for (q, load) in per_finisher_set_loads(&design, report.threshold)? {
            writeln!(out, "Q={q} load={load} ({})", format_float(to_f64(&load))).unwrap();
        }
    }
    write_output(args.out.as_deref(), &out)?;
    Ok(out)
}

/// Shuffle trace log for one finisher set.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let design = read_design(&args.design)?;
    let p = design.params();
    let servers: Vec<u32> = args
        .finisher_set
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Validation(format!("bad finisher set `{}`", args.finisher_set)))?;
    let q = FinisherSet::new(p, servers)?;
    let thresholds = strategy_thresholds(p).map_err(EvalError::from)?;
    let trace = match args.strategy.as_str() {
        "best" => best_strategy_trace(&design, &q)?,
        "primary" => simulate_shuffle(&design, &q, thresholds[0].1)?,
        "extended" => {
            let s = thresholds
                .iter()
                .find(|(st, _)| *st == Strategy::Extended)
                .ok_or_else(|| CliError::Validation("extended strategy unavailable (s_q = 1)".into()))?
                .1;
            simulate_shuffle(&design, &q, s)?
        }
        other => {
            let s: u64 = other
                .parse()
                .map_err(|_| CliError::Usage(format!("strategy must be best, primary, extended or a number, got `{other}`")))?;
            simulate_shuffle(&design, &q, s)?
        }
    };
    let log = trace.to_log();
    write_output(args.out.as_deref(), &log)?;
    Ok(log)
}

/// Which variable a sweep moves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SweepVariable {
    Partitions(Vec<u64>),
    /// Server counts; `mu q`, `mu m`, `m/T` and the code rate `m/r` stay at
    /// the base point's values and `N = q`.
    Servers(Vec<u64>),
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: RawParameters,
    pub variable: SweepVariable,
    pub solver: SolverKind,
    pub seed: u64,
    pub mode: EvalMode,
    pub random_baseline: Option<usize>,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: u64,
    pub solver: String,
    pub seed: u64,
    pub load: BigRational,
    pub load_norm: f64,
    pub d_map: f64,
    pub d_reduce: f64,
    pub d: f64,
    pub d_norm: f64,
    pub g_mean: f64,
}

/// Server-count scaling of the base point.
pub fn scale_to_servers(base: &SystemParameters, servers: u64) -> Result<RawParameters, CliError> {
    let rate = Fraction::new(base.source_rows(), base.coded_rows());
    let mu_q = base.mu_q();
    let mu_m = base.mu_m();
    let per_partition = base.decode_threshold();
    let q = Fraction::from_integer(servers) * rate;
    if !q.is_integer() {
        return Err(CliError::Validation(format!("K={servers}: q = K m/r is not an integer")));
    }
    let q = q.to_integer();
    if q < mu_q {
        return Err(CliError::Validation(format!("K={servers}: q={q} is below mu q={mu_q}")));
    }
    let m = mu_m * q;
    if !m.is_multiple_of(mu_q) {
        return Err(CliError::Validation(format!("K={servers}: m = mu m q / mu q is not an integer")));
    }
    let m = m / mu_q;
    let r = Fraction::from_integer(m) / rate;
    if !r.is_integer() || !m.is_multiple_of(per_partition) {
        return Err(CliError::Validation(format!("K={servers}: r or T is not an integer")));
    }
    Ok(RawParameters {
        source_rows: m,
        columns: base.columns(),
        vectors: q,
        servers,
        mu: Fraction::new(mu_q, q),
        coded_rows: r.to_integer(),
        partitions: m / per_partition,
    })
}

impl SweepSpec {
    pub fn from_args(args: &SweepArgs) -> Result<Self, CliError> {
        let variable = match (args.t_values.is_empty(), args.k_values.is_empty()) {
            (false, true) => SweepVariable::Partitions(args.t_values.clone()),
            (true, false) => SweepVariable::Servers(args.k_values.clone()),
            _ => return Err(CliError::Usage("give exactly one of --t-values or --k-values".into())),
        };
        Ok(Self {
            base: args.params.raw()?,
            variable,
            solver: args.solver,
            seed: args.seed,
            mode: parse_mode(&args.mode, args.seed)?,
            random_baseline: args.random_baseline,
        })
    }

    /// Validated parameters of every point, in sweep order.
    pub fn points(&self) -> Result<Vec<(u64, SystemParameters)>, CliError> {
        match &self.variable {
            SweepVariable::Partitions(ts) => ts
                .iter()
                .map(|&t| {
                    let raw = RawParameters { partitions: t, ..self.base };
                    raw.validate().map(|p| (t, p)).map_err(|e| CliError::Validation(format!("T={t}: {e}")))
                })
                .collect(),
            SweepVariable::Servers(ks) => {
                let base = self.base.validate()?;
                ks.iter()
                    .map(|&k| {
                        let raw = scale_to_servers(&base, k)?;
                        raw.validate().map(|p| (k, p)).map_err(|e| CliError::Validation(format!("K={k}: {e}")))
                    })
                    .collect()
            }
        }
    }

    pub fn variable_name(&self) -> &'static str {
        match self.variable {
            SweepVariable::Partitions(_) => "T",
            SweepVariable::Servers(_) => "K",
        }
    }
}

fn row_from_report(value: u64, solver: String, seed: u64, r: &PerformanceReport) -> SweepRow {
    SweepRow {
        value,
        solver,
        seed,
        load: r.load.clone(),
        load_norm: to_f64(&r.load_norm()),
        d_map: r.d_map,
        d_reduce: r.d_reduce,
        d: r.d,
        d_norm: r.d_norm(),
        g_mean: r.g_mean(),
    }
}

/// Evaluates every point in parallel; rows come back in sweep order, the
/// random-baseline mean (when requested) right after its point.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, CliError> {
    let points = spec.points()?;
    let per_point: Vec<Result<Vec<SweepRow>, CliError>> = points
        .par_iter()
        .map(|(value, p)| {
            let config = SolverConfig::new(spec.solver, p)?.with_seed(spec.seed);
            let run = run_solver(p, &config)?;
            let design = StorageDesign::new(p.clone(), run.matrix).map_err(SolverError::from)?;
            let report = evaluate(&design, spec.mode)?;
            let mut rows = vec![row_from_report(*value, spec.solver.to_string(), spec.seed, &report)];
            if let Some(count) = spec.random_baseline.filter(|&c| c > 0) {
                let reports: Vec<PerformanceReport> = (0..count as u64)
                    .into_par_iter()
                    .map(|i| {
                        let design = StorageDesign::new(p.clone(), random_assign(p, spec.seed + i)).map_err(SolverError::from)?;
                        Ok(evaluate(&design, spec.mode)?)
                    })
                    .collect::<Result<_, CliError>>()?;
                let n = count as f64;
                let load: BigRational = reports.iter().map(|r| r.load.clone()).sum::<BigRational>()
                    / BigRational::from_integer((count as u64).into());
                let mean = |f: &dyn Fn(&PerformanceReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
                rows.push(SweepRow {
                    value: *value,
                    solver: format!("random_mean_{count}"),
                    seed: spec.seed,
                    load_norm: if report.load_mds == BigRational::from_integer(0.into()) {
                        f64::NAN
                    } else {
                        to_f64(&(&load / &report.load_mds))
                    },
                    load,
                    d_map: mean(&|r| r.d_map),
                    d_reduce: mean(&|r| r.d_reduce),
                    d: mean(&|r| r.d),
                    d_norm: mean(&|r| r.d_norm()),
                    g_mean: mean(&|r| r.g_mean()),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for point in per_point {
        rows.extend(point?);
    }
    Ok(rows)
}

pub const SWEEP_COLUMNS: [&str; 9] = ["L", "L_norm", "D_map", "D_reduce", "D", "D_norm", "g_mean", "solver", "seed"];

/// CSV with a header row; first column is the swept variable.
pub fn sweep_csv(variable: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{variable},{}\n", SWEEP_COLUMNS.join(","));
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.value,
            format_float(to_f64(&r.load)),
            format_float(r.load_norm),
            format_float(r.d_map),
            format_float(r.d_reduce),
            format_float(r.d),
            format_float(r.d_norm),
            format_float(r.g_mean),
            r.solver,
            r.seed
        )
        .unwrap();
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<String, CliError> {
    let spec = SweepSpec::from_args(args)?;
    let rows = run_sweep(&spec)?;
    let csv = sweep_csv(spec.variable_name(), &rows);
    write_output(args.out.as_deref(), &csv)?;
    Ok(csv)
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
