//! Assignment-matrix solvers.

mod branch_and_bound;
mod exhaustive;
mod heuristic;
mod hybrid;
mod random;

use std::fmt;
use std::time::Duration;

use thiserror::Error;

use crate::cache::CacheError;
use crate::evaluation::EvalError;
use crate::model::{Rational, SystemParameters};
use crate::storage::{AssignmentMatrix, DesignError, Violation};

pub use branch_and_bound::{branch_and_bound_assign, BnbOptions, BnbOutcome};
pub use exhaustive::{exhaustive_assign, exhaustive_complete, ExhaustiveOutcome, DEFAULT_ENUMERATION_CEILING};
pub use heuristic::{heuristic_assign, HeuristicAssignment};
pub use hybrid::{hybrid_assign, HybridOutcome};
pub use random::random_assign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Heuristic,
    BranchAndBound,
    Hybrid,
    Random,
    Exhaustive,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Heuristic,
        SolverKind::BranchAndBound,
        SolverKind::Hybrid,
        SolverKind::Random,
        SolverKind::Exhaustive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Heuristic => "heuristic",
            SolverKind::BranchAndBound => "bnb",
            SolverKind::Hybrid => "hybrid",
            SolverKind::Random => "random",
            SolverKind::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heuristic" => Ok(SolverKind::Heuristic),
            "bnb" | "branch_and_bound" | "branch-and-bound" => Ok(SolverKind::BranchAndBound),
            "hybrid" => Ok(SolverKind::Hybrid),
            "random" => Ok(SolverKind::Random),
            "exhaustive" => Ok(SolverKind::Exhaustive),
            other => Err(format!("unknown solver '{other}'")),
        }
    }
}

/// Default initial hybrid perturbation size, before capping at the batch size.
pub const DEFAULT_DECREMENT_START: u64 = 4;
/// Default largest hybrid perturbation size.
pub const DEFAULT_DECREMENT_CAP: u64 = 16;
/// Default node limit of each hybrid re-completion.
pub const DEFAULT_HYBRID_NODE_LIMIT: u64 = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub seed: u64,
    /// Minimum mean improvement per hybrid iteration, in load units.
    pub threshold: Rational,
    /// Entries decremented per hybrid iteration at the start.
    pub decrement_count: u64,
    /// The perturbation doubles on every stall up to this size; the search
    /// stops at the first stall at this size.
    pub max_decrement_count: u64,
    /// Iterations averaged when testing the stopping threshold.
    pub window: usize,
    pub max_iterations: Option<u64>,
    pub time_budget: Option<Duration>,
    /// Node limit for each hybrid re-completion.
    pub node_limit: Option<u64>,
}

impl SolverConfig {
    /// Defaults tied to the objective's quantum: threshold is one unicast
    /// value averaged over all finisher sets; perturbations start at one
    /// batch (at most a few entries) and may grow past it when the search
    /// stalls, up to a cap that keeps re-completions tractable.
    pub fn new(kind: SolverKind, params: &SystemParameters) -> Result<Self, SolverError> {
        let sets = params.finisher_set_count().map_err(|e| SolverError::Cache(CacheError::Overflow(e)))?;
        let threshold = Rational::new(1.into(), (num_bigint::BigInt::from(params.normalizer())) * num_bigint::BigInt::from(sets));
        Ok(Self {
            kind,
            seed: 0,
            threshold,
            decrement_count: params.batch_size().min(DEFAULT_DECREMENT_START),
            max_decrement_count: DEFAULT_DECREMENT_CAP.max(params.batch_size().min(DEFAULT_DECREMENT_START)),
            window: 10,
            max_iterations: None,
            time_budget: None,
            node_limit: Some(DEFAULT_HYBRID_NODE_LIMIT),
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.threshold <= Rational::from_integer(0.into()) {
            return Err(SolverError::InvalidConfig("threshold must be positive".into()));
        }
        if self.decrement_count == 0 {
            return Err(SolverError::InvalidConfig("decrement count must be at least 1".into()));
        }
        if self.max_decrement_count < self.decrement_count {
            return Err(SolverError::InvalidConfig("max decrement count below decrement count".into()));
        }
        if self.window == 0 {
            return Err(SolverError::InvalidConfig("window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("infeasible start: {0}")]
    Infeasible(String),
    #[error("heuristic produced an invalid matrix ({} violations)", .0.len())]
    HeuristicInvalid(Vec<Violation>),
    #[error("incumbent is not a valid completion of the start matrix")]
    InvalidIncumbent,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("enumeration exceeds the ceiling of {0} completions")]
    TooLarge(u64),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Statistics of one solver run, printed as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverLog {
    pub solver: SolverKind,
    pub seed: u64,
    pub iterations: u64,
    pub nodes: u64,
    pub prunes: u64,
    pub wall_time: Duration,
    pub load: Option<Rational>,
    pub exhausted: bool,
}

impl SolverLog {
    fn new(solver: SolverKind, seed: u64) -> Self {
        Self { solver, seed, iterations: 0, nodes: 0, prunes: 0, wall_time: Duration::ZERO, load: None, exhausted: true }
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("solver={}\n", self.solver));
        out.push_str(&format!("seed={}\n", self.seed));
        out.push_str(&format!("iterations={}\n", self.iterations));
        out.push_str(&format!("nodes={}\n", self.nodes));
        out.push_str(&format!("prunes={}\n", self.prunes));
        out.push_str(&format!("search_complete={}\n", self.exhausted));
        out.push_str(&format!("wall_time_s={:.6}\n", self.wall_time.as_secs_f64()));
        if let Some(load) = &self.load {
            out.push_str(&format!("load={load}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub matrix: AssignmentMatrix,
    pub log: SolverLog,
}

/// Runs the configured solver from an empty matrix.
pub fn run_solver(params: &SystemParameters, config: &SolverConfig) -> Result<SolverRun, SolverError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let mut log = SolverLog::new(config.kind, config.seed);
    let matrix = match config.kind {
        SolverKind::Heuristic => {
            let h = heuristic_assign(params);
            if !h.violations.is_empty() {
                return Err(SolverError::HeuristicInvalid(h.violations));
            }
            h.matrix
        }
        SolverKind::Random => random_assign(params, config.seed),
        SolverKind::BranchAndBound => {
            let mut cache = crate::cache::UnicastCache::build(params)?;
            let start = AssignmentMatrix::for_params(params);
            let options = BnbOptions::default();
            let out = branch_and_bound_assign(params, &start, &mut cache, &options)?;
            log.nodes = out.nodes;
            log.prunes = out.prunes;
            log.iterations = 1;
            log.exhausted = out.exhausted;
            log.load = Some(out.load);
            out.matrix
        }
        SolverKind::Hybrid => {
            let out = hybrid_assign(params, config)?;
            log.nodes = out.nodes;
            log.prunes = out.prunes;
            log.iterations = out.iterations;
            log.load = out.history.last().cloned();
            out.matrix
        }
        SolverKind::Exhaustive => {
            let out = exhaustive_assign(params, DEFAULT_ENUMERATION_CEILING)?;
            log.nodes = out.completions;
            log.load = Some(out.load);
            out.matrix
        }
    };
    log.wall_time = started.elapsed();
    Ok(SolverRun { matrix, log })
}
