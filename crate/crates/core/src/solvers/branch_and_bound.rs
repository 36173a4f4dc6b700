use crate::cache::UnicastCache;
use crate::model::{Rational, SystemParameters};
use crate::storage::{validate_assignment, AssignmentMatrix};

use super::heuristic::heuristic_assign;
use super::SolverError;

#[derive(Debug, Clone)]
pub struct BnbOptions {
    pub bounding: bool,
    /// Known completion of the start matrix. When absent and the start is
    /// empty, the heuristic matrix is used.
    pub incumbent: Option<AssignmentMatrix>,
    pub heuristic_incumbent: bool,
    pub node_limit: Option<u64>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self { bounding: true, incumbent: None, heuristic_incumbent: true, node_limit: None }
    }
}

#[derive(Debug, Clone)]
pub struct BnbOutcome {
    pub matrix: AssignmentMatrix,
    pub load: Rational,
    /// Completed batch rows visited.
    pub nodes: u64,
    pub prunes: u64,
    /// False when the node limit cut the search short.
    pub exhausted: bool,
}

struct Search<'a> {
    cache: &'a mut UnicastCache,
    free_rows: Vec<usize>,
    bounding: bool,
    best_key: i128,
    best: Option<AssignmentMatrix>,
    best_in_tree: bool,
    nodes: u64,
    prunes: u64,
    node_limit: Option<u64>,
    aborted: bool,
}

impl Search<'_> {
    fn prune(&self, bound: i128) -> bool {
        if self.best_in_tree {
            bound >= self.best_key
        } else {
            bound > self.best_key
        }
    }

    fn descend(&mut self, depth: usize) {
        if self.aborted {
            return;
        }
        let Some(&batch) = self.free_rows.get(depth) else {
            let key = self.cache.key();
            if key < self.best_key || (key == self.best_key && !self.best_in_tree) {
                self.best_key = key;
                self.best = Some(self.cache.matrix().clone());
                self.best_in_tree = true;
            }
            return;
        };
        let remaining = self.cache.row_capacity(batch);
        let columns: Vec<(usize, u32)> = (0..self.cache.matrix().partitions())
            .map(|t| (t, self.cache.column_capacity(t)))
            .filter(|&(_, cap)| cap > 0)
            .collect();
        let mut suffix = vec![0u32; columns.len() + 1];
        for i in (0..columns.len()).rev() {
            suffix[i] = suffix[i + 1] + columns[i].1;
        }
        if suffix[0] < remaining {
            return;
        }
        self.fill(depth, batch, &columns, &suffix, 0, remaining);
    }

    /// Enumerates completions of row `batch` in increasing lexicographic order.
    fn fill(&mut self, depth: usize, batch: usize, columns: &[(usize, u32)], suffix: &[u32], ci: usize, remaining: u32) {
        if self.aborted {
            return;
        }
        if remaining == 0 {
            self.nodes += 1;
            if self.node_limit.is_some_and(|limit| self.nodes > limit) {
                self.aborted = true;
                return;
            }
            if self.bounding && self.prune(self.cache.bound_key()) {
                self.prunes += 1;
                return;
            }
            self.descend(depth + 1);
            return;
        }
        let (t, cap) = columns[ci];
        let lo = remaining.saturating_sub(suffix[ci + 1]);
        let hi = remaining.min(cap);
        for _ in 0..lo {
            self.cache.apply(batch, t, 1).expect("capacity checked");
        }
        for x in lo..=hi {
            if x > lo {
                self.cache.apply(batch, t, 1).expect("capacity checked");
            }
            self.fill(depth, batch, columns, suffix, ci + 1, remaining - x);
        }
        for _ in 0..hi {
            self.cache.undo().expect("matching apply");
        }
    }
}

fn check_start(params: &SystemParameters, start: &AssignmentMatrix) -> Result<(), SolverError> {
    let shape = (params.batch_count() as usize, params.partitions() as usize);
    if (start.batches(), start.partitions()) != shape {
        return Err(SolverError::Infeasible(format!(
            "matrix is {}x{}, expected {}x{}",
            start.batches(),
            start.partitions(),
            shape.0,
            shape.1
        )));
    }
    for b in 0..shape.0 {
        if start.row_sum(b) > params.batch_size() {
            return Err(SolverError::Infeasible(format!("batch {} holds more than {} rows", b + 1, params.batch_size())));
        }
    }
    for t in 0..shape.1 {
        if start.column_sum(t) > params.rows_per_partition() {
            return Err(SolverError::Infeasible(format!(
                "partition {} has more than {} rows assigned",
                t + 1,
                params.rows_per_partition()
            )));
        }
    }
    Ok(())
}

fn dominates(full: &AssignmentMatrix, partial: &AssignmentMatrix) -> bool {
    (0..partial.batches()).all(|b| (0..partial.partitions()).all(|t| full.get(b, t) >= partial.get(b, t)))
}

/// Exact completion of `start` minimizing the averaged load over all
/// finisher sets. Batches are filled in index order; among optimal
/// completions the row-major lexicographically smallest is returned.
pub fn branch_and_bound_assign(
    params: &SystemParameters,
    start: &AssignmentMatrix,
    cache: &mut UnicastCache,
    options: &BnbOptions,
) -> Result<BnbOutcome, SolverError> {
    check_start(params, start)?;
    let incumbent = match &options.incumbent {
        Some(m) => {
            if validate_assignment(params, m).is_err() || !dominates(m, start) {
                return Err(SolverError::InvalidIncumbent);
            }
            Some(m.clone())
        }
        None if options.heuristic_incumbent && start.total() == 0 => {
            Some(heuristic_assign(params).matrix).filter(|m| validate_assignment(params, m).is_ok())
        }
        None => None,
    };
    let best_key = match &incumbent {
        Some(m) => {
            cache.load_matrix(m)?;
            cache.key()
        }
        None => i128::MAX,
    };
    cache.load_matrix(start)?;

    let free_rows = (0..start.batches()).filter(|&b| cache.row_capacity(b) > 0).collect();
    let mut search = Search {
        cache,
        free_rows,
        bounding: options.bounding,
        best_key,
        best: incumbent,
        best_in_tree: false,
        nodes: 0,
        prunes: 0,
        node_limit: options.node_limit,
        aborted: false,
    };
    search.descend(0);
    let Search { cache, best, best_key, nodes, prunes, aborted, .. } = search;
    let matrix = best.ok_or_else(|| SolverError::Infeasible("search stopped before reaching any completion".into()))?;
    cache.load_matrix(&matrix)?;
    Ok(BnbOutcome { load: cache.key_to_load(best_key), matrix, nodes, prunes, exhausted: !aborted })
}
