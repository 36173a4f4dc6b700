use crate::evaluation::{load_bdc, EvalMode};
use crate::model::{Rational, SystemParameters};
use crate::storage::{AssignmentMatrix, StorageDesign};

use super::SolverError;

pub const DEFAULT_ENUMERATION_CEILING: u64 = 200_000;

#[derive(Debug, Clone)]
pub struct ExhaustiveOutcome {
    pub matrix: AssignmentMatrix,
    pub load: Rational,
    pub completions: u64,
}

struct Enumerator<'a> {
    params: &'a SystemParameters,
    matrix: AssignmentMatrix,
    row_cap: Vec<u32>,
    col_cap: Vec<u32>,
    ceiling: u64,
    completions: u64,
    best: Option<(Rational, AssignmentMatrix)>,
    error: Option<SolverError>,
}

impl Enumerator<'_> {
    fn visit(&mut self, b: usize, t: usize) {
        if self.error.is_some() {
            return;
        }
        if b == self.matrix.batches() {
            self.leaf();
            return;
        }
        if self.row_cap[b] == 0 {
            self.visit(b + 1, 0);
            return;
        }
        if t == self.matrix.partitions() {
            return;
        }
        let later: u32 = self.col_cap[t + 1..].iter().sum();
        let lo = self.row_cap[b].saturating_sub(later);
        let hi = self.row_cap[b].min(self.col_cap[t]);
        for x in lo..=hi {
            self.row_cap[b] -= x;
            self.col_cap[t] -= x;
            let before = self.matrix.get(b, t);
            self.matrix.set(b, t, before + x);
            self.visit(b, t + 1);
            self.matrix.set(b, t, before);
            self.row_cap[b] += x;
            self.col_cap[t] += x;
        }
    }

    fn leaf(&mut self) {
        self.completions += 1;
        if self.completions > self.ceiling {
            self.error = Some(SolverError::TooLarge(self.ceiling));
            return;
        }
        let design = match StorageDesign::new(self.params.clone(), self.matrix.clone()) {
            Ok(d) => d,
            Err(e) => {
                self.error = Some(e.into());
                return;
            }
        };
        match load_bdc(&design, EvalMode::Exhaustive) {
            Ok(load) => {
                if self.best.as_ref().is_none_or(|(best, _)| load.load < *best) {
                    self.best = Some((load.load, self.matrix.clone()));
                }
            }
            Err(e) => self.error = Some(e.into()),
        }
    }
}

/// Global optimum over every completion of `start`, each evaluated from
/// scratch. Ties resolve to the row-major lexicographically smallest matrix.
pub fn exhaustive_complete(
    params: &SystemParameters,
    start: &AssignmentMatrix,
    ceiling: u64,
) -> Result<ExhaustiveOutcome, SolverError> {
    let batches = params.batch_count() as usize;
    let partitions = params.partitions() as usize;
    if (start.batches(), start.partitions()) != (batches, partitions) {
        return Err(SolverError::Infeasible("matrix shape does not match the parameters".into()));
    }
    let mut row_cap = Vec::with_capacity(batches);
    for b in 0..batches {
        let fill = start.row_sum(b);
        if fill > params.batch_size() {
            return Err(SolverError::Infeasible(format!("batch {} is overfull", b + 1)));
        }
        row_cap.push((params.batch_size() - fill) as u32);
    }
    let mut col_cap = Vec::with_capacity(partitions);
    for t in 0..partitions {
        let fill = start.column_sum(t);
        if fill > params.rows_per_partition() {
            return Err(SolverError::Infeasible(format!("partition {} is overfull", t + 1)));
        }
        col_cap.push((params.rows_per_partition() - fill) as u32);
    }
    let mut e = Enumerator {
        params,
        matrix: start.clone(),
        row_cap,
        col_cap,
        ceiling,
        completions: 0,
        best: None,
        error: None,
    };
    e.visit(0, 0);
    if let Some(err) = e.error {
        return Err(err);
    }
    let (load, matrix) = e.best.ok_or_else(|| SolverError::Infeasible("no completion exists".into()))?;
    Ok(ExhaustiveOutcome { matrix, load, completions: e.completions })
}

pub fn exhaustive_assign(params: &SystemParameters, ceiling: u64) -> Result<ExhaustiveOutcome, SolverError> {
    exhaustive_complete(params, &AssignmentMatrix::for_params(params), ceiling)
}
