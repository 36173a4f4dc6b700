//! Storage designs: batch labels, the assignment matrix and its validity
//! conditions, and the sequential mapping from matrix entries to coded rows.

use std::fmt;
use std::ops::RangeInclusive;

use itertools::Itertools;
use thiserror::Error;

use crate::model::SystemParameters;

/// The set of servers (1-based, strictly increasing) that store a batch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BatchLabel(Vec<u32>);

impl BatchLabel {
    pub fn new(mut servers: Vec<u32>) -> Self {
        servers.sort_unstable();
        servers.dedup();
        BatchLabel(servers)
    }

    pub fn servers(&self) -> &[u32] {
        &self.0
    }

    pub fn contains(&self, server: u32) -> bool {
        self.0.binary_search(&server).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for BatchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.iter().join(","))
    }
}

/// All `C(K, mu q)` labels in lexicographic order. The position of a label
/// in this list is its batch index.
pub fn enumerate_batch_labels(servers: u64, mu_q: u64) -> Vec<BatchLabel> {
    (1..=servers as u32)
        .combinations(mu_q as usize)
        .map(BatchLabel)
        .collect()
}

/// Dense `batches x partitions` matrix of nonnegative row counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssignmentMatrix {
    batches: usize,
    partitions: usize,
    entries: Vec<u32>,
}

impl AssignmentMatrix {
    pub fn zeros(batches: usize, partitions: usize) -> Self {
        Self { batches, partitions, entries: vec![0; batches * partitions] }
    }

    pub fn for_params(p: &SystemParameters) -> Self {
        Self::zeros(p.batch_count() as usize, p.partitions() as usize)
    }

    pub fn from_rows(rows: Vec<Vec<u32>>) -> Result<Self, DesignError> {
        let partitions = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != partitions) {
            return Err(DesignError::Shape {
                detail: format!("row {} has {} entries, expected {}", bad + 1, rows[bad].len(), partitions),
            });
        }
        let batches = rows.len();
        Ok(Self { batches, partitions, entries: rows.into_iter().flatten().collect() })
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn get(&self, batch: usize, partition: usize) -> u32 {
        self.entries[batch * self.partitions + partition]
    }

    pub fn set(&mut self, batch: usize, partition: usize, value: u32) {
        self.entries[batch * self.partitions + partition] = value;
    }

    pub(crate) fn entry_mut(&mut self, batch: usize, partition: usize) -> &mut u32 {
        &mut self.entries[batch * self.partitions + partition]
    }

    pub fn row(&self, batch: usize) -> &[u32] {
        &self.entries[batch * self.partitions..(batch + 1) * self.partitions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.entries.chunks(self.partitions.max(1)).take(self.batches)
    }

    pub fn row_sum(&self, batch: usize) -> u64 {
        self.row(batch).iter().map(|&v| u64::from(v)).sum()
    }

    pub fn column_sum(&self, partition: usize) -> u64 {
        (0..self.batches).map(|b| u64::from(self.get(b, partition))).sum()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&v| u64::from(v)).sum()
    }

    /// `(partition, count)` pairs with a nonzero count in `batch`.
    pub fn nonzeros(&self, batch: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.row(batch).iter().copied().enumerate().filter(|(_, c)| *c > 0)
    }
}

/// A violated assignment condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Shape { batches: usize, partitions: usize, expected_batches: u64, expected_partitions: u64 },
    /// Condition 1: row sum differs from the batch size. Batch is 1-based.
    RowSum { batch: usize, actual: u64, expected: u64 },
    /// Condition 2: column sum differs from the rows per partition. Partition is 1-based.
    ColumnSum { partition: usize, actual: u64, expected: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { batches, partitions, expected_batches, expected_partitions } => write!(
                f,
                "matrix is {batches}x{partitions}, expected {expected_batches}x{expected_partitions}"
            ),
            Violation::RowSum { batch, actual, expected } => {
                write!(f, "batch {batch} holds {actual} rows, expected batch size {expected}")
            }
            Violation::ColumnSum { partition, actual, expected } => write!(
                f,
                "partition {partition} has {actual} rows assigned, expected {expected}"
            ),
        }
    }
}

/// Checks both assignment conditions and reports every violated row and column.
pub fn validate_assignment(p: &SystemParameters, matrix: &AssignmentMatrix) -> Result<(), Vec<Violation>> {
    if matrix.batches() as u64 != p.batch_count() || matrix.partitions() as u64 != p.partitions() {
        return Err(vec![Violation::Shape {
            batches: matrix.batches(),
            partitions: matrix.partitions(),
            expected_batches: p.batch_count(),
            expected_partitions: p.partitions(),
        }]);
    }
    let mut violations = Vec::new();
    for b in 0..matrix.batches() {
        let actual = matrix.row_sum(b);
        if actual != p.batch_size() {
            violations.push(Violation::RowSum { batch: b + 1, actual, expected: p.batch_size() });
        }
    }
    for t in 0..matrix.partitions() {
        let actual = matrix.column_sum(t);
        if actual != p.rows_per_partition() {
            violations.push(Violation::ColumnSum {
                partition: t + 1,
                actual,
                expected: p.rows_per_partition(),
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DesignError {
    #[error("malformed assignment matrix: {detail}")]
    Shape { detail: String },
    #[error("assignment violates {} condition(s): {}", .0.len(), .0.iter().join("; "))]
    Invalid(Vec<Violation>),
}

/// Parameters, lexicographic batch labels and a valid assignment matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageDesign {
    params: SystemParameters,
    labels: Vec<BatchLabel>,
    assignment: AssignmentMatrix,
}

impl StorageDesign {
    pub fn new(params: SystemParameters, assignment: AssignmentMatrix) -> Result<Self, DesignError> {
        validate_assignment(&params, &assignment).map_err(DesignError::Invalid)?;
        let labels = enumerate_batch_labels(params.servers(), params.mu_q());
        Ok(Self { params, labels, assignment })
    }

    pub fn params(&self) -> &SystemParameters {
        &self.params
    }

    pub fn labels(&self) -> &[BatchLabel] {
        &self.labels
    }

    pub fn assignment(&self) -> &AssignmentMatrix {
        &self.assignment
    }

    pub fn into_assignment(self) -> AssignmentMatrix {
        self.assignment
    }
}

/// Coded rows of one partition held by a batch, 1-based and inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowRange {
    pub partition: usize,
    pub rows: RangeInclusive<u32>,
}

/// Coded rows stored in `batch` (0-based) under the sequential convention:
/// rows of each partition are handed out in index order as batches are
/// scanned top to bottom. Partitions in the result are 1-based.
pub fn rows_of(design: &StorageDesign, batch: usize) -> Vec<RowRange> {
    let matrix = design.assignment();
    let mut out = Vec::new();
    for t in 0..matrix.partitions() {
        let count = matrix.get(batch, t);
        if count == 0 {
            continue;
        }
        let before: u32 = (0..batch).map(|b| matrix.get(b, t)).sum();
        out.push(RowRange { partition: t + 1, rows: before + 1..=before + count });
    }
    out
}

/// [`rows_of`] for every batch at once, in linear time.
pub fn all_rows(design: &StorageDesign) -> Vec<Vec<RowRange>> {
    let matrix = design.assignment();
    let mut next = vec![1u32; matrix.partitions()];
    (0..matrix.batches())
        .map(|b| {
            matrix
                .nonzeros(b)
                .map(|(t, count)| {
                    let first = next[t];
                    next[t] += count;
                    RowRange { partition: t + 1, rows: first..=first + count - 1 }
                })
                .collect()
        })
        .collect()
}
