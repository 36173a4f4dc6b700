use crate::model::SystemParameters;
use crate::storage::{validate_assignment, AssignmentMatrix, Violation};

/// Output of [`heuristic_assign`]; `violations` is empty for a valid matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicAssignment {
    pub matrix: AssignmentMatrix,
    pub violations: Vec<Violation>,
}

impl HeuristicAssignment {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Uniform fill of `gamma = floor(batch_size / T)` per entry, then the
/// remaining `d` rows of every batch dealt round-robin over partitions with
/// a single counter running across batches.
pub fn heuristic_assign(p: &SystemParameters) -> HeuristicAssignment {
    let batches = p.batch_count() as usize;
    let partitions = p.partitions() as usize;
    let gamma = p.coded_rows() / (p.batch_count() * p.partitions());
    let d = p.batch_size() - gamma * p.partitions();
    let mut matrix = AssignmentMatrix::zeros(batches, partitions);
    for b in 0..batches {
        for t in 0..partitions {
            matrix.set(b, t, gamma as u32);
        }
    }
    if d > 0 {
        for a in 0..d * p.batch_count() {
            let i = (a / d) as usize;
            let j = (a % p.partitions()) as usize;
            *matrix.entry_mut(i, j) += 1;
        }
    }
    let violations = validate_assignment(p, &matrix).err().unwrap_or_default();
    HeuristicAssignment { matrix, violations }
}
