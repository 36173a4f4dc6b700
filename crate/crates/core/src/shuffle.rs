//! Message-level simulation of the shuffle phase.
//!
//! Values are identities `(partition, coded row, output vector)`. Server `S`
//! of a finisher set is responsible for a contiguous block of `N/q` output
//! vectors, the `k`-th server in increasing order taking block `k`.
//!
//! For every multicast size `j` from `mu q` down to the threshold and every
//! `(j+1)`-subset `G` of `Q`, each `S` in `G` is owed the values for its own
//! vectors computed from batches whose label meets `Q` exactly in `G \ {S}`.
//! That set is cut into `j` segments, one per other member of `G`; each
//! member XORs the segments it is in charge of and sends a single message
//! whose size is the longest of them. Anything still short of `m/T` rows per
//! partition afterwards is unicast.
//!
//! This module deliberately shares no counting code with the evaluator so
//! that the two can check each other.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use itertools::Itertools;
use num_bigint::BigInt;
use rayon::prelude::*;

use crate::evaluation::{remaining_unicasts, weighted_finisher_sets, EvalError, EvalMode, FinisherSet};
use crate::model::{binomial, multicast_load, strategy_thresholds, Rational};
use crate::storage::{all_rows, StorageDesign};

/// One XOR multicast message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastRecord {
    /// Segments per value set in this round (`|G| - 1`).
    pub size: u64,
    pub subset: Vec<u32>,
    pub sender: u32,
    pub units: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnicastRecord {
    pub receiver: u32,
    pub vector: u32,
    pub partition: u32,
    pub units: u64,
}

/// Values a server ends up with for one `(vector, partition)`, by origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValueLedger {
    pub local: u64,
    pub multicast: u64,
    pub unicast: u64,
}

impl ValueLedger {
    pub fn total(&self) -> u64 {
        self.local + self.multicast + self.unicast
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleTrace {
    pub finisher_set: FinisherSet,
    pub threshold: u64,
    pub multicasts: Vec<MulticastRecord>,
    pub unicasts: Vec<UnicastRecord>,
    pub multicast_units: u64,
    pub unicast_units: u64,
    /// server -> (vector, partition) -> ledger
    pub ledger: BTreeMap<u32, BTreeMap<(u32, u32), ValueLedger>>,
    pub load: Rational,
}

impl ShuffleTrace {
    /// Unicast units received by `server`.
    pub fn unicast_units_of(&self, server: u32) -> u64 {
        self.unicasts.iter().filter(|u| u.receiver == server).map(|u| u.units).sum()
    }

    /// Human-readable log, one line per message.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        writeln!(out, "finisher_set={} threshold={}", self.finisher_set, self.threshold).unwrap();
        for m in &self.multicasts {
            writeln!(
                out,
                "multicast j={} subset={} sender={} units={}",
                m.size,
                m.subset.iter().join(","),
                m.sender,
                m.units
            )
            .unwrap();
        }
        for u in &self.unicasts {
            writeln!(
                out,
                "unicast receiver={} vector={} partition={} units={}",
                u.receiver, u.vector, u.partition, u.units
            )
            .unwrap();
        }
        writeln!(
            out,
            "total multicast={} unicast={} load={}",
            self.multicast_units, self.unicast_units, self.load
        )
        .unwrap();
        out
    }
}

type Value = (u32, u32, u32);
/// Sender, carried values and their batch indices.
type Segment = (u32, Vec<Value>, Vec<usize>);

/// Runs the shuffle for one finisher set with multicast sizes `s ..= mu q`.
/// `s = mu q + 1` disables multicasting.
///
/// # Panics
/// If a receiver could not cancel the other segments of a message, or a
/// server ends short of `m/T` values in some partition; both indicate a bug.
pub fn simulate_shuffle(design: &StorageDesign, q_set: &FinisherSet, s: u64) -> Result<ShuffleTrace, EvalError> {
    let p = design.params();
    if s == 0 || s > p.mu_q() + 1 {
        return Err(EvalError::InvalidThreshold { threshold: s, max: p.mu_q() + 1 });
    }
    let servers = q_set.servers();
    let per_server = p.vectors_per_server() as u32;
    let vectors_of = |server: u32| -> std::ops::Range<u32> {
        let k = servers.iter().position(|&x| x == server).expect("member of Q") as u32;
        k * per_server + 1..(k + 1) * per_server + 1
    };
    let labels: Vec<BTreeSet<u32>> = design.labels().iter().map(|l| l.servers().iter().copied().collect()).collect();
    let rows = all_rows(design);

    let mut known: BTreeMap<u32, BTreeSet<Value>> = BTreeMap::new();
    let mut ledger: BTreeMap<u32, BTreeMap<(u32, u32), ValueLedger>> = BTreeMap::new();
    for &server in servers {
        let entry = ledger.entry(server).or_default();
        for v in vectors_of(server) {
            for t in 1..=p.partitions() as u32 {
                entry.insert((v, t), ValueLedger::default());
            }
        }
        let held = known.entry(server).or_default();
        for (b, label) in labels.iter().enumerate() {
            if !label.contains(&server) {
                continue;
            }
            for range in &rows[b] {
                for row in range.rows.clone() {
                    for v in vectors_of(server) {
                        held.insert((range.partition as u32, row, v));
                        entry.get_mut(&(v, range.partition as u32)).unwrap().local += 1;
                    }
                }
            }
        }
    }

    let mut multicasts = Vec::new();
    let mut multicast_units = 0u64;
    for j in (s..=p.mu_q()).rev() {
        for group in servers.iter().copied().combinations(j as usize + 1) {
            // segments[receiver][k]: the k-th segment owed to receiver,
            // sent by the k-th other member of the group.
            let mut segments: BTreeMap<u32, Vec<Segment>> = BTreeMap::new();
            for &receiver in &group {
                let others: BTreeSet<u32> = group.iter().copied().filter(|&x| x != receiver).collect();
                let mut values: Vec<(Value, usize)> = Vec::new();
                for (b, label) in labels.iter().enumerate() {
                    let meet: BTreeSet<u32> = label.iter().copied().filter(|x| servers.contains(x)).collect();
                    if meet != others {
                        continue;
                    }
                    for range in &rows[b] {
                        for row in range.rows.clone() {
                            for v in vectors_of(receiver) {
                                values.push(((range.partition as u32, row, v), b));
                            }
                        }
                    }
                }
                let count = values.len();
                let base = count / j as usize;
                let extra = count % j as usize;
                let mut cursor = 0;
                let mut parts = Vec::new();
                for (k, &sender) in others.iter().enumerate() {
                    let len = base + usize::from(k < extra);
                    let chunk = &values[cursor..cursor + len];
                    cursor += len;
                    parts.push((sender, chunk.iter().map(|x| x.0).collect(), chunk.iter().map(|x| x.1).collect()));
                }
                segments.insert(receiver, parts);
            }
            for &sender in &group {
                let carried: Vec<(u32, &Vec<Value>, &Vec<usize>)> = segments
                    .iter()
                    .filter(|(&r, _)| r != sender)
                    .map(|(&r, parts)| {
                        let part = parts.iter().find(|x| x.0 == sender).expect("sender owes every other member");
                        (r, &part.1, &part.2)
                    })
                    .collect();
                let units = carried.iter().map(|c| c.1.len()).max().unwrap_or(0) as u64;
                for &(receiver, values, batches) in &carried {
                    // the sender computed every value it sends
                    assert!(batches.iter().all(|&b| labels[b].contains(&sender)));
                    // the receiver can cancel every other segment in the XOR
                    for &(other, _, other_batches) in &carried {
                        if other != receiver {
                            assert!(other_batches.iter().all(|&b| labels[b].contains(&receiver)));
                        }
                    }
                    let held = known.get_mut(&receiver).unwrap();
                    let entry = ledger.get_mut(&receiver).unwrap();
                    for &value in values {
                        assert!(held.insert(value), "value delivered twice");
                        entry.get_mut(&(value.2, value.0)).unwrap().multicast += 1;
                    }
                }
                multicast_units += units;
                multicasts.push(MulticastRecord { size: j, subset: group.clone(), sender, units });
            }
        }
    }

    let need = p.decode_threshold();
    let mut unicasts = Vec::new();
    let mut unicast_units = 0u64;
    for &receiver in servers {
        let entry = ledger.get_mut(&receiver).unwrap();
        for v in vectors_of(receiver) {
            for t in 1..=p.partitions() as u32 {
                let slot = entry.get_mut(&(v, t)).unwrap();
                let short = need.saturating_sub(slot.total());
                if short > 0 {
                    slot.unicast += short;
                    unicast_units += short;
                    unicasts.push(UnicastRecord { receiver, vector: v, partition: t, units: short });
                }
                assert!(slot.total() >= need);
            }
        }
    }

    let load = Rational::new(BigInt::from(multicast_units + unicast_units), BigInt::from(p.normalizer()));
    Ok(ShuffleTrace {
        finisher_set: q_set.clone(),
        threshold: s,
        multicasts,
        unicasts,
        multicast_units,
        unicast_units,
        ledger,
        load,
    })
}

/// Trace of the cheaper strategy; ties go to the primary threshold.
pub fn best_strategy_trace(design: &StorageDesign, q_set: &FinisherSet) -> Result<ShuffleTrace, EvalError> {
    let mut best: Option<ShuffleTrace> = None;
    for (_, s) in strategy_thresholds(design.params())? {
        let trace = simulate_shuffle(design, q_set, s)?;
        if best.as_ref().is_none_or(|b| trace.load < b.load) {
            best = Some(trace);
        }
    }
    Ok(best.expect("primary strategy"))
}

/// Disagreement between the simulator and the evaluator for one finisher
/// set and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub finisher_set: FinisherSet,
    pub threshold: u64,
    pub simulated_unicast: u64,
    pub analytic_unicast: u64,
    pub simulated_multicast: u64,
    /// `m N sum_{j=s}^{mu q} alpha_j / j`
    pub analytic_multicast: Rational,
    /// Largest excess segment rounding can cause.
    pub slack: u64,
}

impl Discrepancy {
    pub fn multicast_excess(&self) -> Rational {
        Rational::from_integer(BigInt::from(self.simulated_multicast)) - &self.analytic_multicast
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    /// (finisher set, threshold) pairs simulated.
    pub checked: usize,
    pub unicast_mismatches: Vec<Discrepancy>,
    /// Multicast excess outside `[0, slack]`.
    pub multicast_violations: Vec<Discrepancy>,
    /// Multicast excess inside `(0, slack]`, explained by rounding.
    pub multicast_rounding: Vec<Discrepancy>,
    /// Weighted mean over finisher sets of the best simulated load.
    pub simulated_load: Rational,
}

impl CrossValidation {
    /// No unicast mismatch and no multicast excess at all.
    pub fn is_exact(&self) -> bool {
        self.unicast_mismatches.is_empty() && self.multicast_violations.is_empty() && self.multicast_rounding.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "checked={} unicast_mismatches={} multicast_violations={} multicast_rounding={} simulated_load={}",
            self.checked,
            self.unicast_mismatches.len(),
            self.multicast_violations.len(),
            self.multicast_rounding.len(),
            self.simulated_load
        )
    }
}

/// Discrepancies, weighted simulated load and pairs checked for one set.
type SetCheck = (Vec<Discrepancy>, Rational, u64);

/// Simulates every finisher set of `mode` at each strategy threshold and
/// compares against the analytic counts.
pub fn cross_validate(design: &StorageDesign, mode: EvalMode) -> Result<CrossValidation, EvalError> {
    let p = design.params();
    let thresholds = strategy_thresholds(p)?;
    let sets = weighted_finisher_sets(p, mode)?;
    let results: Vec<Result<SetCheck, EvalError>> = sets
        .par_iter()
        .map(|(servers, weight)| {
            let q_set = FinisherSet::new(p, servers.clone())?;
            let mut rows = Vec::new();
            let mut best: Option<Rational> = None;
            for &(_, s) in &thresholds {
                let trace = simulate_shuffle(design, &q_set, s)?;
                let analytic = remaining_unicasts(design, &q_set, s)?;
                let analytic_multicast = if s <= p.mu_q() {
                    multicast_load(s, p)? * Rational::from_integer(BigInt::from(p.normalizer()))
                } else {
                    Rational::from_integer(BigInt::from(0))
                };
                let mut slack = 0u64;
                for j in s..=p.mu_q() {
                    slack += (binomial(p.q(), j + 1)? as u64) * (j + 1);
                }
                if best.as_ref().is_none_or(|b| trace.load < *b) {
                    best = Some(trace.load.clone());
                }
                rows.push(Discrepancy {
                    finisher_set: q_set.clone(),
                    threshold: s,
                    simulated_unicast: trace.unicast_units,
                    analytic_unicast: analytic.total,
                    simulated_multicast: trace.multicast_units,
                    analytic_multicast,
                    slack,
                });
            }
            Ok((rows, best.expect("primary strategy"), *weight))
        })
        .collect();

    let mut report = CrossValidation {
        checked: 0,
        unicast_mismatches: Vec::new(),
        multicast_violations: Vec::new(),
        multicast_rounding: Vec::new(),
        simulated_load: Rational::from_integer(BigInt::from(0)),
    };
    let mut weight_total = 0u64;
    let mut load_sum = Rational::from_integer(BigInt::from(0));
    for result in results {
        let (rows, best, weight) = result?;
        weight_total += weight;
        load_sum += best * Rational::from_integer(BigInt::from(weight));
        for d in rows {
            report.checked += 1;
            if d.simulated_unicast != d.analytic_unicast {
                report.unicast_mismatches.push(d.clone());
            }
            let excess = d.multicast_excess();
            let zero = Rational::from_integer(BigInt::from(0));
            if excess < zero || excess > Rational::from_integer(BigInt::from(d.slack)) {
                report.multicast_violations.push(d);
            } else if excess > zero {
                report.multicast_rounding.push(d);
            }
        }
    }
    report.simulated_load = load_sum / Rational::from_integer(BigInt::from(weight_total));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_mds;
    use crate::storage::tests::{example1_design, example1_params};
    use crate::storage::AssignmentMatrix;

    #[test]
    fn example1_counts() {
        let design = example1_design();
        let q = FinisherSet::new(design.params(), vec![1, 2, 3, 4]).unwrap();
        let trace = simulate_shuffle(&design, &q, 2).unwrap();
        assert_eq!(trace.multicast_units, 12);
        assert_eq!(trace.unicast_units, 30);
        assert_eq!(trace.load, Rational::new(21.into(), 40.into()));
        assert_eq!(trace.multicasts.len(), 12);
        assert_eq!(best_strategy_trace(&design, &q).unwrap().threshold, 2);
    }

    #[test]
    fn single_partition_average_is_mds() {
        let p = example1_params().with_partitions(1).unwrap();
        let design = StorageDesign::new(p.clone(), AssignmentMatrix::from_rows(vec![vec![2]; 15]).unwrap()).unwrap();
        let report = cross_validate(&design, EvalMode::Exhaustive).unwrap();
        assert!(report.is_exact(), "{}", report.summary());
        assert_eq!(report.simulated_load, load_mds(&p).unwrap());
    }

    #[test]
    fn threshold_range_checked() {
        let design = example1_design();
        let q = FinisherSet::new(design.params(), vec![1, 2, 3, 4]).unwrap();
        assert!(simulate_shuffle(&design, &q, 0).is_err());
        assert!(simulate_shuffle(&design, &q, 4).is_err());
        let none = simulate_shuffle(&design, &q, 3).unwrap();
        assert_eq!(none.multicast_units, 0);
    }
}
