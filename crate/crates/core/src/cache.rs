//! Incremental unicast tallies for the assignment solvers.
//!
//! The cache keeps, for every finisher set `Q`, every `S` in `Q` and every
//! partition, how many rows `S` holds after the multicast rounds, together
//! with the resulting deficit. A reverse index maps each batch to the
//! `(Q, S)` tallies it feeds, so assigning or removing one row only touches
//! those tallies. One set of tallies is kept per multicast threshold of the
//! load minimization.
//!
//! Objectives are exposed as integer keys on a common scale so the solvers
//! compare them without rational arithmetic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive};
use thiserror::Error;

use crate::evaluation::{all_finisher_sets, EXHAUSTIVE_LIMIT};
use crate::model::{multicast_load, rational_int, strategy_thresholds, BinomialOverflow, Rational, Strategy, SystemParameters};
use crate::storage::{enumerate_batch_labels, AssignmentMatrix};

/// Tally cells (`pairs x partitions x thresholds`) beyond which the cache refuses to build.
pub const CACHE_CELL_LIMIT: u128 = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("undo without a matching apply")]
    NothingToUndo,
    #[error("batch {batch} is already full")]
    RowFull { batch: usize },
    #[error("partition {partition} already has all of its rows assigned")]
    ColumnFull { partition: usize },
    #[error("batch {batch} holds no row of partition {partition}")]
    EmptyEntry { batch: usize, partition: usize },
    #[error("delta must be +1 or -1, got {0}")]
    BadDelta(i32),
    #[error("no tally is kept for multicast threshold {0}")]
    UnknownThreshold(u64),
    #[error("matrix shape {got:?} does not match {expected:?}")]
    Shape { got: (usize, usize), expected: (usize, usize) },
    #[error("cache would need {0} tally cells")]
    TooLarge(u128),
    #[error(transparent)]
    Overflow(#[from] BinomialOverflow),
}

#[derive(Debug, Clone)]
struct Tally {
    strategy: Strategy,
    threshold: u64,
    /// Scaled multicast term: `sum alpha_j/j * q m |Q| * scale`.
    multicast_key: i128,
    /// batch -> pairs fed by the batch
    by_batch: Vec<Vec<u32>>,
    /// pair -> batches feeding it
    by_pair: Vec<Vec<u32>>,
    /// rows held, indexed `pair * T + partition`
    held: Vec<u32>,
    /// deficit rows per pair
    deficit: Vec<u64>,
    total: u64,
    /// per batch, pairs in `by_batch` that still have a deficit
    live: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct UnicastCache {
    params: SystemParameters,
    partitions: usize,
    need: u32,
    q: u32,
    finisher_sets: u64,
    /// Common denominator turning loads into integer keys.
    scale: i128,
    tallies: Vec<Tally>,
    matrix: AssignmentMatrix,
    row_fill: Vec<u32>,
    col_fill: Vec<u32>,
    history: Vec<(usize, usize, bool)>,
}

impl UnicastCache {
    /// Builds an empty-matrix cache over every finisher set.
    pub fn build(params: &SystemParameters) -> Result<Self, CacheError> {
        let q_count = params.finisher_set_count()?;
        let thresholds = strategy_thresholds(params)?;
        let cells = q_count * u128::from(params.q()) * u128::from(params.partitions()) * thresholds.len() as u128;
        if q_count > EXHAUSTIVE_LIMIT || cells > CACHE_CELL_LIMIT {
            return Err(CacheError::TooLarge(cells));
        }
        let labels = enumerate_batch_labels(params.servers(), params.mu_q());
        let q_sets = all_finisher_sets(params);
        let q = params.q() as usize;
        let partitions = params.partitions() as usize;
        let need = params.decode_threshold() as u32;
        let pairs = q_sets.len() * q;

        // key = load * q m |Q| * scale
        let unit = BigInt::from(params.q()) * BigInt::from(params.source_rows()) * BigInt::from(q_count);
        let multicasts: Vec<Rational> = thresholds
            .iter()
            .map(|&(_, s)| if s <= params.mu_q() { multicast_load(s, params) } else { Ok(rational_int(0)) })
            .collect::<Result<_, _>>()?;
        let mut scale = BigInt::one();
        for m in &multicasts {
            scale = scale.lcm((m * Rational::from_integer(unit.clone())).denom());
        }
        let scale_i = scale.to_i128().expect("scale fits");

        let tallies = thresholds
            .iter()
            .zip(&multicasts)
            .map(|(&(strategy, threshold), multicast)| {
                let multicast_key = (multicast * Rational::from_integer(&unit * &scale))
                    .to_integer()
                    .to_i128()
                    .expect("multicast key fits");
                let mut by_batch = vec![Vec::new(); labels.len()];
                let mut by_pair = vec![Vec::new(); pairs];
                for (qi, q_set) in q_sets.iter().enumerate() {
                    let servers = q_set.servers();
                    for (b, label) in labels.iter().enumerate() {
                        let overlap = label.servers().iter().filter(|s| servers.binary_search(s).is_ok()).count() as u64;
                        for (si, &s) in servers.iter().enumerate() {
                            if label.contains(s) || overlap >= threshold {
                                let pair = (qi * q + si) as u32;
                                by_batch[b].push(pair);
                                by_pair[pair as usize].push(b as u32);
                            }
                        }
                    }
                }
                let live = by_batch.iter().map(|v| v.len() as u32).collect();
                Tally {
                    strategy,
                    threshold,
                    multicast_key,
                    by_batch,
                    by_pair,
                    held: vec![0; pairs * partitions],
                    deficit: vec![u64::from(need) * partitions as u64; pairs],
                    total: u64::from(need) * (partitions * pairs) as u64,
                    live,
                }
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            partitions,
            need,
            q: params.q() as u32,
            finisher_sets: q_count as u64,
            scale: scale_i,
            tallies,
            matrix: AssignmentMatrix::for_params(params),
            row_fill: vec![0; labels.len()],
            col_fill: vec![0; partitions],
            history: Vec::new(),
        })
    }

    pub fn params(&self) -> &SystemParameters {
        &self.params
    }

    /// Current (possibly partial) assignment.
    pub fn matrix(&self) -> &AssignmentMatrix {
        &self.matrix
    }

    pub fn row_capacity(&self, batch: usize) -> u32 {
        self.params.batch_size() as u32 - self.row_fill[batch]
    }

    pub fn column_capacity(&self, partition: usize) -> u32 {
        self.params.rows_per_partition() as u32 - self.col_fill[partition]
    }

    /// Adds (`delta = 1`) or removes (`delta = -1`) one row of `partition`
    /// in `batch` and updates the affected tallies.
    pub fn apply(&mut self, batch: usize, partition: usize, delta: i32) -> Result<(), CacheError> {
        let add = match delta {
            1 => true,
            -1 => false,
            other => return Err(CacheError::BadDelta(other)),
        };
        if add {
            if self.row_capacity(batch) == 0 {
                return Err(CacheError::RowFull { batch });
            }
            if self.column_capacity(partition) == 0 {
                return Err(CacheError::ColumnFull { partition });
            }
        } else if self.matrix.get(batch, partition) == 0 {
            return Err(CacheError::EmptyEntry { batch, partition });
        }
        self.step(batch, partition, add);
        self.history.push((batch, partition, add));
        Ok(())
    }

    /// Reverts the most recent [`apply`](Self::apply).
    pub fn undo(&mut self) -> Result<(), CacheError> {
        let (batch, partition, add) = self.history.pop().ok_or(CacheError::NothingToUndo)?;
        self.step(batch, partition, !add);
        Ok(())
    }

    /// Forgets the undo history.
    pub fn commit(&mut self) {
        self.history.clear();
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub(crate) fn step(&mut self, batch: usize, partition: usize, add: bool) {
        let entry = self.matrix.entry_mut(batch, partition);
        if add {
            *entry += 1;
            self.row_fill[batch] += 1;
            self.col_fill[partition] += 1;
        } else {
            *entry -= 1;
            self.row_fill[batch] -= 1;
            self.col_fill[partition] -= 1;
        }
        let partitions = self.partitions;
        let need = self.need;
        for tally in &mut self.tallies {
            for &pair in &tally.by_batch[batch] {
                let pair = pair as usize;
                let cell = &mut tally.held[pair * partitions + partition];
                if add {
                    let before = *cell;
                    *cell += 1;
                    if before < need {
                        tally.deficit[pair] -= 1;
                        tally.total -= 1;
                        if tally.deficit[pair] == 0 {
                            for &b in &tally.by_pair[pair] {
                                tally.live[b as usize] -= 1;
                            }
                        }
                    }
                } else {
                    *cell -= 1;
                    if *cell < need {
                        tally.deficit[pair] += 1;
                        tally.total += 1;
                        if tally.deficit[pair] == 1 {
                            for &b in &tally.by_pair[pair] {
                                tally.live[b as usize] += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Replaces the current assignment by `target`, then commits.
    pub fn load_matrix(&mut self, target: &AssignmentMatrix) -> Result<(), CacheError> {
        let shape = (self.matrix.batches(), self.matrix.partitions());
        if (target.batches(), target.partitions()) != shape {
            return Err(CacheError::Shape { got: (target.batches(), target.partitions()), expected: shape });
        }
        for b in 0..shape.0 {
            for t in 0..shape.1 {
                while self.matrix.get(b, t) > target.get(b, t) {
                    self.apply(b, t, -1)?;
                }
            }
        }
        for b in 0..shape.0 {
            for t in 0..shape.1 {
                while self.matrix.get(b, t) < target.get(b, t) {
                    self.apply(b, t, 1)?;
                }
            }
        }
        self.commit();
        Ok(())
    }

    fn tally(&self, threshold: u64) -> Result<&Tally, CacheError> {
        self.tallies.iter().find(|t| t.threshold == threshold).ok_or(CacheError::UnknownThreshold(threshold))
    }

    /// Thresholds with a tally: `s_q`, and `s_q - 1` when available.
    pub fn thresholds(&self) -> Vec<(Strategy, u64)> {
        self.tallies.iter().map(|t| (t.strategy, t.threshold)).collect()
    }

    /// Aggregate `sum_Q U_Q` in values (deficit rows times `N/q`) at threshold `s`.
    pub fn objective(&self, threshold: u64) -> Result<u64, CacheError> {
        Ok(self.tally(threshold)?.total * self.params.vectors_per_server())
    }

    /// `U_Q^(S)` in values for finisher set index `q_index` (lexicographic) and
    /// the `slot`-th server of that set.
    pub fn server_unicasts(&self, threshold: u64, q_index: usize, slot: usize) -> Result<u64, CacheError> {
        let pair = q_index * self.q as usize + slot;
        Ok(self.tally(threshold)?.deficit[pair] * self.params.vectors_per_server())
    }

    fn key_of(&self, tally: &Tally) -> i128 {
        tally.multicast_key + self.scale * tally.total as i128
    }

    /// Objective of the current assignment as an integer key, minimum over strategies.
    pub fn key(&self) -> i128 {
        self.tallies.iter().map(|t| self.key_of(t)).min().expect("primary tally")
    }

    /// Lower bound on the key of any completion of the current assignment:
    /// each further row placed in batch `b` removes at most one deficit row
    /// from every tally fed by `b` that is still nonzero.
    pub fn bound_key(&self) -> i128 {
        self.tallies
            .iter()
            .map(|t| {
                let reducible: i128 = self
                    .row_fill
                    .iter()
                    .enumerate()
                    .map(|(b, &fill)| {
                        let cap = self.params.batch_size() as u32 - fill;
                        i128::from(cap) * i128::from(t.live[b])
                    })
                    .sum();
                (self.key_of(t) - self.scale * reducible).max(t.multicast_key)
            })
            .min()
            .expect("primary tally")
    }

    /// Converts a key back to a load.
    pub fn key_to_load(&self, key: i128) -> Rational {
        let den = BigInt::from(self.scale)
            * BigInt::from(self.params.q())
            * BigInt::from(self.params.source_rows())
            * BigInt::from(self.finisher_sets);
        Rational::new(BigInt::from(key), den)
    }

    /// Load of the current assignment (meaningful once it is complete).
    pub fn load(&self) -> Rational {
        self.key_to_load(self.key())
    }

    /// One unicast value's worth of load, `1 / (m N |Q|)`.
    pub fn load_quantum(&self) -> Rational {
        Rational::new(
            BigInt::one(),
            BigInt::from(self.params.normalizer()) * BigInt::from(self.finisher_sets),
        )
    }

    /// Strategy attaining [`key`](Self::key); ties go to the primary strategy.
    pub fn best_strategy(&self) -> (Strategy, u64) {
        let best = self
            .tallies
            .iter()
            .min_by_key(|t| (self.key_of(t), t.strategy))
            .expect("primary tally");
        (best.strategy, best.threshold)
    }
}
