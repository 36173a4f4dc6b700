//! Communication load and computational delay of a concrete storage design.
//!
//! For a finisher set `Q` and multicast threshold `s`, server `S` in `Q`
//! holds the rows of every batch it stores, and receives through the coded
//! multicast rounds the rows of every batch it does not store whose label
//! meets `Q` in at least `s` servers. Whatever is still missing to reach
//! `m/T` rows in a partition is unicast, once per output vector `S` is
//! responsible for. Surplus rows in one partition never make up for a
//! deficit in another.
//!
//! All per-`Q` tallies are integers, so aggregation is exact and independent
//! of the order in which the parallel workers finish.

use std::collections::BTreeMap;
use std::fmt;

use itertools::Itertools;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    binomial, load_mds, map_delay, multicast_load, overall_delay, rational, rational_int, reduce_delay,
    strategy_thresholds, to_f64, BinomialOverflow, DelayError, GDistribution, Rational, Strategy,
    SystemParameters,
};
use crate::storage::StorageDesign;

/// Exhaustive evaluation is refused beyond this many subsets.
pub const EXHAUSTIVE_LIMIT: u128 = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("finisher set must hold {expected} distinct servers in 1..={servers}, got {got:?}")]
    InvalidFinisherSet { expected: u64, servers: u64, got: Vec<u32> },
    #[error("finish order must be a permutation of 1..={servers}, got {got:?}")]
    InvalidOrder { servers: u64, got: Vec<u32> },
    #[error("multicast threshold {threshold} outside 1..={max}")]
    InvalidThreshold { threshold: u64, max: u64 },
    #[error("sampled evaluation needs at least one sample")]
    ZeroSamples,
    #[error("exhaustive evaluation would visit {count} subsets (limit {EXHAUSTIVE_LIMIT}); use sampled mode")]
    TooManySubsets { count: u128 },
    #[error(transparent)]
    Overflow(#[from] BinomialOverflow),
    #[error(transparent)]
    Delay(#[from] DelayError),
}

/// How finisher sets and finish orders are averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Every `q`-subset for the load, every `k`-subset for the `g` distribution.
    Exhaustive,
    /// `count` uniformly random finish orders drawn from `seed`; the finisher
    /// set is the first `q` servers of each order.
    Sampled { count: usize, seed: u64 },
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMode::Exhaustive => f.write_str("exhaustive"),
            EvalMode::Sampled { count, .. } => write!(f, "sampled:{count}"),
        }
    }
}

/// The first `q` servers to finish the map phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FinisherSet(Vec<u32>);

impl FinisherSet {
    pub fn new(p: &SystemParameters, mut servers: Vec<u32>) -> Result<Self, EvalError> {
        let got = servers.clone();
        servers.sort_unstable();
        servers.dedup();
        let in_range = servers.iter().all(|&s| s >= 1 && u64::from(s) <= p.servers());
        if servers.len() as u64 != p.q() || got.len() != servers.len() || !in_range {
            return Err(EvalError::InvalidFinisherSet { expected: p.q(), servers: p.servers(), got });
        }
        Ok(FinisherSet(servers))
    }

    /// First `q` servers of a finish order.
    pub fn from_order(p: &SystemParameters, order: &[u32]) -> Result<Self, EvalError> {
        check_order(p, order)?;
        Self::new(p, order[..p.q() as usize].to_vec())
    }

    pub fn servers(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for FinisherSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().join(","))
    }
}

fn check_order(p: &SystemParameters, order: &[u32]) -> Result<(), EvalError> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted.iter().copied().ne(1..=p.servers() as u32) {
        return Err(EvalError::InvalidOrder { servers: p.servers(), got: order.to_vec() });
    }
    Ok(())
}

/// All `q`-subsets of the servers, lexicographically.
pub fn all_finisher_sets(p: &SystemParameters) -> Vec<FinisherSet> {
    (1..=p.servers() as u32).combinations(p.q() as usize).map(FinisherSet).collect()
}

/// `count` uniformly random permutations of `1..=K` from `seed`.
pub fn sample_orders(servers: u64, count: usize, seed: u64) -> Vec<Vec<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<u32> = (1..=servers as u32).collect();
    (0..count)
        .map(|_| {
            order.shuffle(&mut rng);
            order.clone()
        })
        .collect()
}

/// Remaining values needed per server after the multicast rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnicastTally {
    /// `(server, U_Q^(S))` in increasing server order.
    pub per_server: Vec<(u32, u64)>,
    pub total: u64,
}

/// Sparse view of a design used by every evaluator in this module.
pub(crate) struct DesignIndex {
    pub labels: Vec<Vec<u32>>,
    /// Nonzero `(partition, count)` per batch.
    pub rows: Vec<Vec<(usize, u32)>>,
    /// Batches stored by each server, indexed by `server - 1`.
    pub server_batches: Vec<Vec<usize>>,
    pub partitions: usize,
    pub need: u64,
}

impl DesignIndex {
    pub fn new(design: &StorageDesign) -> Self {
        let p = design.params();
        let labels: Vec<Vec<u32>> = design.labels().iter().map(|l| l.servers().to_vec()).collect();
        let mut server_batches = vec![Vec::new(); p.servers() as usize];
        for (b, label) in labels.iter().enumerate() {
            for &s in label {
                server_batches[s as usize - 1].push(b);
            }
        }
        let rows = (0..labels.len()).map(|b| design.assignment().nonzeros(b).collect()).collect();
        Self { labels, rows, server_batches, partitions: p.partitions() as usize, need: p.decode_threshold() }
    }

    fn add_row(&self, cov: &mut [u64], batch: usize) {
        for &(t, c) in &self.rows[batch] {
            cov[t] += u64::from(c);
        }
    }

    fn deficit(&self, cov: &[u64]) -> u64 {
        cov.iter().map(|&c| self.need.saturating_sub(c)).sum()
    }

    /// Per-server deficit counts (rows, not yet multiplied by `N/q`) for each threshold.
    pub fn deficits(&self, q_servers: &[u32], thresholds: &[u64], servers: u64) -> Vec<Vec<u64>> {
        let mut in_q = vec![false; servers as usize + 1];
        for &s in q_servers {
            in_q[s as usize] = true;
        }
        let overlap: Vec<u64> = self
            .labels
            .iter()
            .map(|l| l.iter().filter(|&&s| in_q[s as usize]).count() as u64)
            .collect();
        thresholds
            .iter()
            .map(|&s| {
                let mut shared = vec![0u64; self.partitions];
                for (b, &o) in overlap.iter().enumerate() {
                    if o >= s {
                        self.add_row(&mut shared, b);
                    }
                }
                q_servers
                    .iter()
                    .map(|&server| {
                        let mut cov = shared.clone();
                        for &b in &self.server_batches[server as usize - 1] {
                            if overlap[b] < s {
                                self.add_row(&mut cov, b);
                            }
                        }
                        self.deficit(&cov)
                    })
                    .collect()
            })
            .collect()
    }

    /// Whether the union of batches stored by `servers` decodes every partition.
    pub fn decodable(&self, servers: &[u32]) -> bool {
        let mut covered = vec![false; self.labels.len()];
        let mut cov = vec![0u64; self.partitions];
        for &s in servers {
            for &b in &self.server_batches[s as usize - 1] {
                if !covered[b] {
                    covered[b] = true;
                    self.add_row(&mut cov, b);
                }
            }
        }
        cov.iter().all(|&c| c >= self.need)
    }

    /// Length of the shortest decodable prefix of `order`.
    pub fn decodable_prefix(&self, order: &[u32]) -> usize {
        let mut covered = vec![false; self.labels.len()];
        let mut cov = vec![0u64; self.partitions];
        let mut satisfied = cov.iter().filter(|&&c| c >= self.need).count();
        for (i, &s) in order.iter().enumerate() {
            for &b in &self.server_batches[s as usize - 1] {
                if covered[b] {
                    continue;
                }
                covered[b] = true;
                for &(t, c) in &self.rows[b] {
                    let before = cov[t];
                    cov[t] += u64::from(c);
                    if before < self.need && cov[t] >= self.need {
                        satisfied += 1;
                    }
                }
            }
            if satisfied == self.partitions {
                return i + 1;
            }
        }
        order.len()
    }
}

fn check_threshold(p: &SystemParameters, s: u64) -> Result<(), EvalError> {
    if s == 0 || s > p.mu_q() + 1 {
        return Err(EvalError::InvalidThreshold { threshold: s, max: p.mu_q() + 1 });
    }
    Ok(())
}

/// `U_Q^(S)` for every `S` in `Q` at multicast threshold `s`.
pub fn remaining_unicasts(design: &StorageDesign, q_set: &FinisherSet, s: u64) -> Result<UnicastTally, EvalError> {
    let p = design.params();
    check_threshold(p, s)?;
    let index = DesignIndex::new(design);
    let counts = index.deficits(q_set.servers(), &[s], p.servers()).remove(0);
    let per_server: Vec<(u32, u64)> = q_set
        .servers()
        .iter()
        .zip(counts)
        .map(|(&server, c)| (server, c * p.vectors_per_server()))
        .collect();
    let total = per_server.iter().map(|(_, u)| u).sum();
    Ok(UnicastTally { per_server, total })
}

/// Finisher sets with multiplicities for a mode.
pub(crate) fn weighted_finisher_sets(p: &SystemParameters, mode: EvalMode) -> Result<Vec<(Vec<u32>, u64)>, EvalError> {
    match mode {
        EvalMode::Exhaustive => {
            let count = p.finisher_set_count()?;
            if count > EXHAUSTIVE_LIMIT {
                return Err(EvalError::TooManySubsets { count });
            }
            Ok(all_finisher_sets(p).into_iter().map(|q| (q.0, 1)).collect())
        }
        EvalMode::Sampled { count, seed } => {
            if count == 0 {
                return Err(EvalError::ZeroSamples);
            }
            let mut sets: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
            for order in sample_orders(p.servers(), count, seed) {
                let mut q: Vec<u32> = order[..p.q() as usize].to_vec();
                q.sort_unstable();
                *sets.entry(q).or_default() += 1;
            }
            Ok(sets.into_iter().collect())
        }
    }
}

/// One branch of the load minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyLoad {
    pub strategy: Strategy,
    pub threshold: u64,
    /// `sum_{j=s}^{mu q} alpha_j / j`
    pub multicast: Rational,
    /// Average unicast load over the finisher sets.
    pub unicast: Rational,
    pub total: Rational,
}

/// Communication load of a block-diagonal design.
#[derive(Debug, Clone, PartialEq)]
pub struct BdcLoad {
    pub load: Rational,
    pub strategy: Strategy,
    pub threshold: u64,
    pub candidates: Vec<StrategyLoad>,
    /// Number of finisher sets averaged over (with multiplicity).
    pub samples: u64,
}

/// Communication load with the minimum taken over the averaged strategies.
pub fn load_bdc(design: &StorageDesign, mode: EvalMode) -> Result<BdcLoad, EvalError> {
    let p = design.params();
    let strategies = strategy_thresholds(p)?;
    let thresholds: Vec<u64> = strategies.iter().map(|(_, s)| *s).collect();
    let sets = weighted_finisher_sets(p, mode)?;
    let index = DesignIndex::new(design);
    let per_set: Vec<Vec<u64>> = sets
        .par_iter()
        .map(|(q, weight)| {
            index
                .deficits(q, &thresholds, p.servers())
                .into_iter()
                .map(|per_server| weight * per_server.iter().sum::<u64>())
                .collect()
        })
        .collect();
    let samples: u64 = sets.iter().map(|(_, w)| w).sum();
    let mut candidates = Vec::with_capacity(strategies.len());
    for (i, &(strategy, threshold)) in strategies.iter().enumerate() {
        let rows: u128 = per_set.iter().map(|v| u128::from(v[i])).sum();
        // rows * (N/q) values over (samples * m N)
        let unicast = rational(rows, u128::from(samples) * u128::from(p.q()) * u128::from(p.source_rows()));
        let multicast = multicast_load(threshold, p)?;
        let total = &multicast + &unicast;
        candidates.push(StrategyLoad { strategy, threshold, multicast, unicast, total });
    }
    let best = candidates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total.cmp(&b.1.total).then(a.0.cmp(&b.0)))
        .map(|(_, c)| c.clone())
        .expect("at least the primary strategy");
    Ok(BdcLoad { load: best.total, strategy: best.strategy, threshold: best.threshold, candidates, samples })
}

/// Load of each finisher set at a fixed threshold: multicast term plus `U_Q / (m N)`.
pub fn per_finisher_set_loads(design: &StorageDesign, s: u64) -> Result<Vec<(FinisherSet, Rational)>, EvalError> {
    let p = design.params();
    check_threshold(p, s)?;
    let count = p.finisher_set_count()?;
    if count > EXHAUSTIVE_LIMIT {
        return Err(EvalError::TooManySubsets { count });
    }
    let index = DesignIndex::new(design);
    let multicast = if s <= p.mu_q() { multicast_load(s, p)? } else { Rational::zero() };
    Ok(all_finisher_sets(p)
        .into_par_iter()
        .map(|q| {
            let rows: u64 = index.deficits(q.servers(), &[s], p.servers())[0].iter().sum();
            let load = &multicast + rational(rows, p.q() * p.source_rows());
            (q, load)
        })
        .collect())
}

/// Number of servers `g` waited for when servers finish in `order`: the
/// shortest decodable prefix, but never fewer than `q`.
pub fn completion_count(design: &StorageDesign, order: &[u32]) -> Result<u64, EvalError> {
    let p = design.params();
    check_order(p, order)?;
    let index = DesignIndex::new(design);
    Ok((index.decodable_prefix(order) as u64).max(p.q()))
}

/// Distribution of `g` over uniformly random finish orders.
pub fn g_distribution(design: &StorageDesign, mode: EvalMode) -> Result<GDistribution, EvalError> {
    let p = design.params();
    let k = p.servers();
    let q = p.q();
    let index = DesignIndex::new(design);
    match mode {
        EvalMode::Exhaustive => {
            let mut total: u128 = 0;
            for size in q..=k {
                total += binomial(k, size)?;
            }
            if total > EXHAUSTIVE_LIMIT {
                return Err(EvalError::TooManySubsets { count: total });
            }
            // P(g <= size) is the fraction of decodable size-subsets: the
            // first `size` servers of a uniform order form a uniform subset
            // and decodability only improves as servers are added.
            let mut cdf = Vec::new();
            for size in q..=k {
                let subsets = binomial(k, size)?;
                let mut decodable: u128 = 0;
                if cdf.last().is_some_and(|c: &Rational| c.is_one()) {
                    decodable = subsets;
                } else {
                    for subset in (1..=k as u32).combinations(size as usize) {
                        if index.decodable(&subset) {
                            decodable += 1;
                        }
                    }
                }
                cdf.push(rational(decodable, subsets));
            }
            let mut prev = Rational::zero();
            let mass = cdf
                .into_iter()
                .map(|c| {
                    let m = &c - &prev;
                    prev = c;
                    to_f64(&m)
                })
                .collect();
            Ok(GDistribution::new(q, mass)?)
        }
        EvalMode::Sampled { count, seed } => {
            if count == 0 {
                return Err(EvalError::ZeroSamples);
            }
            let orders = sample_orders(k, count, seed);
            let gs: Vec<u64> = orders.par_iter().map(|o| (index.decodable_prefix(o) as u64).max(q)).collect();
            let mut hist = vec![0u64; (k - q + 1) as usize];
            for g in gs {
                hist[(g - q) as usize] += 1;
            }
            let mass = hist.into_iter().map(|h| to_f64(&rational(h, count as u64))).collect();
            Ok(GDistribution::new(q, mass)?)
        }
    }
}

/// Load and delay of a design next to the unpartitioned baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceReport {
    pub params: SystemParameters,
    pub mode: EvalMode,
    pub load: Rational,
    pub strategy: Strategy,
    pub threshold: u64,
    pub load_mds: Rational,
    pub g_distribution: GDistribution,
    pub d_map: f64,
    pub d_reduce: f64,
    pub d: f64,
    /// Unpartitioned scheme: `g = q`, decoding one code of length `r`.
    pub baseline_d_map: f64,
    pub baseline_d_reduce: f64,
}

impl PerformanceReport {
    pub fn load_norm(&self) -> Rational {
        if self.load_mds.is_zero() {
            return if self.load.is_zero() { Rational::one() } else { rational_int(i64::MAX) };
        }
        &self.load / &self.load_mds
    }

    pub fn baseline_d(&self) -> f64 {
        overall_delay(self.baseline_d_map, self.baseline_d_reduce)
    }

    pub fn d_map_norm(&self) -> f64 {
        self.d_map / self.baseline_d_map
    }

    pub fn d_norm(&self) -> f64 {
        self.d / self.baseline_d()
    }

    pub fn g_mean(&self) -> f64 {
        self.g_distribution.mean()
    }

    pub const CSV_COLUMNS: [&'static str; 18] = [
        "m", "n", "N", "K", "mu", "r", "T", "mode", "seed", "strategy", "L", "L_MDS", "L_norm", "D_map",
        "D_reduce", "D", "D_norm", "g_mean",
    ];

    fn fields(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let seed = match self.mode {
            EvalMode::Exhaustive => String::new(),
            EvalMode::Sampled { seed, .. } => seed.to_string(),
        };
        vec![
            ("m", p.source_rows().to_string()),
            ("n", p.columns().to_string()),
            ("N", p.vectors().to_string()),
            ("K", p.servers().to_string()),
            ("mu", format!("{}/{}", p.mu().numer(), p.mu().denom())),
            ("r", p.coded_rows().to_string()),
            ("T", p.partitions().to_string()),
            ("mode", self.mode.to_string()),
            ("seed", seed),
            ("strategy", self.strategy.to_string()),
            ("L", format_float(to_f64(&self.load))),
            ("L_MDS", format_float(to_f64(&self.load_mds))),
            ("L_norm", format_float(to_f64(&self.load_norm()))),
            ("D_map", format_float(self.d_map)),
            ("D_reduce", format_float(self.d_reduce)),
            ("D", format_float(self.d)),
            ("D_norm", format_float(self.d_norm())),
            ("g_mean", format_float(self.g_mean())),
        ]
    }

    /// Flat `key=value` record, one field per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.fields() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str(&format!("L_exact={}\n", self.load));
        out.push_str(&format!("threshold={}\n", self.threshold));
        out.push_str(&format!("D_map_norm={}\n", format_float(self.d_map_norm())));
        let dist = self.g_distribution.iter().map(|(g, m)| format!("{g}:{}", format_float(m))).join(" ");
        out.push_str(&format!("g_distribution={dist}\n"));
        out
    }

    pub fn csv_header() -> String {
        Self::CSV_COLUMNS.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.fields().into_iter().map(|(_, v)| v).join(",")
    }
}

/// Evaluates load, `g` distribution and delays of a design.
pub fn evaluate(design: &StorageDesign, mode: EvalMode) -> Result<PerformanceReport, EvalError> {
    let p = design.params();
    let load = load_bdc(design, mode)?;
    let g_dist = g_distribution(design, mode)?;
    let d_map = map_delay(p, &g_dist)?;
    let d_reduce = reduce_delay(p);
    let unpartitioned = p.with_partitions(1).expect("T = 1 always divides m and r");
    let baseline_d_map = map_delay(p, &GDistribution::point_mass(p.q()))?;
    let baseline_d_reduce = reduce_delay(&unpartitioned);
    Ok(PerformanceReport {
        params: p.clone(),
        mode,
        load: load.load,
        strategy: load.strategy,
        threshold: load.threshold,
        load_mds: load_mds(p)?,
        g_distribution: g_dist,
        d_map,
        d_reduce,
        d: overall_delay(d_map, d_reduce),
        baseline_d_map,
        baseline_d_reduce,
    })
}

/// Formats with 12 significant digits, trailing zeros trimmed.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        let text = format!("{x:.decimals$}");
        if text.contains('.') {
            text.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            text
        }
    } else {
        let text = format!("{x:.11e}");
        let (mantissa, exp) = text.split_once('e').expect("scientific format");
        let mantissa = if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
        format!("{mantissa}e{exp}")
    }
}
