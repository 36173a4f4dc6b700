//! System parameters and closed-form performance of the unpartitioned scheme.
//!
//! Every combinatorial fraction here (`alpha`, the multicast threshold, the
//! MDS communication load, the operation counts) is evaluated with exact
//! rational arithmetic. Floating point only appears in the shifted-exponential
//! order-statistic expectations and in the delays derived from them.

use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational used for loads and combinatorial fractions.
pub type Rational = BigRational;

/// Storage fraction `mu`, always carried as an exact fraction.
pub type Fraction = Ratio<u64>;

pub(crate) fn rational(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Rational {
    Rational::new(num.into(), den.into())
}

pub(crate) fn rational_int(value: impl Into<BigInt>) -> Rational {
    Rational::from_integer(value.into())
}

/// Lossy conversion for reporting.
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("binomial coefficient C({n}, {k}) does not fit in 128 bits")]
pub struct BinomialOverflow {
    pub n: u64,
    pub k: u64,
}

/// Exact binomial coefficient. `C(n, k) = 0` for `k > n`.
pub fn binomial(n: u64, k: u64) -> Result<u128, BinomialOverflow> {
    if k > n {
        return Ok(0);
    }
    let k_small = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k_small {
        let factor = u128::from(n - i);
        let divisor = u128::from(i + 1);
        // acc * factor is divisible by divisor; divide out the gcd first to
        // keep the intermediate product small.
        let g = gcd_u128(acc, divisor);
        let reduced = acc / g;
        let div_rest = divisor / g;
        let factor = factor / div_rest;
        acc = reduced
            .checked_mul(factor)
            .ok_or(BinomialOverflow { n, k })?;
    }
    Ok(acc)
}

/// Binomial with signed arguments, zero outside the usual range.
pub(crate) fn binomial_signed(n: i64, k: i64) -> Result<u128, BinomialOverflow> {
    if n < 0 || k < 0 || k > n {
        return Ok(0);
    }
    binomial(n as u64, k as u64)
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Unvalidated parameter tuple `(m, n, N, K, mu, r, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawParameters {
    /// Source rows `m`.
    pub source_rows: u64,
    /// Columns `n`.
    pub columns: u64,
    /// Input vectors `N`.
    pub vectors: u64,
    /// Servers `K`.
    pub servers: u64,
    /// Storage fraction `mu`.
    pub mu: Fraction,
    /// Coded rows `r`.
    pub coded_rows: u64,
    /// Partitions `T`.
    pub partitions: u64,
}

impl RawParameters {
    pub fn validate(&self) -> Result<SystemParameters, ParameterError> {
        validate_parameters(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParameterError {
    #[error("parameter {0} must be positive")]
    NotPositive(&'static str),
    #[error("storage fraction mu = {mu} is outside [1/K, 1] for K = {servers}")]
    MuOutOfRange { mu: Fraction, servers: u64 },
    #[error("coded rows r = {coded_rows} is smaller than source rows m = {source_rows}")]
    TooFewCodedRows { coded_rows: u64, source_rows: u64 },
    #[error("q = K*m/r is not an integer (K*m = {km}, r = {coded_rows})")]
    NonIntegerQ { km: u64, coded_rows: u64 },
    #[error("mu*q is not a positive integer (mu = {mu}, q = {q})")]
    NonIntegerMuQ { mu: Fraction, q: u64 },
    #[error("mu*m is not a positive integer (mu = {mu}, m = {source_rows})")]
    NonIntegerMuM { mu: Fraction, source_rows: u64 },
    #[error("T = {partitions} does not divide m = {source_rows}")]
    PartitionsDoNotDivideSourceRows { partitions: u64, source_rows: u64 },
    #[error("T = {partitions} does not divide r = {coded_rows}")]
    PartitionsDoNotDivideCodedRows { partitions: u64, coded_rows: u64 },
    #[error("batch size r / C(K, mu*q) = {coded_rows} / {batch_count} is not an integer")]
    NonIntegerBatchSize { coded_rows: u64, batch_count: u128 },
    #[error("q = {q} does not divide N = {vectors}")]
    QDoesNotDivideVectors { q: u64, vectors: u64 },
    #[error(transparent)]
    Overflow(#[from] BinomialOverflow),
}

/// Validated system parameters with their derived quantities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParameters {
    raw: RawParameters,
    q: u64,
    mu_q: u64,
    mu_m: u64,
    batch_count: u64,
    batch_size: u64,
}

pub fn validate_parameters(raw: &RawParameters) -> Result<SystemParameters, ParameterError> {
    let fields = [
        ("m", raw.source_rows),
        ("n", raw.columns),
        ("N", raw.vectors),
        ("K", raw.servers),
        ("r", raw.coded_rows),
        ("T", raw.partitions),
        ("mu", *raw.mu.numer()),
    ];
    for (name, value) in fields {
        if value == 0 {
            return Err(ParameterError::NotPositive(name));
        }
    }
    let mu = raw.mu;
    let k = raw.servers;
    if mu > Fraction::from_integer(1) || mu * k < Fraction::from_integer(1) {
        return Err(ParameterError::MuOutOfRange { mu, servers: k });
    }
    if raw.coded_rows < raw.source_rows {
        return Err(ParameterError::TooFewCodedRows {
            coded_rows: raw.coded_rows,
            source_rows: raw.source_rows,
        });
    }
    let km = k * raw.source_rows;
    if !km.is_multiple_of(raw.coded_rows) {
        return Err(ParameterError::NonIntegerQ { km, coded_rows: raw.coded_rows });
    }
    let q = km / raw.coded_rows;
    let mu_q = mu * q;
    if !mu_q.is_integer() || mu_q.is_zero() {
        return Err(ParameterError::NonIntegerMuQ { mu, q });
    }
    let mu_m = mu * raw.source_rows;
    if !mu_m.is_integer() {
        return Err(ParameterError::NonIntegerMuM { mu, source_rows: raw.source_rows });
    }
    if !raw.source_rows.is_multiple_of(raw.partitions) {
        return Err(ParameterError::PartitionsDoNotDivideSourceRows {
            partitions: raw.partitions,
            source_rows: raw.source_rows,
        });
    }
    if !raw.coded_rows.is_multiple_of(raw.partitions) {
        return Err(ParameterError::PartitionsDoNotDivideCodedRows {
            partitions: raw.partitions,
            coded_rows: raw.coded_rows,
        });
    }
    let mu_q = mu_q.to_integer();
    let batch_count = binomial(k, mu_q)?;
    if u128::from(raw.coded_rows) % batch_count != 0 {
        return Err(ParameterError::NonIntegerBatchSize {
            coded_rows: raw.coded_rows,
            batch_count,
        });
    }
    if !raw.vectors.is_multiple_of(q) {
        return Err(ParameterError::QDoesNotDivideVectors { q, vectors: raw.vectors });
    }
    // batch_count divides r, so it fits in u64.
    let batch_count = batch_count as u64;
    Ok(SystemParameters {
        raw: *raw,
        q,
        mu_q,
        mu_m: mu_m.to_integer(),
        batch_count,
        batch_size: raw.coded_rows / batch_count,
    })
}

impl SystemParameters {
    pub fn raw(&self) -> &RawParameters {
        &self.raw
    }
    /// `m`
    pub fn source_rows(&self) -> u64 {
        self.raw.source_rows
    }
    /// `n`
    pub fn columns(&self) -> u64 {
        self.raw.columns
    }
    /// `N`
    pub fn vectors(&self) -> u64 {
        self.raw.vectors
    }
    /// `K`
    pub fn servers(&self) -> u64 {
        self.raw.servers
    }
    pub fn mu(&self) -> Fraction {
        self.raw.mu
    }
    /// `r`
    pub fn coded_rows(&self) -> u64 {
        self.raw.coded_rows
    }
    /// `T`
    pub fn partitions(&self) -> u64 {
        self.raw.partitions
    }
    /// `q = K m / r`, the number of servers each output is assigned across.
    pub fn q(&self) -> u64 {
        self.q
    }
    /// Replication factor of each batch, `mu q`.
    pub fn mu_q(&self) -> u64 {
        self.mu_q
    }
    /// Rows stored per server, `mu m`.
    pub fn mu_m(&self) -> u64 {
        self.mu_m
    }
    /// `C(K, mu q)`
    pub fn batch_count(&self) -> u64 {
        self.batch_count
    }
    /// `r / C(K, mu q)`
    pub fn batch_size(&self) -> u64 {
        self.batch_size
    }
    /// `r / T`
    pub fn rows_per_partition(&self) -> u64 {
        self.raw.coded_rows / self.raw.partitions
    }
    /// `m / T`: coded rows needed to decode one partition.
    pub fn decode_threshold(&self) -> u64 {
        self.raw.source_rows / self.raw.partitions
    }
    /// `N / q`: output vectors each server in the finisher set is responsible for.
    pub fn vectors_per_server(&self) -> u64 {
        self.raw.vectors / self.q
    }
    /// `m N`, the normalization of loads and delays.
    pub fn normalizer(&self) -> u64 {
        self.raw.source_rows * self.raw.vectors
    }

    /// Same parameters with a different partition count.
    pub fn with_partitions(&self, partitions: u64) -> Result<SystemParameters, ParameterError> {
        RawParameters { partitions, ..self.raw }.validate()
    }

    /// Number of finisher sets, `C(K, q)`.
    pub fn finisher_set_count(&self) -> Result<u128, BinomialOverflow> {
        binomial(self.servers(), self.q)
    }
}

impl fmt::Display for SystemParameters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "m={} n={} N={} K={} mu={} r={} T={}",
            self.source_rows(),
            self.columns(),
            self.vectors(),
            self.servers(),
            self.mu(),
            self.coded_rows(),
            self.partitions()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("invalid delay parameters: sigma = {sigma}, K = {servers}, g = {wait_for}")]
    InvalidParameters { sigma: f64, servers: u64, wait_for: u64 },
    #[error("g distribution sums to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("g distribution has negative mass {mass} at g = {g}")]
    NegativeMass { g: u64, mass: f64 },
    #[error("g distribution support {g} lies outside [{low}, {high}]")]
    SupportOutOfRange { g: u64, low: u64, high: u64 },
    #[error(transparent)]
    Overflow(#[from] BinomialOverflow),
}

/// Inputs of the shifted-exponential order statistic `f(sigma, K, g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParameters {
    sigma: f64,
    server_count: u64,
    wait_for: u64,
}

impl DelayParameters {
    pub fn new(sigma: f64, server_count: u64, wait_for: u64) -> Result<Self, DelayError> {
        if sigma <= 0.0 || !sigma.is_finite() || wait_for == 0 || wait_for > server_count {
            return Err(DelayError::InvalidParameters { sigma, servers: server_count, wait_for });
        }
        Ok(Self { sigma, server_count, wait_for })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn server_count(&self) -> u64 {
        self.server_count
    }
    pub fn wait_for(&self) -> u64 {
        self.wait_for
    }
}

/// Expected runtime of the `g`-th fastest of `K` servers:
/// `sigma * (1 + sum_{j=K-g+1}^{K} 1/j)`.
pub fn order_statistic_mean(p: &DelayParameters) -> f64 {
    let k = p.server_count;
    let low = k - p.wait_for + 1;
    // smallest terms first
    let tail: f64 = (low..=k).rev().map(|j| 1.0 / j as f64).sum();
    p.sigma * (1.0 + tail)
}

/// `alpha_j = C(q-1, j) C(K-q, mu q - j) / ((q/K) C(K, mu q))`.
pub fn alpha(j: u64, p: &SystemParameters) -> Result<Rational, BinomialOverflow> {
    let k = p.servers() as i64;
    let q = p.q() as i64;
    let mu_q = p.mu_q() as i64;
    let j = j as i64;
    let top = binomial_signed(q - 1, j)? * binomial_signed(k - q, mu_q - j)?;
    let bottom = u128::from(p.q()) * u128::from(p.batch_count());
    Ok(rational(BigInt::from(top) * BigInt::from(p.servers()), BigInt::from(bottom)))
}

/// `sum_{j=from}^{mu q} alpha_j`
pub fn alpha_tail_sum(from: u64, p: &SystemParameters) -> Result<Rational, BinomialOverflow> {
    let mut acc = Rational::zero();
    for j in from..=p.mu_q() {
        acc += alpha(j, p)?;
    }
    Ok(acc)
}

/// Multicast load of the rounds `j = from ..= mu q`: `sum alpha_j / j`.
///
/// `from` must be at least 1.
pub fn multicast_load(from: u64, p: &SystemParameters) -> Result<Rational, BinomialOverflow> {
    assert!(from >= 1, "multicast rounds start at j >= 1");
    let mut acc = Rational::zero();
    for j in from..=p.mu_q() {
        acc += alpha(j, p)? / rational_int(j);
    }
    Ok(acc)
}

/// Smallest `s >= 1` with `sum_{l=s}^{mu q} alpha_l <= 1 - mu`.
///
/// `s = mu q + 1` (empty sum) means no multicast rounds.
pub fn min_multicast_size(p: &SystemParameters) -> Result<u64, BinomialOverflow> {
    let budget = rational_int(1) - rational(*p.mu().numer(), *p.mu().denom());
    let mut tail = Rational::zero();
    let mut s = p.mu_q() + 1;
    // The tail sum grows as s decreases, so scan downwards and stop at the
    // first violation.
    for candidate in (1..=p.mu_q()).rev() {
        tail += alpha(candidate, p)?;
        if tail > budget {
            break;
        }
        s = candidate;
    }
    Ok(s)
}

/// Which branch of the load minimization was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Multicast for `j = s_q ..= mu q`, then unicast the rest.
    Primary,
    /// Multicast down to `j = s_q - 1`.
    Extended,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Primary => "primary",
            Strategy::Extended => "extended",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Multicast thresholds with their strategies: `s_q`, and `s_q - 1` when it
/// is at least 1.
pub fn strategy_thresholds(p: &SystemParameters) -> Result<Vec<(Strategy, u64)>, BinomialOverflow> {
    let s_q = min_multicast_size(p)?;
    let mut out = vec![(Strategy::Primary, s_q)];
    if s_q >= 2 {
        out.push((Strategy::Extended, s_q - 1));
    }
    Ok(out)
}

/// Both branches of the unpartitioned load and the selected minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsLoad {
    pub load: Rational,
    pub strategy: Strategy,
    pub primary: Rational,
    pub extended: Option<Rational>,
}

/// Communication load of the unpartitioned MDS scheme:
/// `min(sum_{s_q} alpha_j/j + 1 - mu - sum_{s_q} alpha_j, sum_{s_q-1} alpha_j/j)`.
pub fn load_mds_breakdown(p: &SystemParameters) -> Result<MdsLoad, BinomialOverflow> {
    let s_q = min_multicast_size(p)?;
    let one_minus_mu = rational_int(1) - rational(*p.mu().numer(), *p.mu().denom());
    let primary = multicast_load(s_q, p)? + one_minus_mu - alpha_tail_sum(s_q, p)?;
    let extended = if s_q >= 2 { Some(multicast_load(s_q - 1, p)?) } else { None };
    let (load, strategy) = match &extended {
        Some(ext) if *ext < primary => (ext.clone(), Strategy::Extended),
        _ => (primary.clone(), Strategy::Primary),
    };
    Ok(MdsLoad { load, strategy, primary, extended })
}

pub fn load_mds(p: &SystemParameters) -> Result<Rational, BinomialOverflow> {
    Ok(load_mds_breakdown(p)?.load)
}

/// Multiplications in the map phase, `K mu m n N`.
pub fn sigma_map(p: &SystemParameters) -> Option<u128> {
    u128::from(p.servers())
        .checked_mul(u128::from(p.mu_m()))?
        .checked_mul(u128::from(p.columns()))?
        .checked_mul(u128::from(p.vectors()))
}

/// Decoding multiplications for all partitions and outputs,
/// `r^2 (1 - q/K) N / T`.
pub fn sigma_reduce(p: &SystemParameters) -> Rational {
    let r = BigInt::from(p.coded_rows());
    let num = &r * &r * BigInt::from(p.servers() - p.q()) * BigInt::from(p.vectors());
    let den = BigInt::from(p.servers()) * BigInt::from(p.partitions());
    Rational::new(num, den)
}

/// Probability distribution of the number of servers `g` waited for.
#[derive(Debug, Clone, PartialEq)]
pub struct GDistribution {
    first: u64,
    mass: Vec<f64>,
}

pub(crate) const NORMALIZATION_TOLERANCE: f64 = 1e-12;

impl GDistribution {
    /// Masses for `g = first, first + 1, ...`.
    pub fn new(first: u64, mass: Vec<f64>) -> Result<Self, DelayError> {
        for (i, &m) in mass.iter().enumerate() {
            if m < 0.0 || m.is_nan() {
                return Err(DelayError::NegativeMass { g: first + i as u64, mass: m });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(DelayError::NotNormalized { sum });
        }
        Ok(Self { first, mass })
    }

    pub fn point_mass(g: u64) -> Self {
        Self { first: g, mass: vec![1.0] }
    }

    /// `(g, probability)` pairs with nonzero mass.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(move |(i, m)| (self.first + i as u64, *m))
    }

    pub fn probability(&self, g: u64) -> f64 {
        if g < self.first {
            return 0.0;
        }
        self.mass.get((g - self.first) as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(g, m)| g as f64 * m).sum()
    }

    pub fn min_support(&self) -> Option<u64> {
        self.iter().map(|(g, _)| g).next()
    }

    pub fn max_support(&self) -> Option<u64> {
        self.iter().map(|(g, _)| g).last()
    }

    pub fn is_point_mass_at(&self, g: u64) -> bool {
        (self.probability(g) - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }
}

/// Map-phase delay per source row and output vector, averaged over `g`.
pub fn map_delay(p: &SystemParameters, g_dist: &GDistribution) -> Result<f64, DelayError> {
    let total: f64 = g_dist.mass.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(DelayError::NotNormalized { sum: total });
    }
    let sigma = sigma_map(p).ok_or(BinomialOverflow { n: p.servers(), k: p.mu_q() })? as f64
        / p.servers() as f64;
    let mut acc = 0.0;
    for (g, mass) in g_dist.iter() {
        if g < p.q() || g > p.servers() {
            return Err(DelayError::SupportOutOfRange { g, low: p.q(), high: p.servers() });
        }
        acc += mass * order_statistic_mean(&DelayParameters::new(sigma, p.servers(), g)?);
    }
    Ok(acc / p.normalizer() as f64)
}

/// Reduce-phase (decoding) delay per source row and output vector.
pub fn reduce_delay(p: &SystemParameters) -> f64 {
    let sigma = to_f64(&sigma_reduce(p)) / p.q() as f64;
    if sigma == 0.0 {
        return 0.0;
    }
    let params = DelayParameters::new(sigma, p.q(), p.q()).expect("q >= 1 and sigma > 0");
    order_statistic_mean(&params) / p.normalizer() as f64
}

/// Overall computational delay `D = D_map + D_reduce`.
pub fn overall_delay(map: f64, reduce: f64) -> f64 {
    map + reduce
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn example1() -> SystemParameters {
        RawParameters {
            source_rows: 20,
            columns: 4,
            vectors: 4,
            servers: 6,
            mu: Fraction::new(1, 2),
            coded_rows: 30,
            partitions: 5,
        }
        .validate()
        .unwrap()
    }

    fn partition_study(partitions: u64) -> SystemParameters {
        RawParameters {
            source_rows: 6000,
            columns: 6000,
            vectors: 6,
            servers: 9,
            mu: Fraction::new(1, 3),
            coded_rows: 9000,
            partitions,
        }
        .validate()
        .unwrap()
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(6, 2).unwrap(), 15);
        assert_eq!(binomial(9, 2).unwrap(), 36);
        assert_eq!(binomial(17, 0).unwrap(), 1);
        assert_eq!(binomial(3, 5).unwrap(), 0);
        assert_eq!(binomial(0, 0).unwrap(), 1);
        assert_eq!(binomial_signed(4, -1).unwrap(), 0);
        assert_eq!(binomial(201, 67).unwrap_err(), BinomialOverflow { n: 201, k: 67 });
        assert_eq!(binomial(130, 65).unwrap(), 95067625827960698145584333020095113100);
    }

    #[test]
    fn example1_derived_quantities() {
        let p = example1();
        assert_eq!(p.q(), 4);
        assert_eq!(p.mu_q(), 2);
        assert_eq!(p.batch_count(), 15);
        assert_eq!(p.batch_size(), 2);
        assert_eq!(p.rows_per_partition(), 6);
        assert_eq!(p.decode_threshold(), 4);
    }

    #[test]
    fn partition_study_derived_quantities() {
        let p = partition_study(1);
        assert_eq!(p.q(), 6);
        assert_eq!(p.batch_count(), 36);
        assert_eq!(p.batch_size(), 250);
    }

    #[test]
    fn validation_errors_are_named() {
        let base = *example1().raw();
        let err = |raw: RawParameters| raw.validate().unwrap_err();
        assert_eq!(
            err(RawParameters { partitions: 7, ..base }),
            ParameterError::PartitionsDoNotDivideSourceRows { partitions: 7, source_rows: 20 }
        );
        assert!(matches!(
            err(RawParameters { coded_rows: 35, ..base }),
            ParameterError::NonIntegerQ { .. }
        ));
        assert!(matches!(
            err(RawParameters { mu: Fraction::new(1, 3), ..base }),
            ParameterError::NonIntegerMuQ { .. }
        ));
        assert!(matches!(
            err(RawParameters { mu: Fraction::new(1, 8), ..base }),
            ParameterError::MuOutOfRange { .. }
        ));
        assert!(matches!(
            err(RawParameters { vectors: 6, ..base }),
            ParameterError::QDoesNotDivideVectors { q: 4, vectors: 6 }
        ));
        // T = 4 divides m = 20 but not r = 30
        assert!(matches!(
            err(RawParameters { partitions: 4, ..base }),
            ParameterError::PartitionsDoNotDivideCodedRows { .. }
        ));
        // K = 12, q = 8, mu q = 2: C(12, 2) = 66 does not divide 12000
        let k12 = RawParameters {
            source_rows: 8000,
            columns: 10000,
            vectors: 8,
            servers: 12,
            mu: Fraction::new(1, 4),
            coded_rows: 12000,
            partitions: 800,
        };
        assert!(matches!(err(k12), ParameterError::NonIntegerBatchSize { .. }));
        assert_eq!(err(RawParameters { columns: 0, ..base }), ParameterError::NotPositive("n"));
        assert!(matches!(
            err(RawParameters { coded_rows: 10, ..base }),
            ParameterError::TooFewCodedRows { .. }
        ));
        // mu m = 5/2 with mu q = 1: K=4, m=5, r=10, q=2, mu=1/2
        let odd = RawParameters {
            source_rows: 5,
            columns: 1,
            vectors: 2,
            servers: 4,
            mu: Fraction::new(1, 2),
            coded_rows: 10,
            partitions: 1,
        };
        assert!(matches!(err(odd), ParameterError::NonIntegerMuM { .. }));
    }

    fn exact_harmonic(k: u64) -> Rational {
        (1..=k).map(|j| rational(1, j)).fold(Rational::zero(), |a, b| a + b)
    }

    #[test]
    fn order_statistic_examples() {
        let f = |s, k, g| order_statistic_mean(&DelayParameters::new(s, k, g).unwrap());
        assert_eq!(f(1.0, 1, 1), 2.0);
        let oracle = to_f64(&(rational_int(1) + exact_harmonic(6)));
        assert_eq!(oracle, 3.45);
        assert!((f(1.0, 6, 6) - 3.45).abs() < 1e-12);
        for k in 2..=4 {
            let expect = 2.5 * to_f64(&(rational_int(1) + exact_harmonic(k)));
            assert!((f(2.5, k, k) - expect).abs() < 1e-12);
        }
        assert!(DelayParameters::new(1.0, 3, 4).is_err());
        assert!(DelayParameters::new(0.0, 3, 1).is_err());
    }

    #[test]
    fn order_statistic_is_monotone_and_linear() {
        for k in 1..=20u64 {
            let mut prev = 0.0;
            for g in 1..=k {
                let v = order_statistic_mean(&DelayParameters::new(1.0, k, g).unwrap());
                assert!(v > prev);
                prev = v;
                let scaled = order_statistic_mean(&DelayParameters::new(8.0, k, g).unwrap());
                assert!((scaled - 8.0 * v).abs() <= 1e-12 * scaled);
            }
        }
    }

    #[test]
    fn alpha_examples() {
        let p = example1();
        assert_eq!(alpha(2, &p).unwrap(), rational(3, 10));
        assert_eq!(alpha(1, &p).unwrap(), rational(6, 10));
        assert_eq!(alpha(3, &p).unwrap(), Rational::zero());
        assert_eq!(alpha(0, &p).unwrap(), rational(1, 10));
    }

    #[test]
    fn multicast_threshold_examples() {
        assert_eq!(min_multicast_size(&example1()).unwrap(), 2);
        // alpha = (3, 15, 10)/24 and 1 - mu = 16/24
        assert_eq!(min_multicast_size(&partition_study(1)).unwrap(), 2);
        // mu = 1: K = 4, m = r = 4, q = 4, mu q = 4; alpha_4 = 0 so the
        // empty-range bound is reached immediately at s = mu q.
        let full = RawParameters {
            source_rows: 4,
            columns: 1,
            vectors: 4,
            servers: 4,
            mu: Fraction::new(1, 1),
            coded_rows: 4,
            partitions: 1,
        }
        .validate()
        .unwrap();
        let s = min_multicast_size(&full).unwrap();
        assert!(alpha_tail_sum(s, &full).unwrap().is_zero());
        assert!(s >= 1 && s <= full.mu_q() + 1);
    }

    #[test]
    fn load_mds_examples() {
        assert_eq!(load_mds(&example1()).unwrap(), rational(35, 100));
        // K = 9, mu = 1/3: min(5/24 + 16/24 - 10/24, 15/24 + 5/24) = 11/24
        let b = load_mds_breakdown(&partition_study(1)).unwrap();
        assert_eq!(b.primary, rational(11, 24));
        assert_eq!(b.extended, Some(rational(20, 24)));
        assert_eq!(b.load, rational(11, 24));
        assert_eq!(b.strategy, Strategy::Primary);
    }

    #[test]
    fn single_term_primary_strategy() {
        // s_q = mu q: the primary branch is alpha/muq + 1 - mu - alpha.
        let p = example1();
        let a = alpha(2, &p).unwrap();
        let expect = &a / rational_int(2) + rational(1, 2) - &a;
        assert_eq!(load_mds_breakdown(&p).unwrap().primary, expect);
    }

    #[test]
    fn operation_counts() {
        assert_eq!(sigma_map(&partition_study(1)).unwrap(), 648_000_000);
        assert_eq!(sigma_map(&example1()).unwrap(), 960);
        assert_eq!(sigma_reduce(&partition_study(1)), rational_int(162_000_000));
        assert_eq!(sigma_reduce(&partition_study(50)), rational_int(3_240_000));
        let min_storage = RawParameters {
            source_rows: 8,
            columns: 3,
            vectors: 4,
            servers: 4,
            mu: Fraction::new(1, 4),
            coded_rows: 8,
            partitions: 1,
        }
        .validate()
        .unwrap();
        assert_eq!(sigma_map(&min_storage).unwrap(), 8 * 3 * 4);
    }

    #[test]
    fn delay_examples() {
        let p = partition_study(1);
        let d_map = map_delay(&p, &GDistribution::point_mass(6)).unwrap();
        let tail: f64 = (4..=9).map(|j| 1.0 / j as f64).sum();
        let oracle = 7.2e7 * (1.0 + tail) / 36000.0;
        assert!((d_map - oracle).abs() < 1e-9);
        assert!((d_map - 3991.2).abs() < 0.1);
        let d_reduce = reduce_delay(&p);
        assert!((d_reduce - 2587.5).abs() < 1e-9);
        assert!((reduce_delay(&partition_study(50)) - 51.75).abs() < 1e-9);
        let d = overall_delay(d_map, d_reduce);
        assert!((d - 6578.7).abs() < 0.1);
        assert_eq!(overall_delay(0.0, 2.0), 2.0);
        assert_eq!(overall_delay(2.0, 0.0), 2.0);
    }

    #[test]
    fn degenerate_single_server() {
        let p = RawParameters {
            source_rows: 3,
            columns: 2,
            vectors: 1,
            servers: 1,
            mu: Fraction::new(1, 1),
            coded_rows: 3,
            partitions: 1,
        }
        .validate()
        .unwrap();
        let d = map_delay(&p, &GDistribution::point_mass(1)).unwrap();
        let expect = 2.0 * sigma_map(&p).unwrap() as f64 / 3.0;
        assert!((d - expect).abs() < 1e-12);
        // q = K: nothing erased, nothing to decode
        assert_eq!(reduce_delay(&p), 0.0);
    }

    #[test]
    fn map_delay_rejects_bad_distributions() {
        let p = partition_study(1);
        let half = GDistribution { first: 6, mass: vec![0.5] };
        assert!(matches!(map_delay(&p, &half), Err(DelayError::NotNormalized { .. })));
        assert!(GDistribution::new(6, vec![0.5, 0.4]).is_err());
        assert!(matches!(
            map_delay(&p, &GDistribution::point_mass(5)),
            Err(DelayError::SupportOutOfRange { .. })
        ));
        let mixed = GDistribution::new(6, vec![0.25, 0.75]).unwrap();
        let a = map_delay(&p, &GDistribution::point_mass(6)).unwrap();
        let b = map_delay(&p, &GDistribution::point_mass(7)).unwrap();
        assert!((map_delay(&p, &mixed).unwrap() - (0.25 * a + 0.75 * b)).abs() < 1e-9);
        assert!((mixed.mean() - 6.75).abs() < 1e-15);
    }
}
