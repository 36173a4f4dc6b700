//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the library's counting code.

#![allow(dead_code)]

use bdc_core::{AssignmentMatrix, Fraction, RawParameters, SystemParameters};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

pub fn big(x: u64) -> BigInt {
    BigInt::from(x)
}

pub fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(big(n), big(d))
}

/// Binomial coefficient by the multiplicative formula; zero outside `0..=n`.
pub fn binom(n: i64, k: i64) -> BigInt {
    if k < 0 || n < 0 || k > n {
        return BigInt::from(0);
    }
    let mut acc = BigInt::from(1);
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

#[allow(clippy::too_many_arguments)]
pub fn params(m: u64, n: u64, vectors: u64, k: u64, mu: (u64, u64), r: u64, t: u64) -> SystemParameters {
    RawParameters {
        source_rows: m,
        columns: n,
        vectors,
        servers: k,
        mu: Fraction::new(mu.0, mu.1),
        coded_rows: r,
        partitions: t,
    }
    .validate()
    .expect("valid test parameters")
}

/// Lexicographic `size`-subsets of `1..=n`.
pub fn subsets(n: u32, size: usize) -> Vec<Vec<u32>> {
    fn rec(start: u32, n: u32, size: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for x in start..=n {
            cur.push(x);
            rec(x + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, size, &mut Vec::new(), &mut out);
    out
}

pub struct Shape {
    pub k: u32,
    pub q: usize,
    pub mu_q: usize,
    pub m: u64,
    pub vectors: u64,
    pub need: u64,
    pub mu: BigRational,
}

impl Shape {
    pub fn of(p: &SystemParameters) -> Self {
        Shape {
            k: p.servers() as u32,
            q: p.q() as usize,
            mu_q: p.mu_q() as usize,
            m: p.source_rows(),
            vectors: p.vectors(),
            need: p.decode_threshold(),
            mu: ratio(*p.mu().numer(), *p.mu().denom()),
        }
    }

    pub fn alpha(&self, j: usize) -> BigRational {
        let (k, q, mq) = (self.k as i64, self.q as i64, self.mu_q as i64);
        let j = j as i64;
        BigRational::new(
            BigInt::from(k) * binom(q - 1, j) * binom(k - q, mq - j),
            BigInt::from(q) * binom(k, mq),
        )
    }

    /// Smallest `s >= 1` whose alpha tail fits in `1 - mu`.
    pub fn s_q(&self) -> usize {
        let budget = BigRational::from_integer(1.into()) - &self.mu;
        (1..=self.mu_q + 1)
            .find(|&s| (s..=self.mu_q).map(|l| self.alpha(l)).sum::<BigRational>() <= budget)
            .unwrap()
    }

    pub fn multicast(&self, s: usize) -> BigRational {
        (s..=self.mu_q)
            .map(|j| self.alpha(j) / BigRational::from_integer(BigInt::from(j)))
            .sum()
    }

    pub fn thresholds(&self) -> Vec<usize> {
        let s = self.s_q();
        if s >= 2 {
            vec![s, s - 1]
        } else {
            vec![s]
        }
    }
}

/// Deficit rows of server `server` for finisher set `q_set` at threshold `s`,
/// straight from the definition. Works on partial matrices too.
#[allow(clippy::needless_range_loop)]
pub fn deficit_rows(shape: &Shape, rows: &[Vec<u32>], q_set: &[u32], server: u32, s: usize) -> u64 {
    let labels = subsets(shape.k, shape.mu_q);
    let partitions = rows[0].len();
    let mut total = 0;
    for t in 0..partitions {
        let mut have = 0u64;
        for (b, label) in labels.iter().enumerate() {
            let meet = label.iter().filter(|x| q_set.contains(x)).count();
            if label.contains(&server) || meet >= s {
                have += u64::from(rows[b][t]);
            }
        }
        total += shape.need.saturating_sub(have);
    }
    total
}

/// Sum over all finisher sets and their members of the deficit rows.
pub fn total_deficit_rows(shape: &Shape, rows: &[Vec<u32>], s: usize) -> u64 {
    subsets(shape.k, shape.q)
        .iter()
        .map(|q_set| q_set.iter().map(|&server| deficit_rows(shape, rows, q_set, server, s)).sum::<u64>())
        .sum()
}

/// Exhaustively averaged load, minimum over strategies.
pub fn oracle_load(p: &SystemParameters, rows: &[Vec<u32>]) -> BigRational {
    let shape = Shape::of(p);
    let sets = subsets(shape.k, shape.q).len() as u64;
    shape
        .thresholds()
        .into_iter()
        .map(|s| {
            let values = total_deficit_rows(&shape, rows, s) * (shape.vectors / shape.q as u64);
            shape.multicast(s) + ratio(values, sets * shape.m * shape.vectors)
        })
        .min()
        .unwrap()
}

/// Unpartitioned load from the closed form.
pub fn oracle_load_mds(p: &SystemParameters) -> BigRational {
    let shape = Shape::of(p);
    let s = shape.s_q();
    let one = BigRational::from_integer(1.into());
    let tail: BigRational = (s..=shape.mu_q).map(|l| shape.alpha(l)).sum();
    let primary = shape.multicast(s) + &one - &shape.mu - tail;
    if s >= 2 {
        primary.min(shape.multicast(s - 1))
    } else {
        primary
    }
}

pub fn to_rows(m: &AssignmentMatrix) -> Vec<Vec<u32>> {
    m.rows().map(|r| r.to_vec()).collect()
}

/// Uniformly shuffled token deal, built independently of the library.
pub fn random_rows<R: Rng>(p: &SystemParameters, rng: &mut R) -> Vec<Vec<u32>> {
    let partitions = p.partitions() as usize;
    let mut tokens: Vec<usize> = (0..partitions).flat_map(|t| std::iter::repeat_n(t, p.rows_per_partition() as usize)).collect();
    for i in (1..tokens.len()).rev() {
        let j = rng.random_range(0..=i);
        tokens.swap(i, j);
    }
    tokens
        .chunks(p.batch_size() as usize)
        .map(|deal| {
            let mut row = vec![0u32; partitions];
            for &t in deal {
                row[t] += 1;
            }
            row
        })
        .collect()
}

pub fn matrix(rows: Vec<Vec<u32>>) -> AssignmentMatrix {
    AssignmentMatrix::from_rows(rows).unwrap()
}

/// Parameters with `K` servers, `q` finishers, `mu q` copies, unit scale `c`
/// and `T` partitions: `m = q c`, `r = K c`, `N = q`.
pub fn scaled(k: u64, q: u64, mu_q: u64, c: u64, t: u64) -> Option<SystemParameters> {
    RawParameters {
        source_rows: q * c,
        columns: 1,
        vectors: q,
        servers: k,
        mu: Fraction::new(mu_q, q),
        coded_rows: k * c,
        partitions: t,
    }
    .validate()
    .ok()
}

/// Smallest scale making the batch size integral for `(K, q, mu q)`.
pub fn min_scale(k: u64, mu_q: u64) -> u64 {
    let batches = binom(k as i64, mu_q as i64);
    let batches: u64 = batches.try_into().unwrap();
    batches / num_integer::gcd(batches, k)
}
