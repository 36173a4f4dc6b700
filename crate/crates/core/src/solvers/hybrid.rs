use std::collections::VecDeque;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cache::UnicastCache;
use crate::model::{load_mds, Rational, SystemParameters};
use crate::storage::AssignmentMatrix;

use super::branch_and_bound::{branch_and_bound_assign, BnbOptions};
use super::heuristic::heuristic_assign;
use super::random::random_assign;
use super::{SolverConfig, SolverError};

#[derive(Debug, Clone)]
pub struct HybridOutcome {
    pub matrix: AssignmentMatrix,
    /// Load before the first iteration and after each iteration.
    pub history: Vec<Rational>,
    pub iterations: u64,
    pub nodes: u64,
    pub prunes: u64,
}

/// Local search seeded with the heuristic: each iteration removes one row
/// from `d` random nonzero entries and re-completes the matrix with branch
/// and bound, keeping the previous matrix as incumbent. When the mean
/// improvement over the last `window` iterations falls below `threshold`,
/// `d` doubles (up to `max_decrement_count`) and the window restarts; a
/// stall at the largest `d` ends the search, as do reaching the MDS lower
/// bound and the iteration or time cap.
///
/// Deterministic for a fixed seed unless a time budget cuts the run short.
pub fn hybrid_assign(params: &SystemParameters, config: &SolverConfig) -> Result<HybridOutcome, SolverError> {
    config.validate()?;
    let started = Instant::now();
    let floor = load_mds(params).map_err(|e| SolverError::Cache(e.into()))?;
    let mut cache = UnicastCache::build(params)?;
    let seeded = heuristic_assign(params);
    let mut current = if seeded.is_valid() { seeded.matrix } else { random_assign(params, config.seed) };
    cache.load_matrix(&current)?;
    let mut load = cache.load();
    let mut history = vec![load.clone()];
    let mut window: VecDeque<Rational> = VecDeque::with_capacity(config.window);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut iterations, mut nodes, mut prunes) = (0u64, 0u64, 0u64);
    let window_threshold = &config.threshold * Rational::from_integer((config.window as u64).into());
    let mut decrements = config.decrement_count;

    while load > floor {
        if config.max_iterations.is_some_and(|cap| iterations >= cap) {
            break;
        }
        if config.time_budget.is_some_and(|budget| started.elapsed() >= budget) {
            break;
        }
        let nonzero: Vec<(usize, usize)> = (0..current.batches())
            .flat_map(|b| current.nonzeros(b).map(move |(t, _)| (b, t)))
            .collect();
        let picks = (decrements as usize).min(nonzero.len());
        let mut start = current.clone();
        for i in rand::seq::index::sample(&mut rng, nonzero.len(), picks) {
            let (b, t) = nonzero[i];
            *start.entry_mut(b, t) -= 1;
        }
        let options = BnbOptions {
            bounding: true,
            incumbent: Some(current.clone()),
            heuristic_incumbent: false,
            node_limit: config.node_limit,
        };
        let out = branch_and_bound_assign(params, &start, &mut cache, &options)?;
        nodes += out.nodes;
        prunes += out.prunes;
        iterations += 1;
        debug_assert!(out.load <= load);
        window.push_back(&load - &out.load);
        if window.len() > config.window {
            window.pop_front();
        }
        current = out.matrix;
        load = out.load;
        history.push(load.clone());
        if window.len() == config.window {
            let total: Rational = window.iter().sum();
            if total < window_threshold {
                if decrements >= config.max_decrement_count {
                    break;
                }
                decrements = (decrements * 2).min(config.max_decrement_count);
                window.clear();
            }
        }
    }
    Ok(HybridOutcome { matrix: current, history, iterations, nodes, prunes })
}
