mod common;

use bdc_core::cache::UnicastCache;
use bdc_core::evaluation::{g_distribution, load_bdc, EvalMode};
use bdc_core::model::load_mds;
use bdc_core::solvers::*;
use bdc_core::storage::validate_assignment;
use bdc_core::{AssignmentMatrix, StorageDesign, SystemParameters};
use common::*;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn example1() -> SystemParameters {
    params(20, 4, 4, 6, (1, 2), 30, 5)
}

fn check_cache_against_oracle(cache: &UnicastCache, p: &SystemParameters) {
    let shape = Shape::of(p);
    let rows = to_rows(cache.matrix());
    for (_, s) in cache.thresholds() {
        let oracle = total_deficit_rows(&shape, &rows, s as usize) * p.vectors_per_server();
        assert_eq!(cache.objective(s).unwrap(), oracle);
    }
}

#[test]
fn cache_fuzz_apply_undo_matches_recomputation() {
    let p = example1();
    let mut cache = UnicastCache::build(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batches = p.batch_count() as usize;
    let partitions = p.partitions() as usize;
    let mut steps = 0;
    while steps < 1000 {
        let choice = rng.random_range(0..10);
        if choice < 2 && cache.history_len() > 0 {
            cache.undo().unwrap();
        } else if choice < 4 {
            let filled: Vec<(usize, usize)> = (0..batches)
                .flat_map(|b| (0..partitions).map(move |t| (b, t)))
                .filter(|&(b, t)| cache.matrix().get(b, t) > 0)
                .collect();
            if filled.is_empty() {
                continue;
            }
            let (b, t) = filled[rng.random_range(0..filled.len())];
            cache.apply(b, t, -1).unwrap();
        } else {
            let b = rng.random_range(0..batches);
            let t = rng.random_range(0..partitions);
            if cache.row_capacity(b) == 0 || cache.column_capacity(t) == 0 {
                assert!(cache.apply(b, t, 1).is_err());
                continue;
            }
            cache.apply(b, t, 1).unwrap();
        }
        check_cache_against_oracle(&cache, &p);
        steps += 1;
    }
}

#[test]
fn cache_replay_of_heuristic_equals_evaluator() {
    for t in [1, 2, 5, 10] {
        let p = example1().with_partitions(t).unwrap();
        let h = heuristic_assign(&p);
        let mut cache = UnicastCache::build(&p).unwrap();
        cache.load_matrix(&h.matrix).unwrap();
        let design = StorageDesign::new(p.clone(), h.matrix).unwrap();
        assert_eq!(cache.load(), load_bdc(&design, EvalMode::Exhaustive).unwrap().load);
    }
}

/// Tiny instances with four servers and single-copy batches.
fn tiny_instances() -> Vec<SystemParameters> {
    let mut out = Vec::new();
    for (q, k_scale) in [(2u64, 2u64), (2, 4), (3, 2), (2, 6), (3, 4)] {
        // m = q c, r = 4 c, batch size c
        for t in [2u64, 3, 4] {
            let c = k_scale;
            if let Some(p) = scaled(4, q, 1, c, t) {
                out.push(p);
            }
        }
    }
    out
}

fn random_partial(p: &SystemParameters, rng: &mut ChaCha8Rng, keep: f64) -> AssignmentMatrix {
    let rows = random_rows(p, rng)
        .into_iter()
        .map(|row| row.into_iter().map(|x| (0..x).filter(|_| rng.random_bool(keep)).count() as u32).collect())
        .collect();
    matrix(rows)
}

#[test]
fn branch_and_bound_matches_exhaustive_on_tiny_instances() {
    let instances = tiny_instances();
    assert!(instances.len() >= 8);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for p in &instances {
        for round in 0..3 {
            let start = if round == 0 { AssignmentMatrix::for_params(p) } else { random_partial(p, &mut rng, 0.4) };
            let exhaustive = exhaustive_complete(p, &start, DEFAULT_ENUMERATION_CEILING).unwrap();
            assert_eq!(exhaustive.load, oracle_load(p, &to_rows(&exhaustive.matrix)));
            let mut cache = UnicastCache::build(p).unwrap();
            let bounded = branch_and_bound_assign(p, &start, &mut cache, &BnbOptions::default()).unwrap();
            let blind = branch_and_bound_assign(
                p,
                &start,
                &mut cache,
                &BnbOptions { bounding: false, heuristic_incumbent: false, ..BnbOptions::default() },
            )
            .unwrap();
            assert_eq!(bounded.load, exhaustive.load);
            assert_eq!(blind.load, exhaustive.load);
            assert_eq!(blind.matrix, exhaustive.matrix, "lexicographic tie-break");
            assert!(bounded.nodes <= blind.nodes);
            assert!(validate_assignment(p, &bounded.matrix).is_ok());
            checked += 1;
        }
    }
    assert!(checked >= 20);
}

#[test]
fn bound_is_admissible_on_random_partial_states() {
    let instances = tiny_instances();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..1000 {
        let p = &instances[i % instances.len()];
        let keep = rng.random_range(0.0..1.0);
        let start = random_partial(p, &mut rng, keep);
        let mut cache = UnicastCache::build(p).unwrap();
        cache.load_matrix(&start).unwrap();
        let bound = cache.key_to_load(cache.bound_key());
        let best = exhaustive_complete(p, &start, DEFAULT_ENUMERATION_CEILING).unwrap();
        assert!(bound <= best.load, "bound {bound} above optimum {}", best.load);
    }
}

#[test]
fn exhaustive_of_single_partition_is_mds() {
    let p = scaled(4, 2, 1, 2, 1).unwrap();
    let out = exhaustive_assign(&p, 10).unwrap();
    assert_eq!(out.load, load_mds(&p).unwrap());
}

#[test]
fn hybrid_reaches_exhaustive_optimum_on_tiny_instances() {
    for p in tiny_instances() {
        let optimum = exhaustive_assign(&p, DEFAULT_ENUMERATION_CEILING).unwrap().load;
        let mut config = SolverConfig::new(SolverKind::Hybrid, &p).unwrap().with_seed(1);
        config.decrement_count = p.batch_size();
        config.max_decrement_count = p.batch_size();
        let out = hybrid_assign(&p, &config).unwrap();
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(out.history.last().unwrap(), &optimum, "{p}");
    }
}

#[test]
fn mds_load_reachable_over_small_systems() {
    // Every (K, q, mu q) with K <= 9 at minimal scale and every admissible T.
    let mut checked = 0;
    for k in 2..=9u64 {
        for q in 1..=k {
            for mu_q in 1..=q {
                let c = min_scale(k, mu_q);
                let Some(base) = scaled(k, q, mu_q, c, 1) else { continue };
                for t in 1..=base.batch_size() {
                    let Ok(p) = base.with_partitions(t) else { continue };
                    let config = SolverConfig::new(SolverKind::Hybrid, &p).unwrap();
                    let out = run_solver(&p, &config).unwrap();
                    let design = StorageDesign::new(p.clone(), out.matrix).unwrap();
                    let load = load_bdc(&design, EvalMode::Exhaustive).unwrap().load;
                    assert_eq!(load, load_mds(&p).unwrap(), "{p}");
                    assert!(g_distribution(&design, EvalMode::Exhaustive).unwrap().is_point_mass_at(q), "{p}");
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn random_baseline_is_not_better_than_hybrid_on_partition_study_t1000() {
    let p = params(6000, 6000, 6, 9, (1, 3), 9000, 1000);
    let hybrid = run_solver(&p, &SolverConfig::new(SolverKind::Hybrid, &p).unwrap()).unwrap();
    let hybrid_load = load_bdc(&StorageDesign::new(p.clone(), hybrid.matrix).unwrap(), EvalMode::Exhaustive).unwrap().load;
    let mut total = BigRational::from_integer(0.into());
    for seed in 0..100 {
        let design = StorageDesign::new(p.clone(), random_assign(&p, seed)).unwrap();
        total += load_bdc(&design, EvalMode::Exhaustive).unwrap().load;
    }
    let mean = total / BigRational::from_integer(100.into());
    assert!(mean >= hybrid_load);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heuristic_always_satisfies_both_conditions(k in 3u64..=9, q_seed in 0u64..50, mq_seed in 0u64..50, mult in 1u64..=3, t_seed in 0u64..1000) {
        let q = 1 + q_seed % k;
        let mu_q = 1 + mq_seed % q;
        let base = scaled(k, q, mu_q, mult * min_scale(k, mu_q), 1).unwrap();
        let divisors: Vec<u64> = (1..=base.source_rows()).filter(|t| base.with_partitions(*t).is_ok()).collect();
        let t = divisors[(t_seed as usize) % divisors.len()];
        let p = base.with_partitions(t).unwrap();
        let h = heuristic_assign(&p);
        prop_assert!(h.is_valid());
        prop_assert!(validate_assignment(&p, &h.matrix).is_ok());
    }

    #[test]
    fn random_assign_is_valid_and_seeded(seed in any::<u64>(), t in prop::sample::select(vec![1u64, 2, 5, 10])) {
        let p = example1().with_partitions(t).unwrap();
        let a = random_assign(&p, seed);
        prop_assert!(validate_assignment(&p, &a).is_ok());
        prop_assert_eq!(a, random_assign(&p, seed));
    }
}
