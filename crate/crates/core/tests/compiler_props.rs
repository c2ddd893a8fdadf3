mod common;

use dacmdp::compiler::{coverage_over, neighbor_weights};
use dacmdp::solver::{value_iterate, SolveOptions};
use dacmdp::{compile, DacConfig, Dataset, ExperienceTuple, NeighborIndex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(k: usize, cost: f64, weighted: bool) -> DacConfig {
    DacConfig { k, k_pi: k, cost, weighted, gamma: 0.9, delta_min: 1e-10, ..DacConfig::default() }
}

/// Non-terminal dataset with rewards on a 1/8 grid, so shifting by a
/// dyadic constant is exact in f32.
fn dyadic_dataset(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = (0..n)
        .map(|i| ExperienceTuple {
            state: (0..2).map(|_| rng.gen_range(-8..8) as f32 / 4.0).collect(),
            action: if i < 2 { i } else { rng.gen_range(0..2) },
            reward: rng.gen_range(-16..16) as f32 / 8.0,
            next_state: (0..2).map(|_| rng.gen_range(-8..8) as f32 / 4.0).collect(),
            terminal: false,
        })
        .collect();
    Dataset::from_tuples(tuples, 2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rows_are_probability_distributions(seed in any::<u64>(), k in 1usize..6, weighted in any::<bool>(), cost in 0.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = common::lattice_dataset(&mut rng, 60, 2, 2, 3);
        let k = k.min(*ds.action_support().iter().min().unwrap());
        let mdp = compile(&ds, &NeighborIndex::build(&ds), &config(k, cost, weighted)).unwrap();
        prop_assert!(mdp.max_row_sum_error() <= 1e-12);
        prop_assert!(mdp.prob.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(mdp.succ.iter().all(|s| (*s as usize) < mdp.n_states));
        prop_assert!(mdp.reward.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn rewards_and_values_fall_as_cost_grows(seed in any::<u64>(), k in 1usize..5, weighted in any::<bool>(), c1 in 0.0f64..10.0, dc in 0.0f64..10.0) {
        let ds = dyadic_dataset(seed, 50);
        let idx = NeighborIndex::build(&ds);
        let k = k.min(*ds.action_support().iter().min().unwrap());
        let lo = compile(&ds, &idx, &config(k, c1, weighted)).unwrap();
        let hi = compile(&ds, &idx, &config(k, c1 + dc, weighted)).unwrap();
        prop_assert_eq!(&lo.succ, &hi.succ);
        prop_assert_eq!(&lo.prob, &hi.prob);
        for (a, b) in lo.reward.iter().zip(&hi.reward) {
            prop_assert!(b <= a);
        }
        let opts = SolveOptions { gamma: 0.9, delta_min: 1e-10, max_iters: 10_000 };
        let (vl, vh) = (value_iterate(&lo, &opts).unwrap(), value_iterate(&hi, &opts).unwrap());
        for (a, b) in vl.v.iter().zip(&vh.v) {
            prop_assert!(*b <= a + 1e-8);
        }
    }

    #[test]
    fn constant_reward_shift_shifts_rewards_and_values(seed in any::<u64>(), k in 1usize..5, shift in -8i32..8) {
        let c = shift as f64 / 2.0;
        let ds = dyadic_dataset(seed, 40);
        let shifted = ds.map_rewards(|r| r + c as f32);
        let k = k.min(*ds.action_support().iter().min().unwrap());
        let cfg = config(k, 1.0, true);
        let base = compile(&ds, &NeighborIndex::build(&ds), &cfg).unwrap();
        let moved = compile(&shifted, &NeighborIndex::build(&shifted), &cfg).unwrap();
        for (a, b) in base.reward.iter().zip(&moved.reward) {
            prop_assert!((b - a - c).abs() <= 1e-9, "{} vs {} + {}", b, a, c);
        }
        let opts = SolveOptions { gamma: 0.9, delta_min: 1e-11, max_iters: 10_000 };
        let (v0, v1) = (value_iterate(&base, &opts).unwrap(), value_iterate(&moved, &opts).unwrap());
        for (a, b) in v0.v.iter().zip(&v1.v) {
            prop_assert!((b - a - c / 0.1).abs() <= 1e-7);
        }
    }

    #[test]
    fn coverage_never_worsens_when_data_is_added(seed in any::<u64>(), k in 1usize..4, extra in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let big = common::lattice_dataset(&mut rng, 40 + extra, 3, 2, 3);
        let small = big.prefix(40).unwrap();
        let k = k.min(*small.action_support().iter().min().unwrap());
        let queries: Vec<Vec<f32>> = (0..30).map(|_| (0..3).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).collect();
        let q: Vec<&[f32]> = queries.iter().map(|v| v.as_slice()).collect();
        let s = coverage_over(&NeighborIndex::build(&small), &q, k).unwrap();
        let b = coverage_over(&NeighborIndex::build(&big), &q, k).unwrap();
        prop_assert!(b.d_bar_max <= s.d_bar_max);
        prop_assert!(b.d_bar_mean <= s.d_bar_mean + 1e-12);
    }

    #[test]
    fn weights_are_normalized_and_favor_near_neighbors(mut d in prop::collection::vec(0.0f64..10.0, 1..8)) {
        d.sort_by(f64::total_cmp);
        for weighted in [true, false] {
            let w = neighbor_weights(&d, weighted, 1e-5);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for pair in w.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12));
            }
        }
    }
}

#[test]
fn compilation_is_deterministic_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ds = common::lattice_dataset(&mut rng, 3000, 4, 3, 6);
    let cfg = config(5, 1.0, true);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| compile(&ds, &NeighborIndex::build(&ds), &cfg).unwrap().to_bytes())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(1));
}
