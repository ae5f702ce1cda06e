mod common;

use std::collections::BTreeMap;

use common::*;
use proptest::prelude::*;
use valnet::approx::{build_approx_unreduced, MergePolicy, MergeStrategy};
use valnet::follower::FollowerOracle;
use valnet::numerics::{at_most, Extended};
use valnet::strengthen::{
    compute_big_m, solve_sampled_maxmin, strengthen_network, strengthen_terminal, Region, RegionMode, RobustModelParams,
    SampleSet, StrengthenOutcome,
};

#[test]
fn twin_knapsack_terminal_drops_to_minus_100() {
    let inst = twin_knapsack::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    let parts = BTreeMap::from([(2, vec![vec![0, 1, 2], vec![3]]), (3, vec![vec![0, 1], vec![2, 3]])]);
    let policy = MergePolicy { strategy: MergeStrategy::Explicit(parts), ..MergePolicy::with_budget(2) };
    let net = build_approx_unreduced(&o, &policy).unwrap();
    for mode in [RegionMode::ExactPaths, RegionMode::HyperrectangleRelax] {
        let params = RobustModelParams { mode, ..RobustModelParams::default() };
        let mut samples = SampleSet::new();
        let (out, _) = strengthen_terminal(&o, &net, 0, &mut samples, &params);
        assert_eq!(out, StrengthenOutcome::Value(-100.0), "{mode:?}");
        let mut sub = net.clone();
        sub.retain_terminals(|t, _| t == 0);
        let sol = solve_sampled_maxmin(&o, Region::Paths(&sub), &samples, &0.0, &params).unwrap();
        assert_eq!(sol.value, -100.0);
        assert_eq!(o.phi(&sol.x).value, Extended::Finite(-100.0));
    }
}

#[test]
fn big_m_bounds_every_value() {
    for seed in 0..10 {
        let inst = dense::<f64>(seed, 7, 4, 2, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let big = compute_big_m(&o, 50);
        let max_phi = all_bits(7).filter_map(|x| o.phi(&x).value.into_finite()).fold(f64::NEG_INFINITY, f64::max);
        if max_phi.is_finite() {
            assert!(at_most(&max_phi, &big.value), "seed {seed}");
            if big.converged {
                assert_eq!(big.value, max_phi, "seed {seed}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn strengthening_keeps_bounds(seed in 0u64..10_000, m in 1usize..3, budget in 1usize..4, exact_paths in any::<bool>()) {
        let inst = dense::<f64>(seed, 7, 4, m, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let before = build_approx_unreduced(&o, &MergePolicy::with_budget(budget)).unwrap();
        let mut after = before.clone();
        let mode = if exact_paths { RegionMode::ExactPaths } else { RegionMode::HyperrectangleRelax };
        let params = RobustModelParams { mode, parallel: false, ..RobustModelParams::default() };
        strengthen_network(&o, &mut after, &mut SampleSet::new(), &params, None).unwrap();
        let after = after.reduce();
        for x in all_bits(7) {
            if let Extended::Finite(phi) = o.phi(&x).value {
                let (Extended::Finite(old), Extended::Finite(new)) = (before.lookup(&x), after.lookup(&x)) else {
                    return Err(TestCaseError::fail(format!("feasible {x:?} lost its path")));
                };
                prop_assert!(at_most(&phi, &new), "{:?}: phi {} above {}", x, phi, new);
                prop_assert!(at_most(&new, &old));
            }
        }
    }
}
