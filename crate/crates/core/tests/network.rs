mod common;

use common::*;
use valnet::follower::FollowerOracle;
use valnet::network::{build_state_network, find_symmetric_pair, NetworkOptions};
use valnet::numerics::{Extended, StateVector};

#[test]
fn two_row_state_network() {
    let inst = two_row::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    let net = build_state_network(&o, &NetworkOptions::default()).unwrap();
    assert_eq!(net.widths(), vec![1, 2, 3, 6]);
    let states: Vec<StateVector> = net.layer(3).iter().map(|n| n.rect.clone().unwrap().lo).collect();
    let want: Vec<StateVector> =
        [[0, 0], [-1, -2], [-1, 0], [-2, -2], [-2, 0], [-3, -2]].iter().map(|s| StateVector(s.to_vec())).collect();
    assert_eq!(states, want);
    assert_eq!(net.terminal_values(), &[-5.0, -2.0, -5.0, 0.0, -5.0, 0.0]);
    let r1 = net.merge_equal_terminals();
    let pair = find_symmetric_pair(&r1).unwrap();
    assert_eq!((pair.0.layer, pair.0.index, pair.1.index), (2, 1, 2));
    let red = net.reduce();
    assert_eq!(red.num_nodes(), 8);
    assert_eq!(red.widths(), vec![1, 2, 2, 3]);
    assert!(find_symmetric_pair(&red).is_none());
    assert_eq!(red.lookup(&[1, 1, 0]), Extended::Finite(-5.0));
    for x in all_bits(3) {
        assert_eq!(red.lookup(&x), o.phi(&x).value);
    }
}

mod properties {
    use super::*;
    use proptest::prelude::*;
    use valnet::network::{ValueNetwork, VariableOrder};

    fn exact(seed: u64, n_l: usize, m: usize, order: VariableOrder) -> (valnet::Instance, ValueNetwork<f64>) {
        let inst = dense::<f64>(seed, n_l, 4, m, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let net = build_state_network(&o, &NetworkOptions { order, ..NetworkOptions::default() }).unwrap();
        (inst, net)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn state_network_is_exact(seed in 0u64..10_000, m in 1usize..4, column_sum in any::<bool>()) {
            let order = if column_sum { VariableOrder::ColumnSum } else { VariableOrder::Native };
            let (inst, net) = exact(seed, 8, m, order);
            let o = FollowerOracle::new(&inst).unwrap();
            let red = net.reduce();
            for x in all_bits(8) {
                let want = o.phi(&x).value;
                prop_assert_eq!(&net.lookup(&x), &want);
                prop_assert_eq!(&red.lookup(&x), &want);
            }
        }

        #[test]
        fn reduce_is_minimal_and_idempotent(seed in 0u64..10_000, m in 1usize..4) {
            let (_, net) = exact(seed, 7, m, VariableOrder::Native);
            let red = net.reduce();
            prop_assert!(find_symmetric_pair(&red).is_none());
            prop_assert!(red.reduce().isomorphic(&red));
            prop_assert!(red.num_nodes() <= net.num_nodes());
            for (a, b) in red.widths().iter().zip(net.widths()) {
                prop_assert!(*a <= b);
            }
            let mut sorted = red.terminal_values().to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            prop_assert_eq!(sorted.len(), red.terminal_values().len());
        }

        #[test]
        fn reduced_form_is_unique(seed in 0u64..10_000) {
            // Terminal-merging first and full reduction agree on the result.
            let (_, net) = exact(seed, 7, 2, VariableOrder::Native);
            let a = net.reduce();
            let b = net.merge_equal_terminals().reduce();
            prop_assert!(a.isomorphic(&b));
            prop_assert_eq!(a.canonical_form(), b.canonical_form());
        }
    }
}
