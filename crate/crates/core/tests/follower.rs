mod common;

use common::*;
use proptest::prelude::*;
use valnet::follower::FollowerOracle;
use valnet::numerics::{Extended, StateVector};

fn enumerate_phibar(inst: &valnet::Instance, s: &[i64]) -> Extended<f64> {
    let ia = inst.interaction().unwrap();
    let mut best: Option<f64> = None;
    for y in all_bits(inst.n_f) {
        let act = ia.follower_activity(&y);
        if (0..inst.m).all(|i| s[i] + act[i] >= ia.rhs[i]) {
            let v: f64 = inst.d.iter().zip(&y).map(|(d, b)| d * *b as f64).sum();
            best = Some(best.map_or(v, |b| b.min(v)));
        }
    }
    best.map_or(Extended::Infinite, Extended::Finite)
}

#[test]
fn worked_values() {
    let inst = twin_knapsack::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    assert_eq!(o.phi(&[0, 1, 0]).value, Extended::Finite(-200.0));
    assert_eq!(o.phi(&[1, 0, 1]).value, Extended::Finite(-100.0));
    assert_eq!(o.phi(&[0, 1, 1]).value, Extended::Finite(-100.0));
    assert_eq!(o.phi(&[1, 0, 1]).y, Some(vec![1, 0]));
    let two = two_row::<f64>();
    let o = FollowerOracle::new(&two).unwrap();
    assert_eq!(o.phibar(&StateVector(vec![-1, -2])).value, Extended::Finite(-2.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phi_is_phibar_of_state(seed in 0u64..10_000, x_code in 0u64..64) {
        let inst = dense::<f64>(seed, 6, 5, 2, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let x: Vec<u8> = (0..6).map(|i| ((x_code >> (5 - i)) & 1) as u8).collect();
        let s = o.interaction().state_of(&x);
        let phi = o.phi(&x);
        prop_assert_eq!(&phi.value, &o.phibar(&s).value);
        prop_assert_eq!(&phi.value, &enumerate_phibar(&inst, &s.0));
        if let Some(y) = phi.y {
            let act = o.interaction().follower_activity(&y);
            prop_assert!((0..inst.m).all(|i| s.0[i] + act[i] >= o.interaction().rhs[i]));
        }
    }

    #[test]
    fn larger_states_never_hurt(seed in 0u64..10_000, s in prop::collection::vec(-12i64..12, 2), bump in prop::collection::vec(0i64..6, 2)) {
        let inst = dense::<f64>(seed, 4, 5, 2, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let lo = StateVector(s.clone());
        let hi = StateVector(s.iter().zip(&bump).map(|(a, b)| a + b).collect());
        let (a, b) = (o.phibar(&lo).value, o.phibar(&hi).value);
        prop_assert!(b <= a, "{:?} at {} vs {:?} at {}", b, hi, a, lo);
    }
}
