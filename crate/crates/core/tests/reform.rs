mod common;

use common::*;
use proptest::prelude::*;
use valnet::follower::FollowerOracle;
use valnet::network::{build_state_network, NetworkOptions};
use valnet::numerics::Extended;
use valnet::reform::{build_flow_polytope, build_hpr, build_indicator_reformulation, build_strengthened};
use valnet_milp::{solve_lp, solve_milp, to_lp_format, Limits, MilpModel, Status};

#[test]
fn binarized_gap_models() {
    let inst = binarized_gap::<f64>();
    let o = FollowerOracle::new(&inst).unwrap();
    let (ind, frag) = build_indicator_reformulation(&o, &NetworkOptions::default()).unwrap();
    assert_eq!(frag.states.len(), 3);
    let lp = solve_lp(&ind.model.relaxed()).unwrap();
    assert!((lp.objective.unwrap() - 0.5).abs() < 1e-6, "{:?}", lp.objective);
    let milp = solve_milp(&ind.model, &Limits::none()).unwrap();
    assert!((milp.objective.unwrap() - 100.0).abs() < 1e-6);

    let net = build_state_network(&o, &NetworkOptions::default()).unwrap().reduce();
    let (flow, _) = build_strengthened(&inst, &net);
    let sol = solve_milp(&flow.model, &Limits::none()).unwrap();
    assert!((sol.objective.unwrap() - 100.0).abs() < 1e-6);
    assert_eq!(flow.leader_bits(&sol.values), vec![0, 1]);

    let hpr = solve_milp(&build_hpr(&inst).model, &Limits::none()).unwrap();
    assert!(hpr.objective.unwrap().abs() < 1e-6);
    assert!(to_lp_format(&flow.model).contains("Subject To"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_fragment_size(seed in 0u64..10_000, m in 1usize..4) {
        let inst = dense::<f64>(seed, 7, 4, m, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let net = build_state_network(&o, &NetworkOptions::default()).unwrap().reduce();
        prop_assume!(!net.is_empty());
        let mut model: MilpModel<f64> = MilpModel::new("flow");
        let x: Vec<_> = (0..7).map(|j| model.add_binary(format!("x{j}"))).collect();
        let z = model.add_var("z", None, None);
        let before = model.num_vars();
        let flow = build_flow_polytope(&mut model, &net, &x, Some(z));
        prop_assert_eq!(model.num_vars() - before, net.num_edges());
        prop_assert_eq!(flow.omega.len(), net.num_edges());
        prop_assert_eq!(model.num_rows(), net.num_nodes() + 7 + 1);
        prop_assert_eq!(flow.num_rows(), model.num_rows());
    }

    #[test]
    fn flow_value_is_phi(seed in 0u64..10_000, m in 1usize..3, x_code in 0u64..128) {
        let inst = dense::<f64>(seed, 7, 4, m, 0);
        let o = FollowerOracle::new(&inst).unwrap();
        let net = build_state_network(&o, &NetworkOptions::default()).unwrap().reduce();
        let xb: Vec<u8> = (0..7).map(|i| ((x_code >> (6 - i)) & 1) as u8).collect();
        let mut model: MilpModel<f64> = MilpModel::new("flow");
        let x: Vec<_> = (0..7).map(|j| model.add_binary(format!("x{j}"))).collect();
        let z = model.add_var("z", None, None);
        model.set_obj(z, 1.0);
        build_flow_polytope(&mut model, &net, &x, Some(z));
        for (v, b) in x.iter().zip(&xb) {
            model.fix(*v, *b as f64);
        }
        // With x fixed the flow LP is integral: its value is the path value.
        let lp = solve_lp(&model.relaxed()).unwrap();
        match o.phi(&xb).value {
            Extended::Infinite => prop_assert_eq!(lp.status, Status::Infeasible),
            Extended::Finite(phi) => {
                prop_assert_eq!(lp.status, Status::Optimal);
                prop_assert!((lp.objective.unwrap() - phi).abs() < 1e-6);
            }
        }
    }
}
