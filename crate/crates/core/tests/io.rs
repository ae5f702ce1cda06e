mod common;

use common::*;
use proptest::prelude::*;
use valnet::instance::BilevelInstance;
use valnet::io::{parse_mps_aux, read_native, write_mps_aux, write_native};
use valnet::Rational;

fn fuzzed(
    n_l: usize,
    n_f: usize,
    m: usize,
    m_l: usize,
) -> impl Strategy<Value = BilevelInstance<f64>> {
    // Quarter steps keep some entries fractional without losing exactness.
    let num = (-400i32..400).prop_map(|v| v as f64 / 4.0);
    let vec = move |n: usize| prop::collection::vec(num.clone(), n);
    let mat = move |r: usize, c: usize| prop::collection::vec(prop::collection::vec((-400i32..400).prop_map(|v| v as f64 / 4.0), c), r);
    (vec(n_l), vec(n_f), vec(n_f), mat(m, n_l), mat(m, n_f), vec(m), mat(m_l, n_l), mat(m_l, n_f), vec(m_l)).prop_map(
        |(c, p, d, a, b, rhs, gx, gy, h)| BilevelInstance::new("fuzz", c, p, d, a, b, rhs).with_leader_rows(gx, gy, h),
    )
}

fn any_instance() -> impl Strategy<Value = BilevelInstance<f64>> {
    (1usize..6, 1usize..5, 1usize..4, 0usize..3).prop_flat_map(|(n_l, n_f, m, m_l)| fuzzed(n_l, n_f, m, m_l))
}

#[test]
fn fixtures_round_trip() {
    for inst in [two_row::<f64>(), twin_knapsack(), binarized_gap(), dense(3, 6, 4, 2, 2)] {
        assert_eq!(read_native::<f64>(&write_native(&inst)).unwrap(), inst);
        let (mps, aux) = write_mps_aux(&inst);
        assert_eq!(parse_mps_aux::<f64>(&mps, &aux).unwrap(), inst);
    }
    let exact = twin_knapsack::<Rational>();
    assert_eq!(read_native::<Rational>(&write_native(&exact)).unwrap(), exact);
}

#[test]
fn hand_written_mps_matches_two_row() {
    let mps = "\
NAME two_row
ROWS
 N  obj
 L  r0
 G  r1
COLUMNS
    MARKER  'MARKER'  'INTORG'
    x0  r0  1
    x1  r0  1
    x2  r0  1   r1  -2
    y0  obj 0   r0  3
    y0  r1  -4
    y1  r0  1   r1  2
    MARKER  'MARKER'  'INTEND'
RHS
    RHS  r0  5   r1  -4
BOUNDS
 BV BND x0
 UP BND x1 1
 BV BND x2
 BV BND y0
 BV BND y1
ENDATA
";
    let aux = "N 2\nM 2\nLC 3\nLC 4\nLR 0\nLR 1\nLO 5\nLO -3\nOS -1\n";
    let inst: BilevelInstance<f64> = parse_mps_aux(mps, aux).unwrap();
    assert_eq!(inst, two_row());
}

#[test]
fn maximize_objective_is_negated() {
    let inst = two_row::<f64>();
    let (mps, aux) = write_mps_aux(&BilevelInstance { c: vec![1.0, -2.0, 0.5], ..inst.clone() });
    let mps = mps.replacen("ROWS", "OBJSENSE\n    MAX\nROWS", 1);
    let back: BilevelInstance<f64> = parse_mps_aux(&mps, &aux).unwrap();
    assert_eq!(back.c, vec![-1.0, 2.0, -0.5]);
    assert_eq!(back.d, inst.d);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn native_round_trip(inst in any_instance()) {
        let text = write_native(&inst);
        let back: BilevelInstance<f64> = read_native(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(write_native(&back), text);
    }

    #[test]
    fn mps_round_trip(inst in any_instance()) {
        let (mps, aux) = write_mps_aux(&inst);
        let back: BilevelInstance<f64> = parse_mps_aux(&mps, &aux).unwrap();
        prop_assert_eq!(&back, &inst);
        let exact: BilevelInstance<Rational> = parse_mps_aux(&mps, &aux).unwrap();
        prop_assert_eq!(exact.convert::<f64>(), inst);
    }
}
