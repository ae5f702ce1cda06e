#![allow(dead_code)]

use valnet::instance::{int_mat, int_vec, BilevelInstance};
use valnet::Scalar;

/// Three leader bits, two follower bits, two interaction rows.
pub fn two_row<T: Scalar>() -> BilevelInstance<T> {
    BilevelInstance::new(
        "two_row",
        int_vec(&[0, 0, 0]),
        int_vec(&[0, 0]),
        int_vec(&[-5, 3]),
        int_mat(&[&[-1, -1, -1], &[0, 0, -2]]),
        int_mat(&[&[-3, -1], &[-4, 2]]),
        int_vec(&[-5, -4]),
    )
}

/// Two knapsack rows sharing three leader bits.
pub fn twin_knapsack<T: Scalar>() -> BilevelInstance<T> {
    BilevelInstance::new(
        "twin_knapsack",
        int_vec(&[0, 0, 0]),
        int_vec(&[0, 0]),
        int_vec(&[-100, -100]),
        int_mat(&[&[-1, -2, -3], &[-3, -2, -1]]),
        int_mat(&[&[-6, 0], &[0, -7]]),
        int_vec(&[-10, -10]),
    )
}

/// Continuous follower `y1 = 5x1 + 5x2, y2 <= 20 y1, y2 <= 199 - 19.8 y1,
/// min -y2` written with binaries: `y1 = 5(u1 + u2)`, `y2 = v1 + 100 v100`.
/// Leader: `min x1 + y2` with `x1 + x2 = 1`, `x2 >= 1`.
pub fn binarized_gap<T: Scalar>() -> BilevelInstance<T> {
    BilevelInstance::new(
        "binarized_gap",
        int_vec(&[1, 0]),
        int_vec(&[0, 0, 1, 100]),
        int_vec(&[0, 0, -1, -100]),
        int_mat(&[&[-5, -5], &[5, 5], &[0, 0], &[0, 0]]),
        int_mat(&[&[5, 5, 0, 0], &[-5, -5, 0, 0], &[100, 100, -1, -100], &[-99, -99, -1, -100]]),
        int_vec(&[0, 0, 0, -199]),
    )
    .with_leader_rows(
        int_mat(&[&[1, 1], &[-1, -1], &[0, 1]]),
        int_mat(&[&[0, 0, 0, 0], &[0, 0, 0, 0], &[0, 0, 0, 0]]),
        int_vec(&[1, -1, 1]),
    )
}

pub fn all_bits(n: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u64 << n).map(move |code| (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as u8).collect())
}

/// Dense instance with mixed-sign data; the follower is feasible at
/// roughly half the leader decisions.
pub fn dense<T: Scalar>(seed: u64, n_l: usize, n_f: usize, m: usize, leader_rows: usize) -> BilevelInstance<T> {
    use rand::{Rng, SeedableRng};
    let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut row = |n: usize, lo: i64, hi: i64| -> Vec<i64> { (0..n).map(|_| r.gen_range(lo..=hi)).collect() };
    let a: Vec<Vec<i64>> = (0..m).map(|_| row(n_l, -6, 6)).collect();
    let b: Vec<Vec<i64>> = (0..m).map(|_| row(n_f, -6, 6)).collect();
    let c = row(n_l, -20, 20);
    let p = row(n_f, -20, 20);
    let d = row(n_f, -20, 20);
    let gx: Vec<Vec<i64>> = (0..leader_rows).map(|_| row(n_l, -4, 4)).collect();
    let gy: Vec<Vec<i64>> = (0..leader_rows).map(|_| row(n_f, -4, 4)).collect();
    let h = row(leader_rows, -6, 0);
    let rhs = row(m, -6, 3);
    let conv = |m: &[Vec<i64>]| m.iter().map(|r| int_vec::<T>(r)).collect::<Vec<_>>();
    BilevelInstance::new(format!("dense{seed}"), int_vec(&c), int_vec(&p), int_vec(&d), conv(&a), conv(&b), int_vec(&rhs))
        .with_leader_rows(conv(&gx), conv(&gy), int_vec(&h))
}
