//! Seeded random instances.
//!
//! The stream is ChaCha8 seeded with `seed_from_u64(seed)` and consumed
//! one `next_u64` at a time, so it can be reproduced outside Rust:
//!
//! * `U{lo..hi}` (inclusive): with `r = hi - lo + 1` and
//!   `zone = 2^64 - (2^64 mod r)`, draw until `v < zone`, return
//!   `lo + v mod r`.
//! * A Bernoulli draw with probability `q` takes one `v` and succeeds when
//!   `(v >> 11) · 2^-53 < q`.
//!
//! Draw order: `A` row by row, then `B`, leader-row `Gx`, leader-row `Gy`,
//! then `c`, `p`, `d`. An entry of `A` or `Gx` is zero with probability
//! 0.8, otherwise `5·U{1..α}`. Entries of `B` and `Gy` are `U{0..100}`.
//! `c`, `p` are `U{-100..-1}` and `d` is `U{-50..50}`. Right-hand sides
//! are `floor(β · row sum)` computed in exact arithmetic.

use num_integer::Integer;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use valnet_milp::{Rational, Scalar};

use crate::instance::BilevelInstance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_l: usize,
    pub n_f: usize,
    pub m: usize,
    /// Leader rows; defaults to `m`.
    pub m_l: usize,
    pub alpha: u32,
    pub beta: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Follower as large as the leader and as many leader rows as
    /// interaction rows.
    pub fn new(n_l: usize, m: usize, alpha: u32, beta: f64, seed: u64) -> Self {
        GeneratorConfig { n_l, n_f: n_l, m, m_l: m, alpha, beta, seed }
    }

    pub fn with_follower(mut self, n_f: usize) -> Self {
        self.n_f = n_f;
        self
    }

    pub fn with_leader_rows(mut self, m_l: usize) -> Self {
        self.m_l = m_l;
        self
    }

    pub fn name(&self) -> String {
        format!("gen_l{}_f{}_m{}_a{}_b{}_s{}", self.n_l, self.n_f, self.m, self.alpha, self.beta, self.seed)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GeneratorError {
    #[error("alpha must be at least 1")]
    Alpha,
    #[error("beta must be finite and in [0, 1], got {0}")]
    Beta(f64),
    #[error("n_l, n_f and m must be positive")]
    Empty,
}

struct Draws(ChaCha8Rng);

impl Draws {
    fn uniform(&mut self, lo: i64, hi: i64) -> i64 {
        let range = (hi - lo + 1) as u64;
        let zone = u64::MAX - (u64::MAX % range + 1) % range;
        loop {
            let v = self.0.next_u64();
            if v <= zone {
                return lo + (v % range) as i64;
            }
        }
    }

    fn bernoulli(&mut self, q: f64) -> bool {
        ((self.0.next_u64() >> 11) as f64) * (1.0 / (1u64 << 53) as f64) < q
    }

    fn sparse(&mut self, alpha: u32) -> i64 {
        if self.bernoulli(0.2) {
            5 * self.uniform(1, alpha as i64)
        } else {
            0
        }
    }
}

fn floor_share(beta: &Rational, sum: i64) -> i64 {
    let v = beta * Rational::from_integer(sum.into());
    let (q, _) = v.numer().div_mod_floor(v.denom());
    i64::try_from(q).expect("row sums fit in i64")
}

pub fn generate<T: Scalar>(cfg: &GeneratorConfig) -> Result<BilevelInstance<T>, GeneratorError> {
    if cfg.alpha < 1 {
        return Err(GeneratorError::Alpha);
    }
    if !cfg.beta.is_finite() || !(0.0..=1.0).contains(&cfg.beta) {
        return Err(GeneratorError::Beta(cfg.beta));
    }
    if cfg.n_l == 0 || cfg.n_f == 0 || cfg.m == 0 {
        return Err(GeneratorError::Empty);
    }
    let beta = cfg.beta.to_rational().ok_or(GeneratorError::Beta(cfg.beta))?;
    let mut r = Draws(ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut matrix = |rows: usize, cols: usize, f: &mut dyn FnMut(&mut Draws) -> i64| -> Vec<Vec<i64>> {
        (0..rows).map(|_| (0..cols).map(|_| f(&mut r)).collect()).collect()
    };
    let alpha = cfg.alpha;
    let a = matrix(cfg.m, cfg.n_l, &mut |d| d.sparse(alpha));
    let b = matrix(cfg.m, cfg.n_f, &mut |d| d.uniform(0, 100));
    let gx = matrix(cfg.m_l, cfg.n_l, &mut |d| d.sparse(alpha));
    let gy = matrix(cfg.m_l, cfg.n_f, &mut |d| d.uniform(0, 100));
    let c: Vec<i64> = (0..cfg.n_l).map(|_| r.uniform(-100, -1)).collect();
    let p: Vec<i64> = (0..cfg.n_f).map(|_| r.uniform(-100, -1)).collect();
    let d: Vec<i64> = (0..cfg.n_f).map(|_| r.uniform(-50, 50)).collect();
    let shares = |left: &[Vec<i64>], right: &[Vec<i64>]| -> Vec<i64> {
        left.iter().zip(right).map(|(l, r)| floor_share(&beta, l.iter().sum::<i64>() + r.iter().sum::<i64>())).collect()
    };
    let rhs = shares(&a, &b);
    let h = shares(&gx, &gy);
    let conv = |v: &[i64]| v.iter().map(|x| T::from_int(*x)).collect::<Vec<T>>();
    let convm = |m: &[Vec<i64>]| m.iter().map(|r| conv(r)).collect::<Vec<_>>();
    let inst = BilevelInstance::new(cfg.name(), conv(&c), conv(&p), conv(&d), convm(&a), convm(&b), conv(&rhs))
        .with_leader_rows(convm(&gx), convm(&gy), conv(&h));
    Ok(inst)
}
