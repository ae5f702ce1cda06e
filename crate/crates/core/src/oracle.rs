//! Brute-force bilevel solver for small instances, kept independent of
//! the follower oracle and networks so it can check them.

use std::collections::HashMap;

use valnet_milp::Scalar;

use crate::instance::{BilevelInstance, InstanceError};
use crate::numerics::{same_value, Extended};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OracleError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("enumeration needs about {work} evaluations, above the cap of {cap}")]
    TooLarge { work: u128, cap: u128 },
}

/// Default cap on `2^n_l + states · 2^n_f`.
pub const DEFAULT_WORK_CAP: u128 = 1 << 36;

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForceResult<T> {
    /// `None` when no leader decision has a bilevel feasible response.
    pub value: Option<T>,
    pub x: Option<Vec<u8>>,
    pub y: Option<Vec<u8>>,
    /// Distinct interaction states met.
    pub states: usize,
    /// `φ(x)` for every x in lexicographic order, when requested.
    pub table: Option<Vec<Extended<T>>>,
}

struct Response<T> {
    d: T,
    p: T,
    b: Vec<i64>,
    g: Vec<T>,
}

struct StateInfo<T> {
    phi: Extended<T>,
    optimal: Vec<usize>,
}

/// Enumerates every leader decision and every follower decision.
pub fn brute_force_bilevel<T: Scalar>(
    inst: &BilevelInstance<T>,
    cap: u128,
    with_table: bool,
) -> Result<BruteForceResult<T>, OracleError> {
    inst.check()?;
    let ia = inst.interaction()?;
    let (nl, nf, m) = (inst.n_l, inst.n_f, inst.m);
    if nl >= 64 || nf >= 64 || (1u128 << nl) + (1u128 << nf) > cap {
        let work = 1u128.checked_shl(nl.max(nf) as u32).unwrap_or(u128::MAX);
        return Err(OracleError::TooLarge { work, cap });
    }
    let responses: Vec<Response<T>> = (0..1u64 << nf)
        .map(|code| {
            let y: Vec<u8> = (0..nf).map(|k| ((code >> (nf - 1 - k)) & 1) as u8).collect();
            let sum = |row: &[T]| row.iter().zip(&y).filter(|(_, b)| **b == 1).fold(T::zero(), |a, (c, _)| a + c.clone());
            Response {
                d: sum(&inst.d),
                p: sum(&inst.p),
                b: ia.b_rows.iter().map(|r| r.iter().zip(&y).filter(|(_, b)| **b == 1).map(|(c, _)| *c).sum()).collect(),
                g: inst.gy.iter().map(|r| sum(r)).collect(),
            }
        })
        .collect();

    let mut states: HashMap<Vec<i64>, StateInfo<T>> = HashMap::new();
    let mut x = vec![0u8; nl];
    let mut s = vec![0i64; m];
    let mut gx = vec![T::zero(); inst.m_l()];
    let mut cx = T::zero();
    let mut best: Option<(T, Vec<u8>, usize)> = None;
    let mut table = with_table.then(|| vec![Extended::Infinite; 1usize << nl]);
    let total = 1u64 << nl;
    for k in 0..total {
        if k > 0 {
            // Gray code: flip the bit at the trailing zeros of k.
            let j = nl - 1 - k.trailing_zeros() as usize;
            let sign: i64 = if x[j] == 0 { 1 } else { -1 };
            x[j] ^= 1;
            for i in 0..m {
                s[i] += sign * ia.cols[j][i];
            }
            for (i, g) in gx.iter_mut().enumerate() {
                let v = inst.gx[i][j].clone();
                *g = if sign > 0 { g.clone() + v } else { g.clone() - v };
            }
            cx = if sign > 0 { cx + inst.c[j].clone() } else { cx - inst.c[j].clone() };
        }
        if !states.contains_key(&s) {
            let work = (states.len() as u128 + 1) * (1u128 << nf) + (1u128 << nl);
            if work > cap {
                return Err(OracleError::TooLarge { work, cap });
            }
            let mut phi: Option<T> = None;
            let mut optimal = Vec::new();
            for (idx, r) in responses.iter().enumerate() {
                if (0..m).any(|i| s[i] + r.b[i] < ia.rhs[i]) {
                    continue;
                }
                match &phi {
                    Some(v) if same_value(&r.d, v) => optimal.push(idx),
                    Some(v) if r.d > *v => {}
                    _ => {
                        phi = Some(r.d.clone());
                        optimal = vec![idx];
                    }
                }
            }
            let phi = phi.map_or(Extended::Infinite, Extended::Finite);
            states.insert(s.clone(), StateInfo { phi, optimal });
        }
        let info = &states[&s];
        if let Some(t) = table.as_mut() {
            let code = x.iter().fold(0usize, |a, b| (a << 1) | *b as usize);
            t[code] = info.phi.clone();
        }
        for &idx in &info.optimal {
            let r = &responses[idx];
            if (0..inst.m_l()).any(|i| gx[i].clone() + r.g[i].clone() < inst.h[i]) {
                continue;
            }
            let value = cx.clone() + r.p.clone();
            let better = match &best {
                None => true,
                Some((v, bx, bidx)) => {
                    value < *v && !same_value(&value, v) || same_value(&value, v) && (x < *bx || x == *bx && idx < *bidx)
                }
            };
            if better {
                best = Some((value, x.clone(), idx));
            }
        }
    }
    let states_seen = states.len();
    Ok(match best {
        Some((v, bx, idx)) => BruteForceResult {
            value: Some(v),
            x: Some(bx),
            y: Some((0..nf).map(|k| ((idx >> (nf - 1 - k)) & 1) as u8).collect()),
            states: states_seen,
            table,
        },
        None => BruteForceResult { value: None, x: None, y: None, states: states_seen, table },
    })
}
