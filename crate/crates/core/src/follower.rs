//! The follower's value function `φ(x)` and its state form `φ̄(s)`.
//!
//! Small followers are answered from a table of every `y` sorted by
//! objective; larger ones by a MILP followed by a lexicographic
//! refinement pass. Answers are memoized per state.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use valnet_milp::{solve_milp, Limits, MilpModel, Scalar, Sense, Status, VarId};

use crate::instance::{BilevelInstance, InstanceError, Interaction};
use crate::numerics::{bits_of, dot, Extended, StateVector};

/// Followers with at most this many variables are solved by table lookup.
pub const TABLE_LIMIT: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct FollowerResult<T> {
    pub value: Extended<T>,
    /// Lexicographically smallest optimal response.
    pub y: Option<Vec<u8>>,
}

impl<T> FollowerResult<T> {
    fn infeasible() -> Self {
        FollowerResult { value: Extended::Infinite, y: None }
    }

    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }
}

struct Candidate<T> {
    value: T,
    activity: Vec<i64>,
    code: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleStats {
    pub queries: usize,
    pub evaluations: usize,
}

pub struct FollowerOracle<'a, T: Scalar> {
    inst: &'a BilevelInstance<T>,
    ia: Interaction,
    table: Option<Vec<Candidate<T>>>,
    max_activity: Vec<i64>,
    cache: RwLock<HashMap<StateVector, FollowerResult<T>>>,
    queries: AtomicUsize,
    evaluations: AtomicUsize,
}

impl<'a, T: Scalar> FollowerOracle<'a, T> {
    pub fn new(inst: &'a BilevelInstance<T>) -> Result<Self, InstanceError> {
        inst.check()?;
        let ia = inst.interaction()?;
        let max_activity = ia.b_rows.iter().map(|r| r.iter().filter(|v| **v > 0).sum()).collect();
        let table = (inst.n_f <= TABLE_LIMIT).then(|| {
            let mut t: Vec<Candidate<T>> = (0..1u64 << inst.n_f)
                .map(|code| {
                    let y = bits_of(code, inst.n_f);
                    Candidate { value: dot(&inst.d, &y), activity: ia.follower_activity(&y), code }
                })
                .collect();
            // The code orders y lexicographically (first bit most significant).
            t.sort_by(|a, b| {
                a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal).then(a.code.cmp(&b.code))
            });
            t
        });
        Ok(FollowerOracle {
            inst,
            ia,
            table,
            max_activity,
            cache: RwLock::new(HashMap::new()),
            queries: AtomicUsize::new(0),
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn instance(&self) -> &'a BilevelInstance<T> {
        self.inst
    }

    pub fn interaction(&self) -> &Interaction {
        &self.ia
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            queries: self.queries.load(Ordering::Relaxed),
            evaluations: self.evaluations.load(Ordering::Relaxed),
        }
    }

    /// Upper bound on every finite follower value.
    pub fn value_upper(&self) -> T {
        self.inst.d.iter().filter(|v| **v > T::zero()).fold(T::zero(), |a, v| a + v.clone())
    }

    /// Lower bound on every follower value.
    pub fn value_lower(&self) -> T {
        self.inst.d.iter().filter(|v| **v < T::zero()).fold(T::zero(), |a, v| a + v.clone())
    }

    pub fn phi(&self, x: &[u8]) -> FollowerResult<T> {
        self.phibar(&self.ia.state_of(x))
    }

    pub fn phibar(&self, s: &StateVector) -> FollowerResult<T> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        if let Some(r) = self.cache.read().expect("follower cache poisoned").get(s) {
            return r.clone();
        }
        let r = self.solve(s);
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.cache.write().expect("follower cache poisoned").insert(s.clone(), r.clone());
        r
    }

    fn solve(&self, s: &StateVector) -> FollowerResult<T> {
        let need: Vec<i64> = self.ia.rhs.iter().zip(&s.0).map(|(b, v)| b - v).collect();
        if need.iter().zip(&self.max_activity).any(|(n, mx)| n > mx) {
            return FollowerResult::infeasible();
        }
        match &self.table {
            Some(table) => table
                .iter()
                .find(|c| c.activity.iter().zip(&need).all(|(a, n)| a >= n))
                .map(|c| FollowerResult {
                    value: Extended::Finite(c.value.clone()),
                    y: Some(bits_of(c.code, self.inst.n_f)),
                })
                .unwrap_or_else(FollowerResult::infeasible),
            None => self.solve_milp(&need),
        }
    }

    fn follower_model(&self, need: &[i64]) -> (MilpModel<T>, Vec<VarId>) {
        let mut model = MilpModel::new("follower");
        let ys: Vec<VarId> = (0..self.inst.n_f).map(|k| model.add_binary(format!("y{k}"))).collect();
        for (k, y) in ys.iter().enumerate() {
            model.set_obj(*y, self.inst.d[k].clone());
        }
        for (i, row) in self.ia.b_rows.iter().enumerate() {
            let terms = row.iter().zip(&ys).filter(|(v, _)| **v != 0).map(|(v, y)| (*y, T::from_int(*v))).collect();
            model.add_row(format!("r{i}"), terms, Sense::Ge, T::from_int(need[i]));
        }
        (model, ys)
    }

    fn solve_milp(&self, need: &[i64]) -> FollowerResult<T> {
        let (mut model, ys) = self.follower_model(need);
        let sol = match solve_milp(&model, &Limits::none()) {
            Ok(s) => s,
            Err(e) => panic!("follower model rejected: {e}"),
        };
        match sol.status {
            Status::Optimal => {}
            Status::Infeasible => return FollowerResult::infeasible(),
            st => panic!("follower MILP ended with status {st:?}"),
        }
        let mut best: Vec<u8> = ys.iter().map(|y| sol.bit(*y)).collect();
        let value = dot(&self.inst.d, &best);

        // Walk the bits left to right, trying to clear each one while
        // staying optimal.
        let scale = T::max_of(T::one(), value.abs());
        let cap = if T::EXACT { value.clone() } else { value.clone() + T::feas_tol() * scale };
        let obj_terms: Vec<(VarId, T)> = ys.iter().zip(&self.inst.d).map(|(y, d)| (*y, d.clone())).collect();
        model.add_row("opt", obj_terms, Sense::Le, cap);
        for k in 0..ys.len() {
            if best[k] == 1 {
                let mut trial = model.clone();
                trial.fix(ys[k], T::zero());
                let sol = solve_milp(&trial, &Limits::none()).expect("follower model rejected");
                if sol.is_optimal() {
                    best = ys.iter().map(|y| sol.bit(*y)).collect();
                }
            }
            model.fix(ys[k], T::from_int(i64::from(best[k])));
        }
        FollowerResult { value: Extended::Finite(dot(&self.inst.d, &best)), y: Some(best) }
    }
}

pub fn eval_phi<T: Scalar>(inst: &BilevelInstance<T>, x: &[u8]) -> Result<FollowerResult<T>, InstanceError> {
    Ok(FollowerOracle::new(inst)?.phi(x))
}

pub fn eval_phibar<T: Scalar>(inst: &BilevelInstance<T>, s: &StateVector) -> Result<FollowerResult<T>, InstanceError> {
    Ok(FollowerOracle::new(inst)?.phibar(s))
}

/// Whether `x1` and `x2` share a state, and hence a follower value.
pub fn phi_identity_check<T: Scalar>(inst: &BilevelInstance<T>, x1: &[u8], x2: &[u8]) -> Result<bool, InstanceError> {
    let ia = inst.interaction()?;
    Ok(ia.state_of(x1) == ia.state_of(x2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{int_mat, int_vec};

    fn two_row(n_pad: usize) -> BilevelInstance<f64> {
        // Padding with zero-cost, zero-activity variables pushes the
        // follower past the table limit without changing its values.
        let mut d = vec![-5, 3];
        d.extend(std::iter::repeat(0).take(n_pad));
        let mut b0 = vec![-3, -1];
        let mut b1 = vec![-4, 2];
        b0.extend(std::iter::repeat(0).take(n_pad));
        b1.extend(std::iter::repeat(0).take(n_pad));
        BilevelInstance::new(
            "t",
            vec![0.0; 3],
            vec![0.0; d.len()],
            int_vec(&d),
            int_mat(&[&[-1, -1, -1], &[0, 0, -2]]),
            vec![int_vec(&b0), int_vec(&b1)],
            int_vec(&[-5, -4]),
        )
    }

    #[test]
    fn table_and_milp_agree() {
        let small = two_row(0);
        let big = two_row(TABLE_LIMIT);
        let a = FollowerOracle::new(&small).unwrap();
        let b = FollowerOracle::new(&big).unwrap();
        for code in 0..8 {
            let x = bits_of(code, 3);
            let ra = a.phi(&x);
            let rb = b.phi(&x);
            assert_eq!(ra.value, rb.value, "x = {x:?}");
            assert_eq!(ra.y.as_deref(), rb.y.as_ref().map(|y| &y[..2]));
            assert!(rb.y.unwrap()[2..].iter().all(|v| *v == 0));
        }
    }

    #[test]
    fn memo_counts() {
        let inst = two_row(0);
        let o = FollowerOracle::new(&inst).unwrap();
        o.phi(&[1, 0, 0]);
        o.phi(&[0, 1, 0]);
        assert_eq!(o.stats(), OracleStats { queries: 2, evaluations: 1 });
    }

    #[test]
    fn infeasible_state() {
        let inst = two_row(0);
        let r = eval_phibar(&inst, &StateVector(vec![-10, 0])).unwrap();
        assert_eq!(r, FollowerResult { value: Extended::Infinite, y: None });
    }
}
