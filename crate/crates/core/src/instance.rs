//! Bilevel instance data, validation, row scaling and statistics.
//!
//! Conventions: both levels minimize, every row is `>=`.
//!
//! ```text
//! min  c·x + p·y
//! s.t. Gx·x + Gy·y >= h
//!      y in argmin { d·y : B·y >= rhs - A·x, y binary }
//!      x binary
//! ```

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use valnet_milp::{Rational, Scalar};

use crate::numerics::{Overflow, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub struct BilevelInstance<T> {
    pub name: String,
    pub n_l: usize,
    pub n_f: usize,
    pub m: usize,
    /// Leader objective on x.
    pub c: Vec<T>,
    /// Leader objective on y.
    pub p: Vec<T>,
    /// Follower objective.
    pub d: Vec<T>,
    /// Interaction rows, leader part (`m × n_l`).
    pub a: Vec<Vec<T>>,
    /// Interaction rows, follower part (`m × n_f`).
    pub b: Vec<Vec<T>>,
    /// Interaction right-hand side.
    pub rhs: Vec<T>,
    /// Leader rows (`m_L × n_l`).
    pub gx: Vec<Vec<T>>,
    /// Leader rows (`m_L × n_f`).
    pub gy: Vec<Vec<T>>,
    pub h: Vec<T>,
    /// Factor each interaction row was multiplied by to make it integral.
    pub row_scale: Vec<T>,
}

pub fn int_vec<T: Scalar>(v: &[i64]) -> Vec<T> {
    v.iter().map(|x| T::from_int(*x)).collect()
}

pub fn int_mat<T: Scalar>(rows: &[&[i64]]) -> Vec<Vec<T>> {
    rows.iter().map(|r| int_vec(r)).collect()
}

impl<T: Scalar> BilevelInstance<T> {
    /// Instance without leader rows. Dimensions are taken from `c`, `d`
    /// and `rhs`.
    pub fn new(
        name: impl Into<String>,
        c: Vec<T>,
        p: Vec<T>,
        d: Vec<T>,
        a: Vec<Vec<T>>,
        b: Vec<Vec<T>>,
        rhs: Vec<T>,
    ) -> Self {
        let m = rhs.len();
        BilevelInstance {
            name: name.into(),
            n_l: c.len(),
            n_f: d.len(),
            m,
            c,
            p,
            d,
            a,
            b,
            rhs,
            gx: Vec::new(),
            gy: Vec::new(),
            h: Vec::new(),
            row_scale: vec![T::one(); m],
        }
    }

    pub fn with_leader_rows(mut self, gx: Vec<Vec<T>>, gy: Vec<Vec<T>>, h: Vec<T>) -> Self {
        self.gx = gx;
        self.gy = gy;
        self.h = h;
        self
    }

    pub fn m_l(&self) -> usize {
        self.h.len()
    }

    /// Same instance over another scalar type (through exact rationals).
    pub fn convert<U: Scalar>(&self) -> BilevelInstance<U> {
        let cv = |v: &[T]| -> Vec<U> {
            v.iter().map(|x| U::from_rational(&x.to_rational().unwrap_or_else(Rational::zero))).collect()
        };
        let cm = |m: &[Vec<T>]| -> Vec<Vec<U>> { m.iter().map(|r| cv(r)).collect() };
        BilevelInstance {
            name: self.name.clone(),
            n_l: self.n_l,
            n_f: self.n_f,
            m: self.m,
            c: cv(&self.c),
            p: cv(&self.p),
            d: cv(&self.d),
            a: cm(&self.a),
            b: cm(&self.b),
            rhs: cv(&self.rhs),
            gx: cm(&self.gx),
            gy: cm(&self.gy),
            h: cv(&self.h),
            row_scale: cv(&self.row_scale),
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (what, n) in [("n_l", self.n_l), ("n_f", self.n_f), ("m", self.m)] {
            if n == 0 {
                out.push(Violation::EmptyDimension(what));
            }
        }
        let mut len = |what: &str, found: usize, expected: usize| {
            if found != expected {
                out.push(Violation::Dimension { what: what.to_string(), expected, found });
            }
        };
        len("c", self.c.len(), self.n_l);
        len("p", self.p.len(), self.n_f);
        len("d", self.d.len(), self.n_f);
        len("A rows", self.a.len(), self.m);
        len("B rows", self.b.len(), self.m);
        len("rhs", self.rhs.len(), self.m);
        len("row_scale", self.row_scale.len(), self.m);
        for (i, r) in self.a.iter().enumerate() {
            len(&format!("A row {i}"), r.len(), self.n_l);
        }
        for (i, r) in self.b.iter().enumerate() {
            len(&format!("B row {i}"), r.len(), self.n_f);
        }
        let m_l = self.h.len();
        len("Gx rows", self.gx.len(), m_l);
        len("Gy rows", self.gy.len(), m_l);
        for (i, r) in self.gx.iter().enumerate() {
            len(&format!("Gx row {i}"), r.len(), self.n_l);
        }
        for (i, r) in self.gy.iter().enumerate() {
            len(&format!("Gy row {i}"), r.len(), self.n_f);
        }

        let all = self
            .c
            .iter()
            .chain(&self.p)
            .chain(&self.d)
            .chain(&self.rhs)
            .chain(&self.h)
            .chain(self.a.iter().flatten())
            .chain(self.b.iter().flatten())
            .chain(self.gx.iter().flatten())
            .chain(self.gy.iter().flatten());
        if all.clone().any(|v| v.to_rational().is_none()) {
            out.push(Violation::NonFinite);
        }
        for i in 0..self.m {
            let row = self
                .a
                .get(i)
                .into_iter()
                .flatten()
                .chain(self.b.get(i).into_iter().flatten())
                .chain(self.rhs.get(i));
            if row.into_iter().any(|v| v.to_exact_i64().is_none()) {
                out.push(Violation::NonInteger { row: i });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Multiplies each interaction row by the LCM of its denominators.
    /// Integer rows are left untouched.
    pub fn scale_to_integer(&self) -> Result<Self, InstanceError> {
        let mut out = self.clone();
        for i in 0..self.m {
            let row: Vec<Rational> = self.a[i]
                .iter()
                .chain(&self.b[i])
                .chain(std::iter::once(&self.rhs[i]))
                .map(|v| v.to_rational().ok_or(InstanceError::NonFinite { row: i }))
                .collect::<Result<_, _>>()?;
            let mut lcm = num_traits::One::one();
            for r in &row {
                lcm = num_integer::Integer::lcm(&lcm, r.denom());
            }
            let factor = Rational::from_integer(lcm);
            if factor.is_one() {
                continue;
            }
            let scaled: Vec<Rational> = row.iter().map(|r| r * &factor).collect();
            if scaled.iter().any(|r| r.to_integer().to_i64().is_none()) {
                return Err(InstanceError::ScaleOverflow { row: i });
            }
            let conv = |r: &Rational| T::from_rational(r);
            let n_l = self.n_l;
            out.a[i] = scaled[..n_l].iter().map(conv).collect();
            out.b[i] = scaled[n_l..n_l + self.n_f].iter().map(conv).collect();
            out.rhs[i] = conv(&scaled[n_l + self.n_f]);
            out.row_scale[i] = self.row_scale[i].clone() * T::from_rational(&factor);
        }
        Ok(out)
    }

    /// Integer view of `A`, `B`, `rhs`.
    pub fn interaction(&self) -> Result<Interaction, InstanceError> {
        let int = |v: &T, row: usize| v.to_exact_i64().ok_or(InstanceError::NonInteger { row });
        let mut a_rows = Vec::with_capacity(self.m);
        let mut b_rows = Vec::with_capacity(self.m);
        let mut rhs = Vec::with_capacity(self.m);
        for i in 0..self.m {
            a_rows.push(self.a[i].iter().map(|v| int(v, i)).collect::<Result<Vec<_>, _>>()?);
            b_rows.push(self.b[i].iter().map(|v| int(v, i)).collect::<Result<Vec<_>, _>>()?);
            rhs.push(int(&self.rhs[i], i)?);
        }
        Interaction::new(a_rows, b_rows, rhs)
    }

    pub fn interaction_stats(&self) -> InteractionStats {
        let mut values = BTreeSet::new();
        let mut nnz = 0usize;
        for v in self.a.iter().flatten() {
            if let Some(r) = v.to_rational() {
                if !r.is_zero() {
                    nnz += 1;
                    values.insert(r);
                }
            }
        }
        let cells = self.m * self.n_l;
        let tau = if cells == 0 { 0.0 } else { nnz as f64 / cells as f64 };
        let subset_sums = self
            .a
            .iter()
            .map(|row| {
                let ints: Option<Vec<i64>> = row.iter().map(|v| v.to_exact_i64()).collect();
                ints.and_then(|r| distinct_subset_sums(&r, SUBSET_SUM_CAP))
            })
            .collect();
        InteractionStats { alpha: values.len(), tau, subset_sums }
    }

    /// `Gx·x + Gy·y >= h` within tolerance.
    pub fn leader_rows_hold(&self, x: &[u8], y: &[u8]) -> bool {
        (0..self.m_l()).all(|i| {
            let lhs = crate::numerics::dot(&self.gx[i], x) + crate::numerics::dot(&self.gy[i], y);
            crate::numerics::at_most(&self.h[i], &lhs)
        })
    }

    pub fn leader_objective(&self, x: &[u8], y: &[u8]) -> T {
        crate::numerics::dot(&self.c, x) + crate::numerics::dot(&self.p, y)
    }
}

const SUBSET_SUM_CAP: usize = 1_000_000;

/// Number of distinct subset sums of `row`, `None` beyond `cap`.
fn distinct_subset_sums(row: &[i64], cap: usize) -> Option<usize> {
    let mut sums = BTreeSet::from([0i64]);
    for &a in row {
        if a == 0 {
            continue;
        }
        let shifted: Vec<i64> = sums.iter().filter_map(|s| s.checked_add(a)).collect();
        sums.extend(shifted);
        if sums.len() > cap {
            return None;
        }
    }
    Some(sums.len())
}

/// Integer interaction data in the form the network builders use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub m: usize,
    pub n_l: usize,
    pub n_f: usize,
    pub a_rows: Vec<Vec<i64>>,
    /// Column `j` of `A`, the state change when `x_j = 1`.
    pub cols: Vec<Vec<i64>>,
    pub b_rows: Vec<Vec<i64>>,
    pub rhs: Vec<i64>,
}

impl Interaction {
    pub fn new(a_rows: Vec<Vec<i64>>, b_rows: Vec<Vec<i64>>, rhs: Vec<i64>) -> Result<Self, InstanceError> {
        let m = rhs.len();
        let n_l = a_rows.first().map_or(0, Vec::len);
        let n_f = b_rows.first().map_or(0, Vec::len);
        let cols = (0..n_l).map(|j| a_rows.iter().map(|r| r[j]).collect()).collect();
        let it = Interaction { m, n_l, n_f, a_rows, cols, b_rows, rhs };
        // Reject data whose extreme activities overflow.
        for i in 0..m {
            let span = |r: &[i64]| -> Option<(i64, i64)> {
                let mut lo = 0i64;
                let mut hi = 0i64;
                for &v in r {
                    if v < 0 {
                        lo = lo.checked_add(v)?;
                    } else {
                        hi = hi.checked_add(v)?;
                    }
                }
                Some((lo, hi))
            };
            let ok = span(&it.a_rows[i])
                .zip(span(&it.b_rows[i]))
                .and_then(|((al, ah), (bl, bh))| {
                    al.checked_add(bl)?.checked_sub(it.rhs[i])?;
                    ah.checked_add(bh)?.checked_sub(it.rhs[i])
                })
                .is_some();
            if !ok {
                return Err(InstanceError::Overflow(Overflow(format!("interaction row {i}"))));
            }
        }
        Ok(it)
    }

    pub fn state_of(&self, x: &[u8]) -> StateVector {
        StateVector(self.a_rows.iter().map(|r| crate::numerics::dot_i64(r, x)).collect())
    }

    /// `B·y`.
    pub fn follower_activity(&self, y: &[u8]) -> Vec<i64> {
        self.b_rows.iter().map(|r| crate::numerics::dot_i64(r, y)).collect()
    }

    /// Smallest state component that still admits a feasible follower:
    /// `V_i = rhs_i - max_y (B·y)_i`.
    pub fn min_feasible_state(&self) -> Vec<i64> {
        self.b_rows
            .iter()
            .zip(&self.rhs)
            .map(|(r, b)| b - r.iter().filter(|v| **v > 0).sum::<i64>())
            .collect()
    }

    /// Largest state change still available from variable `j` onward,
    /// per row, for `j = 0..=n_l` in the given variable order.
    pub fn future_max(&self, order: &[usize]) -> Vec<Vec<i64>> {
        let mut out = vec![vec![0i64; self.m]; order.len() + 1];
        for j in (0..order.len()).rev() {
            for i in 0..self.m {
                out[j][i] = out[j + 1][i] + self.cols[order[j]][i].max(0);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InteractionStats {
    /// Distinct nonzero values in `A`.
    pub alpha: usize,
    /// Fraction of nonzero entries in `A`.
    pub tau: f64,
    /// Distinct subset sums of each row of `A` (`None` when too many to count).
    pub subset_sums: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyDimension(&'static str),
    Dimension { what: String, expected: usize, found: usize },
    NonInteger { row: usize },
    NonFinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension(w) => write!(f, "{w} must be at least 1"),
            Violation::Dimension { what, expected, found } => {
                write!(f, "{what}: expected length {expected}, found {found}")
            }
            Violation::NonInteger { row } => write!(f, "interaction row {row} is not integral (scale it first)"),
            Violation::NonFinite => write!(f, "instance contains non-finite numbers"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstanceError {
    #[error("interaction row {row} has non-integer data")]
    NonInteger { row: usize },
    #[error("interaction row {row} has a non-finite value")]
    NonFinite { row: usize },
    #[error("scaling interaction row {row} overflows 64-bit integers")]
    ScaleOverflow { row: usize },
    #[error(transparent)]
    Overflow(#[from] Overflow),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

impl<T: Scalar> BilevelInstance<T> {
    /// `validate` as a `Result`.
    pub fn check(&self) -> Result<(), InstanceError> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(InstanceError::Invalid(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_row() -> BilevelInstance<f64> {
        BilevelInstance::new(
            "t",
            vec![0.0; 3],
            vec![0.0; 2],
            int_vec(&[-5, 3]),
            int_mat(&[&[-1, -1, -1], &[0, 0, -2]]),
            int_mat(&[&[-3, -1], &[-4, 2]]),
            int_vec(&[-5, -4]),
        )
    }

    #[test]
    fn validation_reports() {
        assert!(two_row().validate().is_empty());
        let mut bad = two_row();
        bad.a[1].pop();
        assert_eq!(bad.validate().len(), 1);
        let mut frac = two_row();
        frac.b[0][0] = 0.5;
        assert_eq!(frac.validate(), vec![Violation::NonInteger { row: 0 }]);
    }

    #[test]
    fn scaling_by_lcm() {
        let inst = BilevelInstance::new(
            "s",
            vec![0.0, 0.0],
            vec![0.0],
            vec![1.0],
            vec![vec![0.5, 1.5]],
            vec![vec![0.25]],
            vec![2.5],
        );
        let s = inst.scale_to_integer().unwrap();
        assert_eq!(s.a[0], vec![2.0, 6.0]);
        assert_eq!(s.b[0], vec![1.0]);
        assert_eq!(s.rhs[0], 10.0);
        assert_eq!(s.row_scale[0], 4.0);
        assert_eq!(two_row().scale_to_integer().unwrap(), two_row());
    }

    #[test]
    fn scaling_overflow_names_row() {
        let inst = BilevelInstance::new(
            "o",
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![vec![1.0], vec![9.0e18]],
            vec![vec![1.0], vec![0.5]],
            vec![0.0, 0.0],
        );
        assert_eq!(inst.scale_to_integer(), Err(InstanceError::ScaleOverflow { row: 1 }));
    }

    #[test]
    fn stats_and_bounds() {
        let st = two_row().interaction_stats();
        assert_eq!(st.alpha, 2);
        assert!((st.tau - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(st.subset_sums, vec![Some(4), Some(2)]);
        let it = two_row().interaction().unwrap();
        assert_eq!(it.min_feasible_state(), vec![-5, -6]);
        assert_eq!(it.state_of(&[1, 1, 0]), StateVector(vec![-2, 0]));
        assert_eq!(it.future_max(&[0, 1, 2]), vec![vec![0, 0]; 4]);
    }
}
