//! Exact state arithmetic and the extended value type.

use std::cmp::Ordering;
use std::fmt;

use serde::Serialize;

pub use valnet_milp::{Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("integer overflow in {0}")]
pub struct Overflow(pub String);

/// Right-hand-side shift `A·x` of the interaction rows.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct StateVector(pub Vec<i64>);

impl StateVector {
    pub fn zeros(m: usize) -> Self {
        StateVector(vec![0; m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn checked_add(&self, col: &[i64]) -> Result<Self, Overflow> {
        debug_assert_eq!(self.0.len(), col.len());
        self.0
            .iter()
            .zip(col)
            .map(|(a, b)| a.checked_add(*b).ok_or_else(|| Overflow("state update".into())))
            .collect::<Result<Vec<_>, _>>()
            .map(StateVector)
    }

    /// `self + col` when `label` is 1, a copy otherwise.
    pub fn step(&self, col: &[i64], label: u8) -> Result<Self, Overflow> {
        if label == 0 {
            Ok(self.clone())
        } else {
            self.checked_add(col)
        }
    }

    pub fn component_min(&self, other: &Self) -> Self {
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| *a.min(b)).collect())
    }

    pub fn component_max(&self, other: &Self) -> Self {
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| *a.max(b)).collect())
    }

    /// Componentwise `self <= other`.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl From<Vec<i64>> for StateVector {
    fn from(v: Vec<i64>) -> Self {
        StateVector(v)
    }
}

impl fmt::Display for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A finite value or `+∞` (infeasible follower).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extended<T> {
    Finite(T),
    Infinite,
}

impl<T> Extended<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<&T> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn into_finite(self) -> Option<T> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }
}

impl<T: PartialOrd> PartialOrd for Extended<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => a.partial_cmp(b),
            (Extended::Finite(_), Extended::Infinite) => Some(Ordering::Less),
            (Extended::Infinite, Extended::Finite(_)) => Some(Ordering::Greater),
            (Extended::Infinite, Extended::Infinite) => Some(Ordering::Equal),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}

/// Tolerant equality: exact for rationals, relative `feas_tol` for floats.
pub fn same_value<T: Scalar>(a: &T, b: &T) -> bool {
    if T::EXACT {
        a == b
    } else {
        a.approx_eq(b, &T::feas_tol())
    }
}

/// `a <= b` up to the scalar's tolerance.
pub fn at_most<T: Scalar>(a: &T, b: &T) -> bool {
    if T::EXACT {
        a <= b
    } else {
        let scale = T::max_of(T::one(), T::max_of(a.abs(), b.abs()));
        a.clone() <= b.clone() + T::feas_tol() * scale
    }
}

pub(crate) fn dot<T: Scalar>(coef: &[T], bits: &[u8]) -> T {
    let mut s = T::zero();
    for (c, b) in coef.iter().zip(bits) {
        if *b != 0 {
            s += c.clone();
        }
    }
    s
}

pub(crate) fn dot_i64(coef: &[i64], bits: &[u8]) -> i64 {
    coef.iter().zip(bits).filter(|(_, b)| **b != 0).map(|(c, _)| *c).sum()
}

/// Decodes `code` into `n` bits, first bit most significant.
pub(crate) fn bits_of(code: u64, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_steps() {
        let s = StateVector::zeros(2);
        let t = s.step(&[-1, -3], 1).unwrap();
        assert_eq!(t, StateVector(vec![-1, -3]));
        assert_eq!(t.step(&[5, 5], 0).unwrap(), t);
        assert!(StateVector(vec![i64::MAX]).checked_add(&[1]).is_err());
        assert_eq!(t.to_string(), "(-1,-3)");
    }

    #[test]
    fn extended_order() {
        assert!(Extended::Finite(3) < Extended::Infinite);
        assert!(Extended::Finite(-1) < Extended::Finite(3));
        assert_eq!(Extended::<i32>::Infinite.to_string(), "inf");
    }

    #[test]
    fn bit_decoding() {
        assert_eq!(bits_of(0b110, 3), vec![1, 1, 0]);
        assert_eq!(bits_of(1, 2), vec![0, 1]);
    }
}
