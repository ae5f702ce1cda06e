//! Numeric trait shared by the engine and everything built on it.
//!
//! Two families implement [`Scalar`]: binary floats (`f64`, `f32`) solved
//! with tolerances, and [`Rational`] solved exactly with all tolerances zero.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, NumAssign, One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational number.
pub type Rational = BigRational;

/// Ordered field used throughout the solver stack.
pub trait Scalar:
    Num
    + NumAssign
    + Signed
    + Clone
    + PartialOrd
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// True when arithmetic is exact and all tolerances are zero.
    const EXACT: bool;

    /// Primal feasibility / integrality tolerance.
    fn feas_tol() -> Self;
    /// Smallest magnitude accepted as a pivot element.
    fn pivot_tol() -> Self;
    /// Tolerance on reduced costs.
    fn dual_tol() -> Self {
        Self::feas_tol()
    }

    fn from_int(v: i64) -> Self;
    fn floor_val(&self) -> Self;
    fn ceil_val(&self) -> Self;
    fn round_val(&self) -> Self;
    fn to_f64_lossy(&self) -> f64;

    /// Parses decimal text (`-2.5`, `1e-3`) and, for exact types, `p/q`.
    fn parse_text(s: &str) -> Option<Self>;
    /// Exact rational value, `None` for non-finite floats.
    fn to_rational(&self) -> Option<Rational>;
    fn from_rational(r: &Rational) -> Self;
    /// Decimal text that parses back to the same value, if one exists.
    fn decimal_text(&self) -> Option<String>;

    /// Returns the integer value if `self` is integral and fits in `i64`.
    fn to_exact_i64(&self) -> Option<i64> {
        let r = self.to_rational()?;
        if r.is_integer() {
            r.to_integer().to_i64()
        } else {
            None
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }

    /// `|a - b| <= tol * max(1, |a|, |b|)`.
    fn approx_eq(&self, other: &Self, tol: &Self) -> bool {
        let scale = Self::max_of(Self::one(), Self::max_of(self.abs(), other.abs()));
        (self.clone() - other.clone()).abs() <= tol.clone() * scale
    }
}

/// Parses `[-+]digits[.digits][e[-+]digits]` into an exact rational.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, body) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = match body.find('.') {
        Some(i) => (&body[..i], &body[i + 1..]),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse::<BigInt>().ok()?
    };
    let shift = exp as i64 - frac_part.len() as i64;
    if shift.unsigned_abs() > 4000 {
        return None;
    }
    let ten = BigInt::from(10);
    let mut r = if shift >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, shift as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-shift) as usize))
    };
    if neg {
        r = -r;
    }
    Some(r)
}

fn rational_from_text(s: &str) -> Option<Rational> {
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                None
            } else {
                Some(Rational::new(p, q))
            }
        }
        None => parse_decimal(s),
    }
}

macro_rules! float_scalar {
    ($t:ty, $feas:expr, $piv:expr) => {
        impl Scalar for $t {
            const EXACT: bool = false;

            fn feas_tol() -> Self {
                $feas
            }
            fn pivot_tol() -> Self {
                $piv
            }
            fn from_int(v: i64) -> Self {
                v as $t
            }
            fn floor_val(&self) -> Self {
                self.floor()
            }
            fn ceil_val(&self) -> Self {
                self.ceil()
            }
            fn round_val(&self) -> Self {
                self.round()
            }
            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }
            fn parse_text(s: &str) -> Option<Self> {
                let v: $t = s.trim().parse().ok()?;
                v.is_finite().then_some(v)
            }
            fn to_rational(&self) -> Option<Rational> {
                // Shortest round-trip decimal, so 0.1 maps to 1/10.
                if !self.is_finite() {
                    return None;
                }
                parse_decimal(&format!("{}", self))
            }
            fn from_rational(r: &Rational) -> Self {
                r.to_f64().unwrap_or(f64::NAN) as $t
            }
            fn decimal_text(&self) -> Option<String> {
                self.is_finite().then(|| format!("{}", self))
            }
        }
    };
}

float_scalar!(f64, 1e-6, 1e-9);
float_scalar!(f32, 1e-4, 1e-6);

impl Scalar for Rational {
    const EXACT: bool = true;

    fn feas_tol() -> Self {
        Rational::zero()
    }
    fn pivot_tol() -> Self {
        Rational::zero()
    }
    fn from_int(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn floor_val(&self) -> Self {
        self.floor()
    }
    fn ceil_val(&self) -> Self {
        self.ceil()
    }
    fn round_val(&self) -> Self {
        self.round()
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn parse_text(s: &str) -> Option<Self> {
        rational_from_text(s)
    }
    fn to_rational(&self) -> Option<Rational> {
        Some(self.clone())
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn decimal_text(&self) -> Option<String> {
        if self.is_integer() {
            return Some(self.to_integer().to_string());
        }
        // Terminating decimal iff the reduced denominator is 2^a 5^b.
        let mut q = self.denom().clone();
        let two = BigInt::from(2);
        let five = BigInt::from(5);
        let (mut a, mut b) = (0usize, 0usize);
        while q.is_multiple_of(&two) {
            q /= &two;
            a += 1;
        }
        while q.is_multiple_of(&five) {
            q /= &five;
            b += 1;
        }
        if !q.is_one() {
            return None;
        }
        let digits = a.max(b);
        let scaled = self * Rational::from_integer(num_traits::pow(BigInt::from(10), digits));
        let n = scaled.to_integer();
        let neg = n.is_negative();
        let mut s = n.abs().to_string();
        if s.len() <= digits {
            s = format!("{}{}", "0".repeat(digits + 1 - s.len()), s);
        }
        let split = s.len() - digits;
        Some(format!("{}{}.{}", if neg { "-" } else { "" }, &s[..split], &s[split..]))
    }
}
