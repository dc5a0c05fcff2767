//! Exact non-negative rational durations.
//!
//! On the mensural side the unit is the minima; on the CMN side the unit is
//! the half note. The two are numerically identical, so the same type is used
//! for both timelines.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Serialize, Serializer};

/// A non-negative rational number kept in lowest terms.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RationalDuration(Ratio<i64>);

impl RationalDuration {
    pub const ZERO: RationalDuration = RationalDuration(Ratio::new_raw(0, 1));
    pub const ONE: RationalDuration = RationalDuration(Ratio::new_raw(1, 1));

    /// Builds `num/den`, reduced.
    ///
    /// Panics when `den` is zero or the value would be negative; both are
    /// caller bugs rather than data errors.
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let r = Ratio::new(num, den);
        assert!(r >= Ratio::zero(), "negative duration {num}/{den}");
        RationalDuration(r)
    }

    /// Like [`RationalDuration::new`] but returns `None` for a zero
    /// denominator or a negative value.
    pub fn try_new(num: i64, den: i64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let r = Ratio::new(num, den);
        (r >= Ratio::zero()).then_some(RationalDuration(r))
    }

    pub fn from_integer(n: i64) -> Self {
        Self::new(n, 1)
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    /// `self - other`, or `None` if the result would be negative.
    pub fn checked_sub(self, other: Self) -> Option<Self> {
        let r = self.0 - other.0;
        (r >= Ratio::zero()).then_some(RationalDuration(r))
    }

    pub fn recip(self) -> Self {
        RationalDuration(self.0.recip())
    }

    pub fn floor(self) -> i64 {
        self.0.floor().to_integer()
    }

    /// True when the denominator is a power of two.
    pub fn is_dyadic(&self) -> bool {
        let d = self.denom();
        d > 0 && (d & (d - 1)) == 0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Largest multiple of `step` that is `<= self`. `step` must be positive.
    pub fn floor_to_multiple(self, step: Self) -> Self {
        let q = (self.0 / step.0).floor();
        RationalDuration(q * step.0)
    }

    pub fn gcd_integer(a: i64, b: i64) -> i64 {
        a.gcd(&b)
    }
}

impl fmt::Debug for RationalDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for RationalDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational {0:?}")]
pub struct ParseRationalError(pub String);

impl FromStr for RationalDuration {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseRationalError(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: i64 = n.parse().map_err(|_| err())?;
        let d: i64 = d.parse().map_err(|_| err())?;
        Self::try_new(n, d).ok_or_else(err)
    }
}

impl Serialize for RationalDuration {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl Add for RationalDuration {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        RationalDuration(self.0 + rhs.0)
    }
}

impl AddAssign for RationalDuration {
    fn add_assign(&mut self, rhs: Self) {
        self.0 += rhs.0;
    }
}

impl Mul for RationalDuration {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        RationalDuration(self.0 * rhs.0)
    }
}

impl Mul<i64> for RationalDuration {
    type Output = Self;
    fn mul(self, rhs: i64) -> Self {
        assert!(rhs >= 0);
        RationalDuration(self.0 * rhs)
    }
}

impl Div for RationalDuration {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        RationalDuration(self.0 / rhs.0)
    }
}

impl Sum for RationalDuration {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a RationalDuration> for RationalDuration {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.copied().sum()
    }
}
