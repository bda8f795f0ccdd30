//! Numeric abstraction for objective weights and equity arithmetic.
//!
//! The optimization layer works over any [`Scalar`]: `f64` for speed, or
//! `Ratio<i128>` when optimal values and tie-breaking must be exact.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Denominator used when turning decimal configuration values (equity
/// weights, for example `1.003`) into exact rationals.
pub const DECIMAL_SCALE: i128 = 1_000_000_000;

pub trait Scalar:
    Num + Signed + Clone + Debug + Display + FromStr + PartialOrd + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// `true` when arithmetic is exact and equality can be tested directly.
    const EXACT: bool;

    /// Converts a configuration value; rationals round to nine decimals.
    fn from_decimal(x: f64) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num).expect("integer fits scalar") / Self::from_i64(den).expect("integer fits scalar")
    }

    fn from_count(n: usize) -> Self {
        Self::from_u64(n as u64).expect("count fits scalar")
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Equality up to rounding noise for inexact types, exact otherwise.
    fn same_value(&self, other: &Self) -> bool {
        if Self::EXACT {
            self == other
        } else {
            let (a, b) = (self.as_f64(), other.as_f64());
            (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
        }
    }

    /// `self > other` beyond rounding noise.
    fn clearly_greater(&self, other: &Self) -> bool {
        self > other && !self.same_value(other)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_decimal(x: f64) -> Self {
        x
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_decimal(x: f64) -> Self {
        x as f32
    }

    fn same_value(&self, other: &Self) -> bool {
        (self - other).abs() <= 1e-5 * self.abs().max(other.abs()).max(1.0)
    }
}

impl Scalar for Ratio<i128> {
    const EXACT: bool = true;

    fn from_decimal(x: f64) -> Self {
        let num = (x * DECIMAL_SCALE as f64).round() as i128;
        Ratio::new(num, DECIMAL_SCALE)
    }
}

impl Scalar for Ratio<i64> {
    const EXACT: bool = true;

    fn from_decimal(x: f64) -> Self {
        let num = (x * 1e6).round() as i64;
        Ratio::new(num, 1_000_000)
    }
}
