//! Scalar abstraction shared by the exact-rational and floating-point
//! pipelines.
//!
//! The representation-identity machinery runs twice: once over
//! [`num::BigRational`] where every residual must be exactly zero, and once
//! over `f64` where residuals are compared against tolerances. Both scalar
//! types implement [`Coeff`].

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};

/// Field scalar for coefficient arithmetic.
pub trait Coeff:
    Clone
    + PartialEq
    + Debug
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// True when arithmetic is exact and equality tests carry proof weight.
    const EXACT: bool;

    fn from_int(v: i64) -> Self;

    fn ratio(num: i64, den: i64) -> Self;

    /// Approximate absolute value, used for pivoting and residual reports.
    fn magnitude(&self) -> f64;
}

impl Coeff for f64 {
    const EXACT: bool = false;

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Coeff for BigRational {
    const EXACT: bool = true;

    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }
}

/// Binomial coefficient as a scalar; arguments stay desk-scale (`n <= 64`).
pub fn binomial<T: Coeff>(n: u32, k: u32) -> T {
    if k > n {
        return T::zero();
    }
    let k = k.min(n - k);
    let mut num: i128 = 1;
    let mut den: i128 = 1;
    for i in 0..k as i128 {
        num *= n as i128 - i;
        den *= i + 1;
    }
    T::from_int((num / den) as i64)
}
