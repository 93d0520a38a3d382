//! Exact rational evaluation of the polynomial integrals behind moment
//! recursions and dual transition rows.
//!
//! The working quantity is `I(a, b) = integral of x^a (1-x)^b over [0, delta]`.
//! Its binomial expansion alternates in sign and the terms near `a = b = 25`
//! exceed the result by 30 decimal orders, so f64 evaluation loses every
//! significant digit well before the supported order 64. All arithmetic here
//! stays in `BigRational`; rounding happens once, on the final value.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use crate::{Error, Result};

/// Exact rational value of an f64 in [0, 1].
pub(crate) fn unit_rational(x: f64, name: &str) -> Result<BigRational> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("{name} = {x} outside [0, 1]")));
    }
    Ok(BigRational::from_float(x).expect("finite float"))
}

pub(crate) fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    c
}

/// `integral of x^a (1-x)^b dx over [0, delta]`, exactly.
pub(crate) fn int_power_product(delta: &BigRational, a: u32, b: u32) -> BigRational {
    // Expand (1-x)^b and integrate term by term:
    // sum_j C(b,j) (-1)^j delta^(a+j+1) / (a+j+1).
    let mut sum = BigRational::zero();
    let mut sign = BigInt::one();
    let mut dpow = pow_rational(delta, a + 1);
    for j in 0..=b {
        let term = BigRational::new(sign.clone() * binomial(b, j), BigInt::from(a + j + 1));
        sum += term * &dpow;
        sign = -sign;
        dpow *= delta;
    }
    sum
}

/// Mixing coefficient `(1/delta) * integral of x^k (1-x)^(n-k) over [0, delta]`.
pub(crate) fn lambda_rational(delta: &BigRational, n: u32, k: u32) -> Result<BigRational> {
    if delta.is_zero() {
        return Err(Error::invalid("mixing coefficient requires delta > 0"));
    }
    if k > n {
        return Err(Error::invalid(format!("lambda index k = {k} exceeds n = {n}")));
    }
    Ok(int_power_product(delta, k, n - k) / delta)
}

pub(crate) fn pow_rational(x: &BigRational, e: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc *= x;
    }
    acc
}

/// Rounds a rational to the nearest f64 without overflowing intermediate
/// integer-to-float conversions.
///
/// The naive numerator/denominator conversion yields inf/inf = NaN once either
/// part exceeds the f64 range, which happens routinely here (denominators near
/// 2^2600 at order 50). Shift the quotient into a 96-bit window first, convert
/// that, and undo the shift in the exponent. Values below the subnormal range
/// round to zero.
pub(crate) fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let sign = if r.is_negative() { -1.0 } else { 1.0 };
    let num = r.numer().abs();
    let den = r.denom().abs();
    let shift: i64 = 96 - (num.bits() as i64 - den.bits() as i64);
    let q = if shift >= 0 {
        (num << (shift as u64)) / den
    } else {
        num / (den << ((-shift) as u64))
    };
    let qf = q.to_f64().expect("quotient fits in f64 range");
    if shift >= 0 {
        // Split the scale so 2^-shift cannot underflow before multiplying.
        let h = shift / 2;
        sign * qf * 2f64.powi(-h as i32) * 2f64.powi(-(shift - h) as i32)
    } else {
        sign * qf * 2f64.powi((-shift) as i32)
    }
}
