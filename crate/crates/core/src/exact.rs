//! Exact rational helpers.
//!
//! User-facing hyperparameters arrive as `f64`. They are converted to the
//! shortest decimal that round-trips to the same float, so `0.3` means
//! exactly `3/10` and a disparity of exactly `0.3` satisfies a bound of `0.3`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{FanError, Result};

pub type Rational = BigRational;

/// Shortest round-tripping decimal value of `x`, as an exact rational.
pub fn decimal(x: f64) -> Result<Rational> {
    if !x.is_finite() {
        return Err(FanError::domain(format!("non-finite parameter {x}")));
    }
    // `Display` for f64 never uses exponent notation and prints the shortest
    // representation that parses back to the same value.
    let text = format!("{x}");
    let (negative, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let mut numer: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| FanError::domain(format!("cannot read {x} as a decimal")))?;
    if negative {
        numer = -numer;
    }
    let denom = num_traits::pow(BigInt::from(10u32), frac_part.len());
    Ok(Rational::new(numer, denom))
}

pub fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn clamp01(r: Rational) -> Rational {
    if r.is_negative() {
        Rational::zero()
    } else if r > Rational::one() {
        Rational::one()
    } else {
        r
    }
}

pub fn floor_i64(r: &Rational) -> i64 {
    r.floor().to_integer().to_i64().expect("count-scale rational")
}

pub fn ceil_i64(r: &Rational) -> i64 {
    r.ceil().to_integer().to_i64().expect("count-scale rational")
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Least common multiple of the denominators, so `lcm * r` is integral for each `r`.
pub fn denominator_lcm<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// Serde adapter writing a rational as `"p/q"` text.
pub mod text {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}
