//! Exact rational helpers shared by every module.
//!
//! Rationals travel through JSON as `"num/den"` strings (integers may omit
//! the denominator).

use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serializer};

pub type Rational = num_rational::BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((n, d)) = s.split_once('/') {
        let n = BigInt::from_str(n.trim()).ok()?;
        let d = BigInt::from_str(d.trim()).ok()?;
        if d.is_zero() {
            return None;
        }
        Some(Rational::new(n, d))
    } else {
        BigInt::from_str(s).ok().map(Rational::from_integer)
    }
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest binary64 value of a ratio whose parts may exceed the f64 range.
pub fn to_f64(r: &Rational) -> f64 {
    ratio_to_f64(r.numer(), r.denom())
}

pub fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return 0.0;
    }
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    if nb < 1000 && db < 1000 {
        if let (Some(n), Some(d)) = (num.to_f64(), den.to_f64()) {
            if n.is_finite() && d.is_finite() {
                return n / d;
            }
        }
    }
    // Keep 64 significant bits of each side, then rescale.
    let ns = (nb - 64).max(0);
    let ds = (db - 64).max(0);
    let n = (num.abs() >> ns as usize).to_f64().unwrap_or(0.0);
    let d = (den.abs() >> ds as usize).to_f64().unwrap_or(1.0);
    let mag = n / d * 2f64.powi((ns - ds).clamp(-2000, 2000) as i32);
    if num.is_negative() != den.is_negative() {
        -mag
    } else {
        mag
    }
}

pub fn lcm_denominators<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Nearest integer with ties broken toward zero.
pub fn round_ties_toward_zero(x: &Rational) -> BigInt {
    let fl = x.floor();
    let frac = x - &fl;
    let half = rat(1, 2);
    let fl = fl.to_integer();
    if frac > half {
        fl + 1
    } else if frac < half {
        fl
    } else if fl.is_negative() {
        fl + 1
    } else {
        fl
    }
}

pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_rational(r))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
    let raw = serde_json::Value::deserialize(d)?;
    match &raw {
        serde_json::Value::String(s) => parse_rational(s)
            .ok_or_else(|| serde::de::Error::custom(format!("not a rational: {s:?}"))),
        serde_json::Value::Number(n) if n.is_i64() => Ok(int(n.as_i64().unwrap())),
        other => Err(serde::de::Error::custom(format!(
            "rationals are written as \"num/den\" strings, got {other}"
        ))),
    }
}

/// A rational that (de)serializes as `"num/den"`; for use inside maps and lists.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct RationalText(#[serde(with = "crate::rational")] pub Rational);

impl From<Rational> for RationalText {
    fn from(r: Rational) -> Self {
        RationalText(r)
    }
}
