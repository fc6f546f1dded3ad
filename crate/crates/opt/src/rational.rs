//! Exact rational numbers and their canonical text form.
//!
//! All probabilities, thresholds and certificate entries are [`Q`] values.
//! The canonical text form is `"n"` for integers and `"n/d"` with `d > 1`
//! and `gcd(n, d) = 1` otherwise; the strict parser accepts exactly that
//! form so serialized artifacts are byte-stable.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Arbitrary-precision rational, always kept in lowest terms with a positive
/// denominator.
pub type Q = BigRational;

/// Environment variable bounding the bit length of any produced denominator.
pub const MAX_DENOM_BITS_ENV: &str = "CERTIMDP_MAX_DENOM_BITS";

/// Failure to read a rational from text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("rational `{0}` is not in canonical lowest terms")]
    NotCanonical(String),
}

/// A produced rational exceeded the configured denominator budget.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("denominator of {bits} bits exceeds the limit of {limit} bits set by {MAX_DENOM_BITS_ENV}")]
pub struct DenominatorLimitExceeded {
    pub bits: u64,
    pub limit: u64,
}

/// `n/d` as a rational. Panics if `d == 0`.
pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// The integer `n` as a rational.
pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn canonical_digits(s: &str) -> bool {
    is_digits(s) && (s == "0" || !s.starts_with('0'))
}

/// Parses the canonical form only: `-?n` or `-?n/d` in lowest terms, `d > 1`,
/// no leading zeros, no `-0`.
pub fn parse_strict(text: &str) -> Result<Q, ParseRationalError> {
    if text.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let malformed = || ParseRationalError::Malformed(text.to_string());
    let (num_s, den_s) = match body.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (body, None),
    };
    if !canonical_digits(num_s) {
        return Err(malformed());
    }
    let num = BigInt::from_str(num_s).map_err(|_| malformed())?;
    if neg && num.is_zero() {
        return Err(ParseRationalError::NotCanonical(text.to_string()));
    }
    let num = if neg { -num } else { num };
    let Some(den_s) = den_s else {
        return Ok(Q::from_integer(num));
    };
    if !canonical_digits(den_s) {
        return Err(malformed());
    }
    let den = BigInt::from_str(den_s).map_err(|_| malformed())?;
    if den.is_zero() {
        return Err(ParseRationalError::ZeroDenominator(text.to_string()));
    }
    if den.is_one() || !num.gcd(&den).is_one() {
        return Err(ParseRationalError::NotCanonical(text.to_string()));
    }
    Ok(Q::new_raw(num, den))
}

/// Parses `n/d` with any nonzero `d` or a decimal such as `0.25`, `-1.5`,
/// `3`; the value is normalized to lowest terms.
pub fn parse_lenient(text: &str) -> Result<Q, ParseRationalError> {
    let t = text.trim();
    if t.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let malformed = || ParseRationalError::Malformed(text.to_string());
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let value = if let Some((n, d)) = body.split_once('/') {
        if !is_digits(n) || !is_digits(d) {
            return Err(malformed());
        }
        let den = BigInt::from_str(d).map_err(|_| malformed())?;
        if den.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(text.to_string()));
        }
        Q::new(BigInt::from_str(n).map_err(|_| malformed())?, den)
    } else if let Some((int, frac)) = body.split_once('.') {
        if (int.is_empty() && frac.is_empty())
            || !(int.is_empty() || is_digits(int))
            || !(frac.is_empty() || is_digits(frac))
        {
            return Err(malformed());
        }
        let digits = format!("{int}{frac}");
        let num = BigInt::from_str(&digits).map_err(|_| malformed())?;
        let den = num_traits::pow(BigInt::from(10u32), frac.len());
        Q::new(num, den)
    } else {
        if !is_digits(body) {
            return Err(malformed());
        }
        Q::from_integer(BigInt::from_str(body).map_err(|_| malformed())?)
    };
    Ok(if neg { -value } else { value })
}

/// Canonical text form, inverse of [`parse_strict`].
pub fn format_q(value: &Q) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Display adapter printing the canonical form.
pub struct Canonical<'a>(pub &'a Q);

impl fmt::Display for Canonical<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_q(self.0))
    }
}

/// Bit length of the denominator.
pub fn denominator_bits(value: &Q) -> u64 {
    value.denom().bits()
}

/// The limit from [`MAX_DENOM_BITS_ENV`], if set to a valid positive number.
pub fn max_denominator_bits() -> Option<u64> {
    std::env::var(MAX_DENOM_BITS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .filter(|&b| b > 0)
}

/// Fails if any value has a denominator longer than the configured limit.
pub fn check_denominators<'a, I>(values: I) -> Result<(), DenominatorLimitExceeded>
where
    I: IntoIterator<Item = &'a Q>,
{
    let Some(limit) = max_denominator_bits() else {
        return Ok(());
    };
    for v in values {
        let bits = denominator_bits(v);
        if bits > limit {
            return Err(DenominatorLimitExceeded { bits, limit });
        }
    }
    Ok(())
}

/// Cheap size measure used to prefer small pivots.
pub fn bit_size(value: &Q) -> u64 {
    value.numer().bits() + value.denom().bits()
}

/// Sign of a rational as -1, 0 or 1.
pub fn sign(value: &Q) -> i8 {
    match value.numer().sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

/// `|value|`.
pub fn abs(value: &Q) -> Q {
    value.abs()
}

/// Serde adapter storing a [`Q`] as its canonical string.
pub mod serde_q {
    use super::*;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_q(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let text = String::deserialize(d)?;
        parse_strict(&text).map_err(D::Error::custom)
    }
}

/// Serde adapter for `Option<Q>` (`null` or canonical string).
pub mod serde_q_opt {
    use super::*;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Option<Q>, s: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => s.serialize_some(&format_q(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Q>, D::Error> {
        let text = Option::<String>::deserialize(d)?;
        text.map(|t| parse_strict(&t).map_err(D::Error::custom))
            .transpose()
    }
}

/// Serde adapter for `Vec<Q>`.
pub mod serde_q_vec {
    use super::*;
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[Q], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for v in values {
            seq.serialize_element(&format_q(v))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Q>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts
            .iter()
            .map(|t| parse_strict(t).map_err(D::Error::custom))
            .collect()
    }
}

/// Serde adapter for string-keyed maps of rationals.
pub mod serde_q_map {
    use super::*;
    use serde::{de::Error as _, ser::SerializeMap, Deserialize, Deserializer, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(values: &BTreeMap<String, Q>, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(values.len()))?;
        for (k, v) in values {
            map.serialize_entry(k, &format_q(v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Q>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, t)| parse_strict(&t).map(|v| (k, v)).map_err(D::Error::custom))
            .collect()
    }
}
