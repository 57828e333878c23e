//! Exact rational helpers.
//!
//! Parameters such as `p_elim`, `alpha` and `k` are kept as exact
//! rationals so that every comparison against integer times is exact.

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

pub type Rational = Ratio<i64>;

/// Parses `"2"`, `"-0.25"`, `"1.5e3"` or `"1/3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let s = text.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: i64 = num.trim().parse().map_err(|_| format!("bad rational {text:?}"))?;
        let d: i64 = den.trim().parse().map_err(|_| format!("bad rational {text:?}"))?;
        if d == 0 {
            return Err(format!("zero denominator in {text:?}"));
        }
        return Ok(Ratio::new(n, d));
    }
    parse_decimal(s).ok_or_else(|| format!("bad decimal {text:?}"))
}

fn parse_decimal(s: &str) -> Option<Rational> {
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let all = all.trim_start_matches('0');
    let mut numer: i128 = if all.is_empty() { 0 } else { all.parse().ok()? };
    let mut scale = exp - frac_part.len() as i32;
    let mut denom: i128 = 1;
    while scale > 0 {
        numer = numer.checked_mul(10)?;
        scale -= 1;
    }
    while scale < 0 {
        denom = denom.checked_mul(10)?;
        scale += 1;
    }
    let g = gcd(numer, denom);
    let (numer, denom) = (numer / g, denom / g);
    let numer = i64::try_from(numer).ok()?;
    let denom = i64::try_from(denom).ok()?;
    Some(Ratio::new(if neg { -numer } else { numer }, denom))
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs().max(1)
}

/// Exact conversion of a JSON number.
///
/// Floats go through their shortest round-trip decimal representation, so
/// `0.3` in the input becomes exactly `3/10`.
pub fn from_json_number(n: &serde_json::Number) -> Result<Rational, String> {
    if let Some(i) = n.as_i64() {
        return Ok(Ratio::from_integer(i));
    }
    let f = n.as_f64().ok_or_else(|| format!("number {n} out of range"))?;
    if !f.is_finite() {
        return Err(format!("non-finite number {n}"));
    }
    parse_decimal(&format!("{f}")).ok_or_else(|| format!("number {n} out of range"))
}

/// `value` rounded to the nearest integer, halves rounded up.
pub fn round_half_up(value: Rational) -> i64 {
    (value + Ratio::new(1, 2)).floor().to_integer()
}

/// `lhs <= factor * rhs`, evaluated exactly.
pub fn le_scaled(lhs: i64, factor: Rational, rhs: i64) -> bool {
    (lhs as i128) * (*factor.denom() as i128) <= (*factor.numer() as i128) * (rhs as i128)
}

/// `factor * value` as an exact rational.
pub fn scaled(factor: Rational, value: i64) -> Rational {
    factor * Ratio::from_integer(value)
}

pub fn to_f64(value: Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Whether the decimal expansion of `value` terminates.
pub fn is_terminating(value: Rational) -> bool {
    let mut d = *value.denom();
    for p in [2, 5] {
        while d % p == 0 {
            d /= p;
        }
    }
    d == 1
}

/// Exact decimal text for a terminating rational, `None` otherwise.
pub fn to_decimal_string(value: Rational) -> Option<String> {
    if !is_terminating(value) {
        return None;
    }
    if value.is_integer() {
        return Some(value.to_integer().to_string());
    }
    let neg = value.is_negative();
    let value = value.abs();
    let den = *value.denom() as i128;
    let mut digits = 0usize;
    let mut scale: i128 = 1;
    while scale % den != 0 {
        scale = scale.checked_mul(10)?;
        digits += 1;
    }
    let scaled = (*value.numer() as i128).checked_mul(scale / den)?;
    let int_part = scaled / scale;
    let frac = scaled % scale;
    let mut frac_text = format!("{:0width$}", frac, width = digits);
    while frac_text.ends_with('0') {
        frac_text.pop();
    }
    Some(format!("{}{}.{}", if neg { "-" } else { "" }, int_part, frac_text))
}

/// Serde adapter: integers and short terminating decimals as JSON numbers,
/// everything else as an `"n/d"` string. Both forms are accepted on input.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, ser: S) -> Result<S::Ok, S::Error> {
        to_json(*value).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Rational, D::Error> {
        let value = serde_json::Value::deserialize(de)?;
        from_json(&value).map_err(de::Error::custom)
    }

    pub fn to_json(value: Rational) -> serde_json::Value {
        if value.is_integer() {
            return serde_json::Value::from(value.to_integer());
        }
        if let Some(text) = to_decimal_string(value) {
            if text.trim_start_matches(['-', '0', '.']).len() <= 15 {
                if let Ok(f) = text.parse::<f64>() {
                    if let Some(n) = serde_json::Number::from_f64(f) {
                        return serde_json::Value::Number(n);
                    }
                }
            }
        }
        serde_json::Value::String(format!("{}/{}", value.numer(), value.denom()))
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Rational, String> {
        match value {
            serde_json::Value::Number(n) => from_json_number(n),
            serde_json::Value::String(s) => parse_rational(s),
            other => Err(format!("expected a number, found {other}")),
        }
    }
}

/// Serde adapter for `Option<Rational>`.
pub mod serde_rational_opt {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Option<Rational>, ser: S) -> Result<S::Ok, S::Error> {
        match value {
            Some(v) => serde_rational::to_json(*v).serialize(ser),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<Rational>, D::Error> {
        let value = Option::<serde_json::Value>::deserialize(de)?;
        match value {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => serde_rational::from_json(&v).map(Some).map_err(de::Error::custom),
        }
    }
}

pub fn is_zero(value: &Rational) -> bool {
    value.is_zero()
}
