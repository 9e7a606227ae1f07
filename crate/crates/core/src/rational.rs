//! Exact score time.
//!
//! Onsets and durations are measured in quarter notes and kept as reduced
//! fractions so that the equality tests used during edge construction are
//! exact. The textual form is `"p/q"`, or `"p"` when the denominator is 1.

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

pub type Rational = Rational64;

/// Parses `"p/q"` or `"p"` (surrounding whitespace allowed).
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: i64 = num
        .parse()
        .map_err(|_| format!("invalid rational numerator in `{text}`"))?;
    let den: i64 = den
        .parse()
        .map_err(|_| format!("invalid rational denominator in `{text}`"))?;
    if den.is_zero() {
        return Err(format!("zero denominator in `{text}`"));
    }
    Ok(Rational::new(num, den))
}

pub fn format_rational(value: &Rational) -> String {
    if *value.denom() == 1 {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// `floor(value / unit)` for a positive `unit`.
pub fn floor_div(value: &Rational, unit: &Rational) -> i64 {
    (value / unit).floor().to_integer()
}

/// Serde adapter for the `"p/q"` string form.
pub mod serde_str {
    use super::{format_rational, parse_rational, Rational};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(D::Error::custom)
    }
}
