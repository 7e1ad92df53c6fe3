//! Locale-independent decimal formatting with 17 significant digits.
//!
//! Output follows the C `%.17g` convention: trailing zeros are trimmed, and
//! scientific notation (lowercase `e`, signed two-digit minimum exponent) is
//! used when the decimal exponent is below -4 or at least 17.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const SIG: i32 = 17;

pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // `{:e}` with 16 fractional digits rounds to exactly 17 significant digits,
    // which also fixes the exponent after rounding.
    let sci = format!("{:.*e}", (SIG - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..SIG).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `f64` newtype that serializes to JSON with [`fmt_g17`] digits.
///
/// Only meaningful with `serde_json`: the value is emitted as a raw number token.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct G17(pub f64);

impl Serialize for G17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite number in JSON output"));
        }
        let raw = serde_json::value::RawValue::from_string(fmt_g17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for G17 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        f64::deserialize(deserializer).map(G17)
    }
}

impl From<f64> for G17 {
    fn from(v: f64) -> Self {
        G17(v)
    }
}
