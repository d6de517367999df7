//! Fixed-point money amounts.
//!
//! Tariff rates and amortized storage costs are carried as exact decimals with
//! a resolution of 0.01 ¢ so that configs round-trip bit-exactly and
//! extremal-price sums such as `12.4 - 6.7 + 12.4 - 10.4` come out as exactly
//! `7.7`. Solvers convert to `f64` at the boundary.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of fixed-point units per cent.
const UNITS_PER_CENT: i64 = 100;

/// A price in cents per kWh (or an amount in cents), stored in units of 0.01 ¢.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rate(i64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RateParseError {
    #[error("`{0}` is not a decimal number")]
    Malformed(String),
    #[error("`{0}` has more precision than 0.01 cent")]
    TooPrecise(String),
    #[error("`{0}` is out of range")]
    OutOfRange(String),
}

impl Rate {
    pub const ZERO: Rate = Rate(0);

    /// Builds a rate from raw hundredths of a cent.
    pub const fn from_hundredths(units: i64) -> Self {
        Rate(units)
    }

    pub const fn hundredths(self) -> i64 {
        self.0
    }

    /// Rounds a floating-point cent value to the nearest 0.01 ¢.
    pub fn from_cents_f64(cents: f64) -> Option<Self> {
        let scaled = (cents * UNITS_PER_CENT as f64).round();
        if !scaled.is_finite() || scaled.abs() > (i64::MAX / 2) as f64 {
            return None;
        }
        Some(Rate(scaled as i64))
    }

    pub fn cents(self) -> f64 {
        self.0 as f64 / UNITS_PER_CENT as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Add for Rate {
    type Output = Rate;
    fn add(self, rhs: Rate) -> Rate {
        Rate(self.0 + rhs.0)
    }
}

impl Sub for Rate {
    type Output = Rate;
    fn sub(self, rhs: Rate) -> Rate {
        Rate(self.0 - rhs.0)
    }
}

impl Sum for Rate {
    fn sum<I: Iterator<Item = Rate>>(iter: I) -> Rate {
        iter.fold(Rate::ZERO, Add::add)
    }
}

impl FromStr for Rate {
    type Err = RateParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        let malformed = || RateParseError::Malformed(s.to_string());
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.strip_prefix('+').unwrap_or(text)),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(malformed());
        }
        if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(malformed());
        }
        let frac_trimmed = frac_part.trim_end_matches('0');
        if frac_trimmed.len() > 2 {
            return Err(RateParseError::TooPrecise(s.to_string()));
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| RateParseError::OutOfRange(s.to_string()))?
        };
        let mut frac: i64 = 0;
        for (k, b) in frac_trimmed.bytes().enumerate() {
            frac += i64::from(b - b'0') * if k == 0 { 10 } else { 1 };
        }
        let units = whole
            .checked_mul(UNITS_PER_CENT)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(|| RateParseError::OutOfRange(s.to_string()))?;
        Ok(Rate(if negative { -units } else { units }))
    }
}

/// Shortest exact decimal with at least one fractional digit: `7.7`, `8.0`, `12.35`.
impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / UNITS_PER_CENT as u64;
        let frac = abs % UNITS_PER_CENT as u64;
        if frac.is_multiple_of(10) {
            write!(f, "{sign}{whole}.{}", frac / 10)
        } else {
            write!(f, "{sign}{whole}.{frac:02}")
        }
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RateVisitor;

        impl Visitor<'_> for RateVisitor {
            type Value = Rate;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal number of cents")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Rate, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rate, E> {
                v.checked_mul(UNITS_PER_CENT)
                    .map(Rate)
                    .ok_or_else(|| E::custom("rate out of range"))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rate, E> {
                i64::try_from(v)
                    .map_err(|_| E::custom("rate out of range"))
                    .and_then(|v| self.visit_i64(v))
            }

            // Floats come from TOML/JSON number literals; the shortest repr of a
            // literal like 6.7 reparses to exactly the digits the user wrote.
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rate, E> {
                if !v.is_finite() {
                    return Err(E::custom("rate must be finite"));
                }
                format!("{v}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(RateVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_literals() {
        assert_eq!("6.7".parse::<Rate>().unwrap(), Rate::from_hundredths(670));
        assert_eq!("12.40".parse::<Rate>().unwrap(), Rate::from_hundredths(1240));
        assert_eq!("0.05".parse::<Rate>().unwrap(), Rate::from_hundredths(5));
        assert_eq!("-3".parse::<Rate>().unwrap(), Rate::from_hundredths(-300));
        assert_eq!(".5".parse::<Rate>().unwrap(), Rate::from_hundredths(50));
    }

    #[test]
    fn rejects_sub_resolution_and_garbage() {
        assert!(matches!("1.234".parse::<Rate>(), Err(RateParseError::TooPrecise(_))));
        assert!(matches!("abc".parse::<Rate>(), Err(RateParseError::Malformed(_))));
        assert!(matches!(".".parse::<Rate>(), Err(RateParseError::Malformed(_))));
        assert_eq!("1.2300".parse::<Rate>().unwrap(), Rate::from_hundredths(123));
    }

    #[test]
    fn display_is_exact() {
        assert_eq!(Rate::from_hundredths(770).to_string(), "7.7");
        assert_eq!(Rate::from_hundredths(800).to_string(), "8.0");
        assert_eq!(Rate::from_hundredths(1235).to_string(), "12.35");
        assert_eq!(Rate::from_hundredths(-5).to_string(), "-0.05");
    }

    #[test]
    fn extremal_sum_is_exact() {
        let r = |s: &str| s.parse::<Rate>().unwrap();
        let total = (r("12.4") - r("6.7")) + (r("12.4") - r("10.4"));
        assert_eq!(total, r("7.7"));
    }

    #[test]
    fn deserializes_numbers_and_strings() {
        #[derive(Deserialize)]
        struct Row {
            a: Rate,
            b: Rate,
            c: Rate,
        }
        let row: Row = toml::from_str("a = 6.7\nb = \"10.4\"\nc = 12").unwrap();
        assert_eq!(row.a, Rate::from_hundredths(670));
        assert_eq!(row.b, Rate::from_hundredths(1040));
        assert_eq!(row.c, Rate::from_hundredths(1200));
    }
}
