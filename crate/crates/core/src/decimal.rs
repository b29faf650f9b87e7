//! Exact decimal quantities.
//!
//! Label amounts are kept as exact rationals so that normalisation and
//! statistics never accumulate binary floating-point error. Rounding is
//! half-up (away from zero on ties) and happens only when a value is
//! presented.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// An exact rational quantity with a decimal text form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Decimal(Ratio<i128>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal literal `{0}`")]
pub struct ParseDecimalError(pub String);

impl Decimal {
    pub const ZERO: Decimal = Decimal(Ratio::new_raw(0, 1));

    pub fn from_int(value: i64) -> Self {
        Decimal(Ratio::from_integer(value as i128))
    }

    /// `numerator / denominator`; panics on a zero denominator.
    pub fn ratio(numerator: i128, denominator: i128) -> Self {
        Decimal(Ratio::new(numerator, denominator))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    /// Rounds half-up (ties away from zero) to `places` decimal places.
    pub fn round_half_up(&self, places: u32) -> Decimal {
        let scale = 10i128.pow(places);
        let scaled = self.0 * Ratio::from_integer(scale);
        let magnitude = scaled.abs();
        let floor = magnitude.floor();
        let frac = magnitude - floor;
        let mut units = *floor.numer();
        if frac >= Ratio::new(1, 2) {
            units += 1;
        }
        if scaled.is_negative() {
            units = -units;
        }
        Decimal(Ratio::new(units, scale))
    }

    /// Fixed-point text with exactly `places` digits after the point.
    pub fn to_fixed(&self, places: u32) -> String {
        let rounded = self.round_half_up(places);
        let scale = 10i128.pow(places);
        let units = (rounded.0 * Ratio::from_integer(scale)).to_integer();
        let sign = if units < 0 { "-" } else { "" };
        let units = units.abs();
        if places == 0 {
            return format!("{sign}{units}");
        }
        format!(
            "{sign}{}.{:0width$}",
            units / scale,
            units % scale,
            width = places as usize
        )
    }

    pub fn to_f64(&self) -> f64 {
        // Terminating values go through their exact text so the f64 is the
        // nearest double to the written decimal.
        match self.terminating_digits() {
            Some(places) => self.to_fixed(places).parse().unwrap_or(f64::NAN),
            None => self.0.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Number of fractional digits needed to write the value exactly, if it
    /// terminates within 18 places.
    fn terminating_digits(&self) -> Option<u32> {
        (0..=18).find(|&p| (self.0 * Ratio::from_integer(10i128.pow(p))).is_integer())
    }

    pub fn as_ratio(&self) -> Ratio<i128> {
        self.0
    }
}

impl FromStr for Decimal {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDecimalError(s.to_string());
        let text = s.trim();
        let (negative, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (mantissa, exponent) = match body.find(['e', 'E']) {
            Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().map_err(|_| err())?),
            None => (body, 0),
        };
        let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let digits = format!("{int_part}{frac_part}");
        let digits = digits.trim_start_matches('0');
        let mut numer: i128 = if digits.is_empty() {
            0
        } else {
            digits.parse().map_err(|_| err())?
        };
        let shift = exponent - frac_part.len() as i32;
        let ten = |p: i32| 10i128.checked_pow(p as u32).ok_or_else(err);
        let value = if shift >= 0 {
            numer = numer.checked_mul(ten(shift)?).ok_or_else(err)?;
            Ratio::from_integer(numer)
        } else {
            Ratio::new(numer, ten(-shift)?)
        };
        Ok(Decimal(if negative { -value } else { value }))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.terminating_digits() {
            Some(places) => f.write_str(&self.to_fixed(places)),
            None => write!(f, "{}", self.to_fixed(6)),
        }
    }
}

impl fmt::Debug for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Decimal({self})")
    }
}

impl From<i64> for Decimal {
    fn from(value: i64) -> Self {
        Decimal::from_int(value)
    }
}

impl Add for Decimal {
    type Output = Decimal;
    fn add(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 + rhs.0)
    }
}

impl Sub for Decimal {
    type Output = Decimal;
    fn sub(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 - rhs.0)
    }
}

impl Mul for Decimal {
    type Output = Decimal;
    fn mul(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 * rhs.0)
    }
}

impl Div for Decimal {
    type Output = Decimal;
    fn div(self, rhs: Decimal) -> Decimal {
        Decimal(self.0 / rhs.0)
    }
}

impl PartialEq<i64> for Decimal {
    fn eq(&self, other: &i64) -> bool {
        self.0 == Ratio::from_integer(*other as i128)
    }
}

impl PartialOrd<i64> for Decimal {
    fn partial_cmp(&self, other: &i64) -> Option<Ordering> {
        self.0.partial_cmp(&Ratio::from_integer(*other as i128))
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_integer() {
            if let Some(v) = self.0.to_integer().to_i64() {
                return serializer.serialize_i64(v);
            }
        }
        serializer.serialize_f64(self.to_f64())
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl de::Visitor<'_> for Visitor {
            type Value = Decimal;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a decimal number")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Decimal, E> {
                Ok(Decimal::from_int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Decimal, E> {
                Ok(Decimal(Ratio::from_integer(v as i128)))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Decimal, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite number"));
                }
                // f64 Display is the shortest text that round-trips, which is
                // the literal as written for label-sized values.
                format!("{v}").parse().map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Decimal, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(Visitor)
    }
}
