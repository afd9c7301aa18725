//! Exact non-negative rationals used for subscale means and annotation metrics.
//!
//! Serialized as a string (`"7/2"`, `"3"`) so that documents round-trip
//! without float drift.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fraction(Ratio<u32>);

impl Fraction {
    pub const ZERO: Fraction = Fraction(Ratio::new_raw(0, 1));
    pub const ONE: Fraction = Fraction(Ratio::new_raw(1, 1));

    /// Panics if `den` is zero.
    pub fn new(num: u32, den: u32) -> Self {
        Fraction(Ratio::new(num, den))
    }

    pub fn integer(n: u32) -> Self {
        Fraction(Ratio::from_integer(n))
    }

    /// Builds a fraction from a half-step grid index: `halves / 2`.
    pub fn halves(halves: u32) -> Self {
        Fraction::new(halves, 2)
    }

    pub fn numer(&self) -> u32 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u32 {
        *self.0.denom()
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.numer()) / f64::from(self.denom())
    }

    pub(crate) fn ratio(self) -> Ratio<u32> {
        self.0
    }
}

impl From<Ratio<u32>> for Fraction {
    fn from(r: Ratio<u32>) -> Self {
        Fraction(r)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid fraction literal {0:?}")]
pub struct ParseFractionError(String);

impl FromStr for Fraction {
    type Err = ParseFractionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseFractionError(s.to_string());
        match s.split_once('/') {
            None => s.trim().parse().map(Fraction::integer).map_err(|_| err()),
            Some((n, d)) => {
                let n: u32 = n.trim().parse().map_err(|_| err())?;
                let d: u32 = d.trim().parse().map_err(|_| err())?;
                if d == 0 {
                    return Err(err());
                }
                Ok(Fraction::new(n, d))
            }
        }
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}
