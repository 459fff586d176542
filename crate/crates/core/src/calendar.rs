//! Calendar anchoring for monthly series.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid year-month `{0}`")]
pub struct YearMonthParseError(pub String);

/// A calendar month. Serialized as ISO `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Self { year, month })
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        Self {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u32,
        }
    }

    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    pub fn succ(self) -> Self {
        self.add_months(1)
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i64 {
        other.ordinal() - self.ordinal()
    }

    /// Parses the WONDER `Month Code` form `YYYY/MM`.
    pub fn parse_month_code(s: &str) -> Result<Self, YearMonthParseError> {
        Self::parse_with(s, '/')
    }

    fn parse_with(s: &str, sep: char) -> Result<Self, YearMonthParseError> {
        let err = || YearMonthParseError(s.to_string());
        let (y, m) = s.trim().split_once(sep).ok_or_else(err)?;
        if y.len() != 4 || m.len() != 2 {
            return Err(err());
        }
        let year: i32 = y.parse().map_err(|_| err())?;
        let month: u32 = m.parse().map_err(|_| err())?;
        Self::new(year, month).ok_or_else(err)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = YearMonthParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_with(s, '-')
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_arithmetic_wraps_years() {
        let ym = YearMonth::new(2019, 12).unwrap();
        assert_eq!(ym.succ(), YearMonth::new(2020, 1).unwrap());
        assert_eq!(ym.add_months(-12), YearMonth::new(2018, 12).unwrap());
        assert_eq!(YearMonth::new(2015, 1).unwrap().months_until(ym), 59);
    }

    #[test]
    fn parses_both_forms() {
        assert_eq!("2015-03".parse::<YearMonth>().unwrap(), YearMonth::new(2015, 3).unwrap());
        assert_eq!(YearMonth::parse_month_code("2015/03").unwrap(), YearMonth::new(2015, 3).unwrap());
        assert!(YearMonth::parse_month_code("Mar., 2015").is_err());
        assert!(YearMonth::parse_month_code("2015/13").is_err());
        assert!("2015/03".parse::<YearMonth>().is_err());
    }
}
