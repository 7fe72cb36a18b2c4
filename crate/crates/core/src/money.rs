//! Integer-cent money.
//!
//! Schedule amounts and every term of the household income identity are
//! carried in cents so that published rates reproduce exactly and the
//! adjusted-income identity holds without rounding slack.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cents(pub i64);

fn div_round(n: i128, d: i128) -> i64 {
    debug_assert!(d > 0);
    let q = if n >= 0 { (n + d / 2) / d } else { -((-n + d / 2) / d) };
    q as i64
}

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn euros(e: i64) -> Self {
        Cents(e * 100)
    }

    /// Nearest cent, halves away from zero.
    pub fn from_euros(e: f64) -> Self {
        Cents((e * 100.0).round() as i64)
    }

    pub fn to_euros(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Weekly amount to monthly at 52/12.
    pub fn weekly_to_monthly(self) -> Self {
        Cents(div_round(self.0 as i128 * 52, 12))
    }

    pub fn annual_to_monthly(self) -> Self {
        Cents(div_round(self.0 as i128, 12))
    }

    pub fn annual_to_weekly(self) -> Self {
        Cents(div_round(self.0 as i128, 52))
    }

    pub fn weekly_to_annual(self) -> Self {
        Cents(self.0 * 52)
    }

    /// `self × rate`, rounded to the nearest cent.
    pub fn scale(self, rate: f64) -> Self {
        Cents((self.0 as f64 * rate).round() as i64)
    }

    /// `self × num / den` in exact integer arithmetic, rounded to the nearest cent.
    pub fn mul_div(self, num: i64, den: i64) -> Self {
        Cents(div_round(self.0 as i128 * num as i128, den as i128))
    }

    pub fn max(self, other: Cents) -> Cents {
        Cents(self.0.max(other.0))
    }

    pub fn min(self, other: Cents) -> Cents {
        Cents(self.0.min(other.0))
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl FromStr for Cents {
    type Err = Error;

    /// Exact decimal parse with at most two fractional digits (`"151.50"`, `"-3.1"`, `"1462"`).
    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim().trim_start_matches('€');
        let bad = || Error::invalid(format!("`{s}` is not a money amount"));
        let (neg, body) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        let whole = whole.replace(',', "");
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 2 {
            return Err(Error::invalid(format!("`{s}` has more than two decimal places")));
        }
        let w: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let f: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        let v = w * 100 + f;
        Ok(Cents(if neg { -v } else { v }))
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", a / 100, a % 100)
    }
}

impl Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0 + rhs.0)
    }
}

impl Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(self.0 - rhs.0)
    }
}

impl Neg for Cents {
    type Output = Cents;
    fn neg(self) -> Cents {
        Cents(-self.0)
    }
}

impl AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Cents {
    fn sub_assign(&mut self, rhs: Cents) {
        self.0 -= rhs.0;
    }
}

impl Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        Cents(iter.map(|c| c.0).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimal_amounts() {
        assert_eq!("151.50".parse::<Cents>().unwrap(), Cents(15150));
        assert_eq!("€1,462".parse::<Cents>().unwrap(), Cents(146200));
        assert_eq!("-3.1".parse::<Cents>().unwrap(), Cents(-310));
        assert_eq!("0.05".parse::<Cents>().unwrap(), Cents(5));
        assert!("1.005".parse::<Cents>().is_err());
        assert!("abc".parse::<Cents>().is_err());
        assert!("".parse::<Cents>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for c in [0, 5, -5, 15150, -146200, 123456789] {
            let s = Cents(c).to_string();
            assert_eq!(s.parse::<Cents>().unwrap(), Cents(c), "{s}");
        }
        assert_eq!(Cents(-5).to_string(), "-0.05");
    }

    #[test]
    fn weekly_monthly_conversion() {
        // 350 × 52 / 12 = 1516.666..
        assert_eq!(Cents::euros(350).weekly_to_monthly(), Cents(151667));
        assert_eq!(Cents::euros(12).weekly_to_monthly(), Cents::euros(52));
        assert_eq!(Cents(-151667).annual_to_monthly(), Cents(-12639));
    }

    #[test]
    fn scale_rounds_to_nearest_cent() {
        assert_eq!(Cents::euros(500).scale(0.70), Cents::euros(350));
        assert_eq!(Cents::euros(400).scale(0.85), Cents::euros(340));
        assert_eq!(Cents(1).scale(0.5), Cents(1));
    }
}
