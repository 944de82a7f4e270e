//! Exact rationals for distortion thresholds and block distortion sums.
//!
//! Distortion levels such as `d = 0.1` and erasure rates enter the
//! combinatorial bounds only through floors like `floor(k*d - j/2)`, so they
//! are kept exact. Values with an infinite distortion are carried by
//! [`ExtRational`].

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// A rational number in lowest terms with a positive denominator.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rational(Ratio<i128>);

impl Rational {
    pub fn new(numer: i128, denom: i128) -> Result<Self> {
        if denom == 0 {
            return Err(Error::Domain("rational with zero denominator".into()));
        }
        Ok(Rational(Ratio::new(numer, denom)))
    }

    pub fn from_integer(n: i128) -> Self {
        Rational(Ratio::from_integer(n))
    }

    pub fn zero() -> Self {
        Rational(Ratio::zero())
    }

    pub fn one() -> Self {
        Self::from_integer(1)
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    /// Largest integer not exceeding the value.
    pub fn floor(&self) -> i128 {
        Integer::div_floor(&self.numer(), &self.denom())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or_else(|| self.numer() as f64 / self.denom() as f64)
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn mul_int(&self, k: i128) -> Self {
        Rational(self.0 * k)
    }

    /// Best rational approximation with denominator at most `1e12` that
    /// reproduces `x` to within `1e-12` relative (absolute near zero).
    ///
    /// Floats that came from short decimals (`0.1`, `0.45`) round-trip to the
    /// intended fraction.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot represent {x} as a rational")));
        }
        let tol = 1e-12 * x.abs().max(1.0);
        let max_denom: i128 = 1_000_000_000_000;
        let sign = if x < 0.0 { -1 } else { 1 };
        let target = x.abs();
        // continued-fraction convergents
        let (mut p0, mut q0, mut p1, mut q1): (i128, i128, i128, i128) = (0, 1, 1, 0);
        let mut r = target;
        for _ in 0..64 {
            let a = r.floor();
            if a > 1e18 {
                break;
            }
            let a_i = a as i128;
            let p2 = a_i * p1 + p0;
            let q2 = a_i * q1 + q0;
            if q2 > max_denom {
                break;
            }
            p0 = p1;
            q0 = q1;
            p1 = p2;
            q1 = q2;
            if ((p1 as f64) / (q1 as f64) - target).abs() <= tol {
                return Rational::new(sign * p1, q1);
            }
            let frac = r - a;
            if frac <= 0.0 {
                break;
            }
            r = 1.0 / frac;
        }
        if q1 > 0 && ((p1 as f64) / (q1 as f64) - target).abs() <= tol {
            return Rational::new(sign * p1, q1);
        }
        Err(Error::Domain(format!("{x} has no rational approximation with denominator <= {max_denom}")))
    }
}

impl FromStr for Rational {
    type Err = Error;

    /// Accepts `"p/q"`, plain integers, and decimals such as `"0.125"` or
    /// `"-1.5"`; decimals are converted exactly.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Domain(format!("cannot parse '{s}' as a rational"));
        if let Some((n, d)) = s.split_once('/') {
            let n: i128 = n.trim().parse().map_err(|_| bad())?;
            let d: i128 = d.trim().parse().map_err(|_| bad())?;
            return Rational::new(n, d);
        }
        if s.contains(['e', 'E']) {
            let x: f64 = s.parse().map_err(|_| bad())?;
            return Rational::from_f64(x);
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
            || frac_part.len() > 30
        {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let n: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        let d = 10i128.pow(frac_part.len() as u32);
        Rational::new(if neg { -n } else { n }, d)
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        Rational(self.0 + rhs.0)
    }
}

impl Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        Rational(self.0 - rhs.0)
    }
}

impl Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational(self.0 * rhs.0)
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

/// A nonnegative distortion value that may be `+inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtRational {
    Finite(Rational),
    Infinite,
}

impl ExtRational {
    pub fn to_f64(&self) -> f64 {
        match self {
            ExtRational::Finite(r) => r.to_f64(),
            ExtRational::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtRational::Finite(_))
    }

    pub fn finite(&self) -> Option<Rational> {
        match self {
            ExtRational::Finite(r) => Some(*r),
            ExtRational::Infinite => None,
        }
    }
}

impl FromStr for ExtRational {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" => Ok(ExtRational::Infinite),
            _ => s.parse().map(ExtRational::Finite),
        }
    }
}

impl Ord for ExtRational {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtRational::Finite(a), ExtRational::Finite(b)) => a.cmp(b),
            (ExtRational::Finite(_), ExtRational::Infinite) => Ordering::Less,
            (ExtRational::Infinite, ExtRational::Finite(_)) => Ordering::Greater,
            (ExtRational::Infinite, ExtRational::Infinite) => Ordering::Equal,
        }
    }
}

impl PartialOrd for ExtRational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for ExtRational {
    type Output = ExtRational;
    fn add(self, rhs: ExtRational) -> ExtRational {
        match (self, rhs) {
            (ExtRational::Finite(a), ExtRational::Finite(b)) => ExtRational::Finite(a + b),
            _ => ExtRational::Infinite,
        }
    }
}

impl fmt::Display for ExtRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtRational::Finite(r) => write!(f, "{r}"),
            ExtRational::Infinite => write!(f, "inf"),
        }
    }
}
