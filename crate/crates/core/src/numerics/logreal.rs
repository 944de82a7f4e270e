use std::ops::{Add, Mul};

/// A nonnegative real stored as its natural logarithm; `-inf` encodes zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogReal(f64);

impl LogReal {
    pub const ZERO: LogReal = LogReal(f64::NEG_INFINITY);
    pub const ONE: LogReal = LogReal(0.0);

    /// Wraps a value that is already a logarithm.
    pub fn from_ln(ln: f64) -> Self {
        debug_assert!(!ln.is_nan());
        LogReal(ln)
    }

    /// Panics in debug builds on negative input.
    pub fn from_value(x: f64) -> Self {
        debug_assert!(x >= 0.0);
        LogReal(x.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn powf(self, e: f64) -> Self {
        if self.is_zero() {
            return if e == 0.0 { Self::ONE } else { Self::ZERO };
        }
        LogReal(self.0 * e)
    }

    /// Sum of many terms with a single max shift.
    pub fn sum<I: IntoIterator<Item = LogReal>>(terms: I) -> LogReal {
        LogReal(log_sum_exp(terms.into_iter().map(|t| t.0)))
    }
}

impl Add for LogReal {
    type Output = LogReal;
    fn add(self, rhs: LogReal) -> LogReal {
        LogReal(log_add_exp(self.0, rhs.0))
    }
}

impl Mul for LogReal {
    type Output = LogReal;
    fn mul(self, rhs: LogReal) -> LogReal {
        if self.is_zero() || rhs.is_zero() {
            return LogReal::ZERO;
        }
        LogReal(self.0 + rhs.0)
    }
}

/// `ln(e^a + e^b)` without overflow; `-inf` inputs act as zero.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if hi == f64::INFINITY {
        return f64::INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
