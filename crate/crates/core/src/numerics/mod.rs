//! Scalar numerical primitives shared by the solvers and bound evaluators.
//!
//! Everything here works in nats. Gaussian tails come from a complementary
//! error function; the quantile is obtained by a safeguarded Newton iteration
//! on the tail itself so that `gaussian_q(gaussian_q_inv(p)) == p` holds to
//! the accuracy of `gaussian_q`.

mod logreal;
mod rational;

pub use logreal::{log_add_exp, log_sum_exp, LogReal};
pub use rational::{ExtRational, Rational};

use statrs::function::erf::erfc;
use statrs::function::factorial::ln_binomial as statrs_ln_binomial;

use crate::error::{Error, Result};

/// Berry–Esseen constant valid for independent, non-identical summands.
pub const BERRY_ESSEEN_C0: f64 = 0.5600;
/// Berry–Esseen constant for identically distributed summands.
pub const BERRY_ESSEEN_C0_IID: f64 = 0.4784;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Complementary standard normal cdf, `P[N(0,1) > x]`.
pub fn gaussian_q(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * erfc(x / SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverse of [`gaussian_q`] on `(0, 1)`.
pub fn gaussian_q_inv(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("Q^-1 requires 0 < eps < 1, got {eps}")));
    }
    if eps == 0.5 {
        return Ok(0.0);
    }
    if eps > 0.5 {
        return gaussian_q_inv(1.0 - eps).map(|x| -x);
    }
    // Q is decreasing; the root lies in [0, 39] for eps in (0, 0.5).
    let (mut lo, mut hi) = (0.0f64, 39.0f64);
    let mut x = {
        // Rough start from the tail asymptote.
        let t = (-2.0 * eps.ln()).sqrt();
        t.clamp(lo, hi)
    };
    for _ in 0..200 {
        let f = gaussian_q(x) - eps;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let pdf = normal_pdf(x);
        let newton = if pdf > 0.0 { x + f / pdf } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() < 1e-13 * x.abs().max(1.0) || hi - lo < 1e-13 {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Binary entropy in nats with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("binary entropy requires p in [0,1], got {p}")));
    }
    Ok(xlogx_neg(p) + xlogx_neg(1.0 - p))
}

/// `-x ln x` with the `0 ln 0 = 0` convention.
pub fn xlogx_neg(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// `ln C(n, i)`; `-inf` when `i > n`.
pub fn ln_binomial(n: u64, i: u64) -> f64 {
    if i > n {
        return f64::NEG_INFINITY;
    }
    statrs_ln_binomial(n, i)
}

/// `ln sum_{i=0}^{j} C(k, i)`, zero for `j < 0` and `2^k` for `j >= k`.
pub fn log_binosum(k: u64, j: i64) -> LogReal {
    if j < 0 {
        return LogReal::ZERO;
    }
    if j as u64 >= k {
        return LogReal::from_ln(k as f64 * std::f64::consts::LN_2);
    }
    let full = k as f64 * std::f64::consts::LN_2;
    LogReal::from_ln(log_sum_exp((0..=j as u64).map(|i| ln_binomial(k, i))).min(full))
}

/// All partial binomial sums of one row `n`, in log domain.
///
/// `ln_prefix(l)` is `ln sum_{i<=l} C(n,i)` and `ln_suffix(l)` is
/// `ln sum_{i>l} C(n,i)`; both follow the out-of-range conventions of
/// [`log_binosum`].
#[derive(Clone, Debug)]
pub struct BinomialRow {
    n: u64,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl BinomialRow {
    pub fn new(n: u64) -> Self {
        let terms: Vec<f64> = (0..=n).map(|i| ln_binomial(n, i)).collect();
        let mut prefix = Vec::with_capacity(terms.len());
        let mut acc = f64::NEG_INFINITY;
        for &t in &terms {
            acc = log_add_exp(acc, t);
            prefix.push(acc);
        }
        // suffix[i] = ln sum_{m >= i} C(n, m), with one trailing -inf
        let mut suffix = vec![f64::NEG_INFINITY; terms.len() + 1];
        let mut acc = f64::NEG_INFINITY;
        for i in (0..terms.len()).rev() {
            acc = log_add_exp(acc, terms[i]);
            suffix[i] = acc;
        }
        BinomialRow { n, prefix, suffix }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn ln_prefix(&self, l: i64) -> f64 {
        if l < 0 {
            f64::NEG_INFINITY
        } else if l as u64 >= self.n {
            self.n as f64 * std::f64::consts::LN_2
        } else {
            self.prefix[l as usize]
        }
    }

    pub fn ln_suffix(&self, l: i64) -> f64 {
        if l < 0 {
            self.n as f64 * std::f64::consts::LN_2
        } else if l as u64 >= self.n {
            f64::NEG_INFINITY
        } else {
            self.suffix[l as usize + 1]
        }
    }
}

/// Mean, variance and absolute third central moment of one summand.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub abs_third: f64,
}

impl Moments {
    pub fn new(mean: f64, variance: f64, abs_third: f64) -> Self {
        Moments { mean, variance, abs_third }
    }

    /// Moments of a finitely supported law given as `(value, prob)` pairs.
    pub fn of_law(law: &[(f64, f64)]) -> Self {
        let mean: f64 = law.iter().map(|(v, p)| v * p).sum();
        let variance = law.iter().map(|(v, p)| p * (v - mean).powi(2)).sum();
        let abs_third = law.iter().map(|(v, p)| p * (v - mean).abs().powi(3)).sum();
        Moments { mean, variance, abs_third }
    }
}

/// Berry–Esseen ratio `c0 T / V^{3/2}` where `V` and `T` are the averaged
/// variances and absolute third central moments of independent summands.
pub fn berry_esseen_ratio(moments: &[Moments], identically_distributed: bool) -> Result<f64> {
    if moments.is_empty() {
        return Err(Error::Domain("Berry-Esseen ratio of an empty sum".into()));
    }
    if let Some(m) = moments.iter().find(|m| !(m.variance > 0.0)) {
        return Err(Error::Domain(format!("Berry-Esseen ratio needs positive variances, got {}", m.variance)));
    }
    let k = moments.len() as f64;
    let v = moments.iter().map(|m| m.variance).sum::<f64>() / k;
    let t = moments.iter().map(|m| m.abs_third).sum::<f64>() / k;
    let c0 = if identically_distributed { BERRY_ESSEEN_C0_IID } else { BERRY_ESSEEN_C0 };
    Ok(c0 * t / v.powf(1.5))
}
