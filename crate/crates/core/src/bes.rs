//! A fair coin observed through an erasure channel, under bit-error
//! distortion.
//!
//! Closed forms for the rate-distortion function, its slope and both
//! dispersions, exact finite-blocklength bounds, and rate-blocklength
//! curves.
//!
//! Two problems share the same asymptotics. In the noisy problem an erased
//! bit is wrong with probability 1/2 whatever the code does. In the
//! surrogate problem it costs exactly 1/2. For `j` erasures and a threshold
//! `kd`, the surrogate problem leaves `floor(kd - j/2)` errors for the
//! unerased bits, while the noisy one leaves `floor(kd) - i` with
//! `i ~ Bin(j, 1/2)`.
//!
//! The bounds take `ln M` so that code sizes far beyond `u64` are usable.
//! The converses hold for every code. The achievability bounds are the
//! exact excess-distortion probabilities of uniform random codebooks.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::dispersion::{gaussian_approximation, ThirdOrder};
use crate::error::{Error, Result};
use crate::numerics::{binary_entropy, gaussian_q_inv, ln_binomial, BinomialRow, Rational};

/// Terms below this log-weight are dropped. Converses lose a nonnegative
/// amount; achievability bounds are charged the full dropped mass.
const LN_WEIGHT_FLOOR: f64 = -80.0;

/// Code sizes are refined to exact integers below `e^30`, well inside the
/// range where `f64` holds every integer.
const INTEGER_REFINE_LN: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesParams {
    /// Erasure probability.
    pub delta: Rational,
    /// Per-letter bit-error threshold.
    pub d: Rational,
    /// Target excess-distortion probability.
    pub eps: f64,
}

impl BesParams {
    pub fn new(delta: Rational, d: Rational, eps: f64) -> Result<Self> {
        let p = BesParams { delta, d, eps };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from floats, each converted to its nearest short fraction.
    pub fn from_f64(delta: f64, d: f64, eps: f64) -> Result<Self> {
        Self::new(Rational::from_f64(delta)?, Rational::from_f64(d)?, eps)
    }

    pub fn validate(&self) -> Result<()> {
        let half = Rational::new(1, 2)?;
        let zero = Rational::zero();
        let mut problems = Vec::new();
        if self.delta < zero || self.delta > Rational::one() {
            problems.push(format!("erasure probability {} outside [0, 1]", self.delta));
        }
        if self.d < self.delta * half || self.d > half {
            problems.push(format!("threshold {} outside [delta/2, 1/2] = [{}, 1/2]", self.d, self.delta * half));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            problems.push(format!("eps {} outside (0, 1)", self.eps));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    fn floats(&self) -> (f64, f64) {
        (self.delta.to_f64(), self.d.to_f64())
    }
}

/// `R(d) = (1 - delta)(ln 2 - h((d - delta/2) / (1 - delta)))` in nats.
pub fn bes_rate(params: &BesParams) -> Result<f64> {
    params.validate()?;
    let (delta, d) = params.floats();
    if delta >= 1.0 {
        return Ok(0.0);
    }
    let arg = ((d - delta / 2.0) / (1.0 - delta)).clamp(0.0, 0.5);
    Ok(((1.0 - delta) * (LN_2 - binary_entropy(arg)?)).max(0.0))
}

/// `lambda* = ln((1 - delta/2 - d) / (d - delta/2))`; infinite at
/// `d = delta/2`.
pub fn bes_lambda_star(params: &BesParams) -> Result<f64> {
    params.validate()?;
    let half = Rational::new(1, 2)?;
    let num = Rational::one() - params.delta * half - params.d;
    let den = params.d - params.delta * half;
    if den == Rational::zero() {
        return Ok(f64::INFINITY);
    }
    Ok((num.to_f64() / den.to_f64()).ln())
}

/// `(v_noisy, v_surrogate)` in nats squared:
/// `V = delta (1 - delta) ln^2 cosh(lambda*/2)` and
/// `Vt = V + (delta / 4) lambda*^2`.
pub fn bes_dispersions(params: &BesParams) -> Result<(f64, f64)> {
    let lam = bes_lambda_star(params)?;
    if !lam.is_finite() {
        return Err(Error::Range { d: params.d.to_f64(), d_min: params.delta.to_f64() / 2.0, d_max: 0.5 });
    }
    let delta = params.delta.to_f64();
    // ln cosh(x) = |x| + ln(1 + e^{-2|x|}) - ln 2
    let x = lam.abs() / 2.0;
    let ln_cosh = x + (-2.0 * x).exp().ln_1p() - LN_2;
    let v = delta * (1.0 - delta) * ln_cosh * ln_cosh;
    Ok((v + delta / 4.0 * lam * lam, v))
}

/// Which of the two problems a bound refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Noisy,
    Surrogate,
}

#[derive(Clone, Copy, Debug)]
struct Term {
    ln_w: f64,
    /// `ln p`, with `p = 2^-n binosum(n, l)` the probability that a uniform
    /// word lies within `l` errors of the unerased bits.
    ln_p: f64,
    /// `ln(1 - p)`, from the complementary sum.
    ln_q: f64,
}

/// Bounds at one blocklength, precomputed as weighted covering terms.
#[derive(Clone, Debug)]
pub struct BesBounds {
    pub k: u64,
    pub family: Family,
    terms: Vec<Term>,
    /// Total weight of achievability terms that were dropped.
    dropped: f64,
    /// Weight of terms the converse sum leaves out by construction.
    converse_only: Vec<bool>,
}

fn ln_pow(x: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else if x == 0.0 {
        f64::NEG_INFINITY
    } else {
        n as f64 * x.ln()
    }
}

impl BesBounds {
    pub fn new(k: u64, params: &BesParams, family: Family) -> Result<Self> {
        params.validate()?;
        if k == 0 {
            return Err(Error::Domain("blocklength must be positive".into()));
        }
        let delta = params.delta.to_f64();
        let kd = params.d.mul_int(k as i128);
        let kd_floor = kd.floor();
        let converse_limit = params.d.mul_int(2 * k as i128).floor();
        let half = Rational::new(1, 2)?;

        let erasure_weight = |j: u64| ln_binomial(k, j) + ln_pow(delta, j) + ln_pow(1.0 - delta, k - j);
        let significant: Vec<u64> = (0..=k).filter(|&j| erasure_weight(j) >= LN_WEIGHT_FLOOR).collect();
        let mut dropped: f64 = (0..=k)
            .filter(|&j| {
                let w = erasure_weight(j);
                w < LN_WEIGHT_FLOOR && w > f64::NEG_INFINITY
            })
            .map(|j| erasure_weight(j).exp())
            .sum();

        let per_j: Vec<(Vec<Term>, Vec<bool>, f64)> = significant
            .par_iter()
            .map(|&j| {
                let n = k - j;
                let row = BinomialRow::new(n);
                let lw = erasure_weight(j);
                let term = |ln_w: f64, l: i64| {
                    let total = n as f64 * LN_2;
                    Term { ln_w, ln_p: row.ln_prefix(l) - total, ln_q: row.ln_suffix(l) - total }
                };
                let mut terms = Vec::new();
                let mut outside = Vec::new();
                let mut lost = 0.0;
                match family {
                    Family::Surrogate => {
                        let l = (kd - Rational::from_integer(j as i128) * half).floor();
                        terms.push(term(lw, l as i64));
                        outside.push(j as i128 > converse_limit);
                    }
                    Family::Noisy => {
                        for i in 0..=j {
                            let lwi = lw + ln_binomial(j, i) - j as f64 * LN_2;
                            if lwi < LN_WEIGHT_FLOOR {
                                lost += lwi.exp();
                                continue;
                            }
                            terms.push(term(lwi, (kd_floor - i as i128) as i64));
                            outside.push(false);
                        }
                    }
                }
                (terms, outside, lost)
            })
            .collect();

        let mut terms = Vec::new();
        let mut converse_only = Vec::new();
        for (t, o, lost) in per_j {
            terms.extend(t);
            converse_only.extend(o);
            dropped += lost;
        }
        Ok(BesBounds { k, family, terms, dropped, converse_only })
    }

    /// Lower bound on the excess-distortion probability of any code with
    /// `M = e^ln_m` codewords.
    pub fn converse_ln(&self, ln_m: f64) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .zip(&self.converse_only)
            .filter(|(_, skip)| !**skip)
            .map(|(t, _)| {
                let e = ln_m + t.ln_p;
                if e >= 0.0 {
                    0.0
                } else {
                    (t.ln_w).exp() * -e.exp_m1()
                }
            })
            .sum();
        total.clamp(0.0, 1.0)
    }

    /// Average excess-distortion probability of `M = e^ln_m` uniformly drawn
    /// codewords under the best encoder.
    pub fn achievability_ln(&self, ln_m: f64) -> f64 {
        let total: f64 = self
            .terms
            .iter()
            .map(|t| {
                if t.ln_p == f64::NEG_INFINITY {
                    return t.ln_w.exp();
                }
                if t.ln_q == f64::NEG_INFINITY {
                    return 0.0;
                }
                // (1 - p)^M = exp(-exp(ln M + ln(-ln(1 - p))))
                let ln_minus_ln_q = if t.ln_p < -30.0 {
                    t.ln_p
                } else if t.ln_p < -LN_2 {
                    (-(-t.ln_p.exp()).ln_1p()).ln()
                } else {
                    (-t.ln_q).ln()
                };
                (t.ln_w - (ln_m + ln_minus_ln_q).exp()).exp()
            })
            .sum();
        (total + self.dropped).clamp(0.0, 1.0)
    }

    /// Smallest code size the converse allows, as `ln M_c` with
    /// `M_c = 1 + max{M : converse(M) > eps}`. Integer-exact when
    /// `ln M_c < 30`. Infinite when the converse exceeds `eps` for every `M`,
    /// which happens in the noisy problem when erased bits alone break the
    /// threshold too often.
    pub fn converse_log_size(&self, eps: f64) -> f64 {
        let hi = self.k as f64 * LN_2 + 1.0;
        if self.converse_ln(0.0) <= eps {
            return 0.0;
        }
        if self.converse_ln(hi) > eps {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.converse_ln(mid) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi.max(1.0) {
                break;
            }
        }
        if lo < INTEGER_REFINE_LN {
            let mut m = lo.exp().floor().max(1.0);
            while self.converse_ln((m + 1.0).ln()) > eps {
                m += 1.0;
            }
            while m > 1.0 && self.converse_ln(m.ln()) <= eps {
                m -= 1.0;
            }
            return (m + 1.0).ln();
        }
        lo
    }

    /// Smallest code size certified by the achievability bound, as
    /// `ln M_a` with `M_a = min{M : achievability(M) <= eps}`, or `None`
    /// when the bound stays above `eps` for every `M`.
    pub fn achievability_log_size(&self, eps: f64) -> Option<f64> {
        if self.achievability_ln(0.0) <= eps {
            return Some(0.0);
        }
        // at infinite M only the terms that no word can cover remain
        if self.achievability_ln(f64::INFINITY) > eps {
            return None;
        }
        let mut hi = self.k as f64 * LN_2 + 10.0;
        while self.achievability_ln(hi) > eps {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.achievability_ln(mid) > eps {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi.max(1.0) {
                break;
            }
        }
        if hi < INTEGER_REFINE_LN {
            let mut m = hi.exp().ceil();
            while m > 1.0 && self.achievability_ln((m - 1.0).ln()) <= eps {
                m -= 1.0;
            }
            while self.achievability_ln(m.ln()) > eps {
                m += 1.0;
            }
            return Some(m.ln());
        }
        Some(hi)
    }
}

fn m_ln(m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("code size must be at least 1, got {m}")));
    }
    Ok(m.ln())
}

/// Converse for the surrogate problem: any code with `M` codewords has
/// excess-distortion probability at least the returned value. The sum runs
/// over `j <= floor(2kd)` erasures.
pub fn bes_converse(k: u64, m: f64, params: &BesParams) -> Result<f64> {
    Ok(BesBounds::new(k, params, Family::Surrogate)?.converse_ln(m_ln(m)?))
}

/// Random-coding achievability for the surrogate problem.
pub fn bes_achievability(k: u64, m: f64, params: &BesParams) -> Result<f64> {
    Ok(BesBounds::new(k, params, Family::Surrogate)?.achievability_ln(m_ln(m)?))
}

/// Converse for the noisy problem, where each erased bit is independently
/// wrong with probability 1/2.
pub fn bes_noisy_converse(k: u64, m: f64, params: &BesParams) -> Result<f64> {
    Ok(BesBounds::new(k, params, Family::Noisy)?.converse_ln(m_ln(m)?))
}

/// Random-coding achievability for the noisy problem.
pub fn bes_noisy_achievability(k: u64, m: f64, params: &BesParams) -> Result<f64> {
    Ok(BesBounds::new(k, params, Family::Noisy)?.achievability_ln(m_ln(m)?))
}

/// One blocklength of a rate-blocklength curve, in bits per letter.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub k: u64,
    pub rate_rd: f64,
    pub noisy_converse: f64,
    pub noisy_achievability: Option<f64>,
    pub noisy_gaussian: f64,
    pub noisy_gaussian_logk: f64,
    pub surrogate_converse: f64,
    pub surrogate_achievability: Option<f64>,
    pub surrogate_gaussian: f64,
    pub surrogate_gaussian_logk: f64,
    /// Why a column is missing, if any.
    pub note: Option<String>,
}

/// Rate-blocklength curves for both problems, rows sorted by `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurve {
    pub params: BesParams,
    pub rows: Vec<CurveRow>,
}

/// `count` blocklengths spaced evenly in `ln k` from `k_min` to `k_max`,
/// rounded and deduplicated.
pub fn log_spaced(k_min: u64, k_max: u64, count: usize) -> Vec<u64> {
    if count <= 1 || k_min >= k_max {
        return vec![k_min.max(1)];
    }
    let (a, b) = ((k_min.max(1) as f64).ln(), (k_max as f64).ln());
    let mut ks: Vec<u64> =
        (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as u64).collect();
    ks.dedup();
    ks
}

/// Default blocklength grid, 10 to 5000.
pub fn default_k_grid() -> Vec<u64> {
    log_spaced(10, 5000, 40)
}

fn curve_row(k: u64, params: &BesParams, rate: f64, v_noisy: f64, v_sur: f64) -> Result<CurveRow> {
    let eps = params.eps;
    let kf = k as f64;
    let noisy = BesBounds::new(k, params, Family::Noisy)?;
    let sur = BesBounds::new(k, params, Family::Surrogate)?;
    let mut notes = Vec::new();
    let per_letter = |ln_m: f64| ln_m / kf / LN_2;
    let mut ach = |b: &BesBounds, label: &str| match b.achievability_log_size(eps) {
        Some(v) => Some(per_letter(v)),
        None => {
            notes.push(format!("{label} achievability stays above eps"));
            None
        }
    };
    let noisy_ach = ach(&noisy, "noisy");
    let sur_ach = ach(&sur, "surrogate");
    let noisy_conv = noisy.converse_log_size(eps);
    let sur_conv = sur.converse_log_size(eps);
    for (v, label) in [(noisy_conv, "noisy"), (sur_conv, "surrogate")] {
        if v.is_infinite() {
            notes.push(format!("{label} converse: no code meets eps"));
        }
    }
    let g = |v: f64, t: ThirdOrder| gaussian_approximation(k, eps, rate, v, t).map(|x| x / LN_2);
    Ok(CurveRow {
        k,
        rate_rd: rate / LN_2,
        noisy_converse: per_letter(noisy_conv),
        noisy_achievability: noisy_ach,
        noisy_gaussian: g(v_noisy, ThirdOrder::None)?,
        noisy_gaussian_logk: g(v_noisy, ThirdOrder::HalfLogOverK)?,
        surrogate_converse: per_letter(sur_conv),
        surrogate_achievability: sur_ach,
        surrogate_gaussian: g(v_sur, ThirdOrder::None)?,
        surrogate_gaussian_logk: g(v_sur, ThirdOrder::HalfLogOverK)?,
        note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
    })
}

/// Converse, achievability and Gaussian rates for both problems at every
/// blocklength in `k_list`. Rows are computed in parallel and returned in
/// increasing `k`.
pub fn bes_curve(params: &BesParams, k_list: &[u64]) -> Result<BoundCurve> {
    params.validate()?;
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::Validation(vec!["blocklength list must be nonempty and positive".into()]));
    }
    let mut ks = k_list.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let rate = bes_rate(params)?;
    let (v_noisy, v_sur) = bes_dispersions(params)?;
    gaussian_q_inv(params.eps)?;
    let rows = ks.par_iter().map(|&k| curve_row(k, params, rate, v_noisy, v_sur)).collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve { params: *params, rows })
}
