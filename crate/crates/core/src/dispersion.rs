//! Tilted informations, rate-dispersion functions and the Gaussian
//! approximation to the optimal rate.
//!
//! With `W = P_Z*|X`, `q = P_Z*` and slope `lambda`,
//!
//! ```text
//! jX(x)        = D(W(.|x) || q) + lambda E_W[dbar(x, Z)] - lambda d
//! jt(s, x, z)  = ln W(z|x)/q(z) + lambda d(s, z)         - lambda d
//! jp(s, x)     = D(W(.|x) || q) + lambda dbar_W(s|x)     - lambda d
//! dbar_W(s|x)  = sum_z W(z|x) d(s, z)
//! ```
//!
//! `V = Var jX(X)` is the dispersion of the surrogate problem and
//! `Vt = Var jt(S, X, Z*)` that of the noisy one; since
//! `jt = jX(X) + lambda (d(S, Z*) - dbar(X, Z*))` and the bracket has zero
//! mean given `X`, `Vt = V + lambda^2 E[Var(d(S, Z*) | X, Z*)]`.
//!
//! `jp` averages `jt` over `Z*` given `X`. It is the derivative of the
//! rate-distortion function with respect to `P_SX(s, x)`, up to an additive
//! constant, but its variance can fall short of `Vt`; for the erased coin
//! it equals `V`.

use crate::error::{Error, Result};
use crate::model::{surrogate_from_noisy, NoisySourceModel, SurrogateModel};
use crate::numerics::gaussian_q_inv;
use crate::rd_solver::{solve_distortion, SolverOptions, TiltedSolution};

/// Per-letter tilted informations in nats, indexed by original symbols.
#[derive(Clone, Debug)]
pub struct TiltedInfoTable {
    /// `jX(x)`; `None` for observations of zero probability.
    pub surrogate: Vec<Option<f64>>,
    /// `jt(s, x, z)`, indexed `[s][x][z]`; `None` where
    /// `P_SX(s, x) W(z|x) = 0`.
    pub noisy: Vec<Vec<Vec<Option<f64>>>>,
    /// `jp(s, x)`, indexed `[s][x]`; `None` where `P_SX(s, x) = 0`.
    pub pair: Vec<Vec<Option<f64>>>,
    /// `dbar_W(s|x)`, indexed like `pair`.
    pub inner: Vec<Vec<Option<f64>>>,
    /// `P_SX`, indexed `[s][x]`.
    pub joint: Vec<Vec<f64>>,
    /// `d(s, z)`.
    pub source_distortion: Vec<Vec<f64>>,
    /// `W(.|x)` by original observation; `None` for zero-probability `x`.
    pub kernel: Vec<Option<Vec<f64>>>,
    pub lambda_star: f64,
    pub distortion: f64,
    /// Largest disagreement between the divergence form of `jX` and the
    /// density form `ln W(z|x)/q(z) + lambda dbar(x,z) - lambda d`.
    pub density_form_residual: f64,
}

impl TiltedInfoTable {
    /// Law of `jt(S, X, Z*)` as `(value, probability)` pairs.
    pub fn noisy_law(&self) -> Vec<(f64, f64)> {
        let mut law = Vec::new();
        for (s, row) in self.noisy.iter().enumerate() {
            for (x, cells) in row.iter().enumerate() {
                if let Some(w) = &self.kernel[x] {
                    for (z, v) in cells.iter().enumerate() {
                        if let Some(v) = v {
                            law.push((*v, self.joint[s][x] * w[z]));
                        }
                    }
                }
            }
        }
        law
    }
}

/// Exact finite-sum moments of the tilted informations.
#[derive(Clone, Copy, Debug)]
pub struct DispersionReport {
    /// `E[jX(X)]`, equal to the rate at the solved level.
    pub rate: f64,
    /// `V = Var jX(X)`.
    pub v_surrogate: f64,
    /// `Vt = Var jt(S, X, Z*)`.
    pub v_noisy: f64,
    /// `Var jp(S, X)`.
    pub v_pair: f64,
    pub lambda_star: f64,
    /// `lambda^2 Var(d(S, Z*) - dbar(X, Z*))`.
    pub inner_variance_term: f64,
    /// `E[(jX(X) - R) (d(S, Z*) - dbar(X, Z*))]`, zero in exact arithmetic.
    pub covariance_cross_term: f64,
}

fn kl_row(w: &[f64], q: &[f64]) -> f64 {
    w.iter().zip(q).filter(|(w, _)| **w > 0.0).map(|(w, q)| w * (w / q).ln()).sum::<f64>()
}

/// Fills the tables from a solution of the surrogate problem of `model`.
pub fn tilted_info_table(model: &NoisySourceModel, solution: &TiltedSolution) -> Result<TiltedInfoTable> {
    let sur = surrogate_from_noisy(model, true)?;
    table_for(model, &sur, solution)
}

fn table_for(model: &NoisySourceModel, sur: &SurrogateModel, sol: &TiltedSolution) -> Result<TiltedInfoTable> {
    if sol.kernel.n_inputs() != sur.n_x() || sol.kernel.n_outputs() != sur.n_z() {
        return Err(Error::Domain("solution does not belong to this model".into()));
    }
    let lam = sol.lambda_star;
    let d = sol.distortion;
    let q = sol.marginal.probs();
    let (n_s, n_x, n_z) = (model.n_source(), model.n_observation(), model.n_reproduction());
    let mut surrogate = vec![None; n_x];
    let mut noisy = vec![vec![vec![None; n_z]; n_x]; n_s];
    let mut pair = vec![vec![None; n_x]; n_s];
    let mut inner = vec![vec![None; n_x]; n_s];
    let mut kernel = vec![None; n_x];
    let mut residual: f64 = 0.0;
    for (row, &x) in sur.kept.iter().enumerate() {
        let w = sol.kernel.row(row);
        kernel[x] = Some(w.to_vec());
        let div = kl_row(w, q);
        let expected: f64 = w.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(z, w)| w * sur.dbar(row, z)).sum();
        let jx = div + lam * expected - lam * d;
        surrogate[x] = Some(jx);
        for (z, &wz) in w.iter().enumerate() {
            if wz > 0.0 {
                let density = (wz / q[z]).ln() + lam * sur.dbar(row, z) - lam * d;
                residual = residual.max((density - jx).abs());
            }
        }
        for s in 0..n_s {
            if model.joint(s, x) > 0.0 {
                let mut dsx = 0.0;
                for (z, &wz) in w.iter().enumerate() {
                    if wz > 0.0 {
                        let dz = model.distortion.get(s, z);
                        dsx += wz * dz;
                        noisy[s][x][z] = Some((wz / q[z]).ln() + lam * dz - lam * d);
                    }
                }
                inner[s][x] = Some(dsx);
                pair[s][x] = Some(div + lam * dsx - lam * d);
            }
        }
    }
    Ok(TiltedInfoTable {
        surrogate,
        noisy,
        pair,
        inner,
        joint: model.joint_matrix(),
        source_distortion: model.distortion.values().to_vec(),
        kernel,
        lambda_star: lam,
        distortion: d,
        density_form_residual: residual,
    })
}

fn mean_var(law: &[(f64, f64)]) -> (f64, f64) {
    let mean: f64 = law.iter().map(|(v, p)| p * v).sum();
    let var: f64 = law.iter().map(|(v, p)| p * (v - mean).powi(2)).sum();
    (mean, var)
}

/// Exact variances over the finite alphabets.
pub fn dispersion_report(table: &TiltedInfoTable) -> DispersionReport {
    let n_s = table.joint.len();
    let n_x = table.joint.first().map(|r| r.len()).unwrap_or(0);
    let px: Vec<f64> = (0..n_x).map(|x| (0..n_s).map(|s| table.joint[s][x]).sum()).collect();
    let lam = table.lambda_star;

    let surrogate_law: Vec<(f64, f64)> = (0..n_x).filter_map(|x| table.surrogate[x].map(|j| (j, px[x]))).collect();
    let (rate, v_surrogate) = mean_var(&surrogate_law);
    let (_, v_noisy) = mean_var(&table.noisy_law());
    let pair_law: Vec<(f64, f64)> = (0..n_s)
        .flat_map(|s| (0..n_x).map(move |x| (s, x)))
        .filter_map(|(s, x)| table.pair[s][x].map(|j| (j, table.joint[s][x])))
        .collect();
    let (_, v_pair) = mean_var(&pair_law);

    // r = d(S, z) - dbar(x, z) has zero mean given (X, Z*) = (x, z)
    let mut inner_var = 0.0;
    let mut cov = 0.0;
    for x in 0..n_x {
        let (Some(w), Some(jx)) = (&table.kernel[x], table.surrogate[x]) else { continue };
        let cells: Vec<usize> = (0..n_s).filter(|&s| table.joint[s][x] > 0.0).collect();
        for (z, &wz) in w.iter().enumerate() {
            if wz == 0.0 {
                continue;
            }
            let dbar: f64 =
                cells.iter().map(|&s| table.joint[s][x] * table.source_distortion[s][z]).sum::<f64>() / px[x];
            for &s in &cells {
                let r = table.source_distortion[s][z] - dbar;
                let p = table.joint[s][x] * wz;
                inner_var += p * r * r;
                cov += p * (jx - rate) * r;
            }
        }
    }
    DispersionReport {
        rate,
        v_surrogate,
        v_noisy,
        v_pair,
        lambda_star: lam,
        inner_variance_term: lam * lam * inner_var,
        covariance_cross_term: cov,
    }
}

/// Solution, tables and report for `model` at level `d`.
pub fn analyze(
    model: &NoisySourceModel,
    d: f64,
    opts: &SolverOptions,
) -> Result<(TiltedSolution, TiltedInfoTable, DispersionReport)> {
    let sur = surrogate_from_noisy(model, true)?;
    let sol = solve_distortion(&sur, d, opts)?;
    let table = table_for(model, &sur, &sol)?;
    let report = dispersion_report(&table);
    Ok((sol, table, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThirdOrder {
    None,
    /// Adds `ln k / (2k)`.
    HalfLogOverK,
}

/// `rate + sqrt(dispersion / k) Q^-1(eps)` plus the optional third-order
/// term, in the units of `rate`.
pub fn gaussian_approximation(k: u64, eps: f64, rate: f64, dispersion: f64, third_order: ThirdOrder) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("blocklength must be positive".into()));
    }
    if !(dispersion >= 0.0) {
        return Err(Error::Domain(format!("dispersion must be nonnegative, got {dispersion}")));
    }
    let kf = k as f64;
    let extra = match third_order {
        ThirdOrder::None => 0.0,
        ThirdOrder::HalfLogOverK => kf.ln() / (2.0 * kf),
    };
    Ok(rate + (dispersion / kf).sqrt() * gaussian_q_inv(eps)? + extra)
}

/// Gaussian approximation of the noisy problem at blocklength `k`, in nats
/// per letter.
pub fn gaussian_approx_rate(
    k: u64,
    eps: f64,
    solution: &TiltedSolution,
    report: &DispersionReport,
    third_order: ThirdOrder,
) -> Result<f64> {
    gaussian_approximation(k, eps, solution.rate, report.v_noisy, third_order)
}

/// Rate at level `d`, corrected to first order for the solver's residual
/// mismatch between achieved and requested distortion.
fn rate_at(model: &NoisySourceModel, d: f64, opts: &SolverOptions) -> Result<f64> {
    let sur = surrogate_from_noisy(model, true)?;
    let sol = solve_distortion(&sur, d, opts)?;
    Ok(sol.rate + sol.lambda_star * (sol.distortion - d))
}

fn perturbed(model: &NoisySourceModel, s: usize, x: usize, t: f64) -> Result<NoisySourceModel> {
    let mut joint = model.joint_matrix();
    for row in joint.iter_mut() {
        for v in row.iter_mut() {
            *v *= 1.0 - t;
        }
    }
    joint[s][x] += t;
    NoisySourceModel::from_joint(&joint, model.distortion.clone(), model.alphabets.clone())
}

/// Compares the derivative of the rate-distortion function along the
/// segment from `P_SX` toward the point mass at `(s, x)` with the analytic
/// value `jt(s, x) - R(d)`. Returns `(numeric, analytic)` in nats.
///
/// Uses a central difference with step `h`, and one Richardson step when
/// the two disagree by more than `1e-3`.
pub fn directional_derivative_check(
    model: &NoisySourceModel,
    s: usize,
    x: usize,
    d: f64,
    h: f64,
    opts: &SolverOptions,
) -> Result<(f64, f64)> {
    if s >= model.n_source() || x >= model.n_observation() {
        return Err(Error::Domain(format!("symbol pair ({s}, {x}) out of range")));
    }
    let p = model.joint(s, x);
    if !(p > 0.0) {
        return Err(Error::Domain(format!("P_SX({s}, {x}) must be positive")));
    }
    if !(h > 0.0) || h >= p / (1.0 + p) {
        return Err(Error::Domain(format!("step {h} leaves the simplex")));
    }
    let (_, table, report) = analyze(model, d, opts)?;
    let analytic = table.pair[s][x].expect("positive mass cell") - report.rate;
    let central = |h: f64| -> Result<f64> {
        let up = rate_at(&perturbed(model, s, x, h)?, d, opts)?;
        let down = rate_at(&perturbed(model, s, x, -h)?, d, opts)?;
        Ok((up - down) / (2.0 * h))
    };
    let coarse = central(h)?;
    if (coarse - analytic).abs() <= 1e-3 {
        return Ok((coarse, analytic));
    }
    let fine = central(h / 2.0)?;
    Ok(((4.0 * fine - coarse) / 3.0, analytic))
}

/// Sample mean and variance of `n` draws from a finite law, for checks that
/// explicitly call for a sampled estimate.
pub fn sampled_variance<R: rand::Rng>(law: &[(f64, f64)], n: usize, rng: &mut R) -> f64 {
    let cdf: Vec<f64> = law
        .iter()
        .scan(0.0, |acc, (_, p)| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let u: f64 = rng.gen::<f64>() * cdf.last().copied().unwrap_or(1.0);
        let idx = cdf.partition_point(|c| *c < u).min(law.len() - 1);
        let v = law[idx].0;
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    m2 / (n.max(2) - 1) as f64
}

/// `ln(2 / (1 + e^-lambda))`, the tilted information of an unerased bit
/// before the `-lambda d` shift; kept in log domain for large slopes.
#[cfg(test)]
pub(crate) fn unerased_tilt(lambda: f64) -> f64 {
    use crate::numerics::LogReal;
    std::f64::consts::LN_2 - (LogReal::ONE + LogReal::from_ln(-lambda)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_bes, random_model, Channel, DistortionMatrix, Distribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bes_at(delta: f64, d: f64) -> (NoisySourceModel, TiltedSolution, TiltedInfoTable, DispersionReport) {
        let m = builtin_bes(delta).unwrap();
        let (sol, table, report) = analyze(&m, d, &SolverOptions::default()).unwrap();
        (m, sol, table, report)
    }

    fn merged(mut law: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        law.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (v, p) in law {
            match out.last_mut() {
                Some(last) if (last.0 - v).abs() < 1e-9 => last.1 += p,
                _ => out.push((v, p)),
            }
        }
        out
    }

    #[test]
    fn bes_noisy_tilted_info_three_point_law() {
        let (_, sol, table, _) = bes_at(0.1, 0.1);
        let lam = sol.lambda_star;
        let base = -lam * sol.distortion;
        let law = merged(table.noisy_law());
        let expected = [(base, 0.05), (base + unerased_tilt(lam), 0.9), (base + lam, 0.05)];
        assert_eq!(law.len(), 3, "{law:?}");
        for ((v, p), (ev, ep)) in law.iter().zip(expected) {
            assert!((v - ev).abs() < 1e-9 && (p - ep).abs() < 1e-12, "{v} {p}");
        }
        // surrogate value at the erasure, and the pair form there
        assert!((table.surrogate[2].unwrap() - (base + lam / 2.0)).abs() < 1e-9);
        assert!((table.pair[0][2].unwrap() - (base + lam / 2.0)).abs() < 1e-9);
        assert!(table.density_form_residual < 1e-9);
    }

    #[test]
    fn bes_dispersions_match_closed_forms() {
        let (_, sol, _, report) = bes_at(0.1, 0.1);
        let lam = 17f64.ln();
        assert!((sol.lambda_star - lam).abs() < 1e-8);
        let diff = report.v_noisy - report.v_surrogate;
        assert!((diff - 0.025 * lam * lam).abs() < 1e-8, "{diff}");
        assert!((diff - 0.2007).abs() < 1e-4);
        let v = 0.09 * (lam / 2.0).cosh().ln().powi(2);
        assert!((report.v_surrogate - v).abs() < 1e-9);
        assert!((report.v_surrogate - 0.0548).abs() < 1e-4);
    }

    #[test]
    fn bes_surrogate_variance_by_sampling() {
        // three-point law of jX: erasure w.p. 0.1, clear bit otherwise
        let lam = 17f64.ln();
        let law = [(lam / 2.0, 0.1), (unerased_tilt(lam), 0.9)];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let sampled = sampled_variance(&law, 2_000_000, &mut rng);
        let (_, _, _, report) = bes_at(0.1, 0.1);
        assert!((sampled - report.v_surrogate).abs() < 2e-3 * report.v_surrogate.max(0.05), "{sampled}");
    }

    #[test]
    fn noiseless_model_has_equal_dispersions() {
        let m = NoisySourceModel::from_parts(
            Distribution::new(vec![0.2, 0.3, 0.5]).unwrap(),
            Channel::identity(3),
            DistortionMatrix::hamming(3),
        )
        .unwrap();
        let (_, table, report) = analyze(&m, 0.2, &SolverOptions::default()).unwrap();
        for s in 0..3 {
            assert!((table.pair[s][s].unwrap() - table.surrogate[s].unwrap()).abs() < 1e-12);
        }
        assert!((report.v_noisy - report.v_surrogate).abs() < 1e-12);
        assert!(report.inner_variance_term.abs() < 1e-15);
    }

    #[test]
    fn decomposition_and_zero_covariance_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10 {
            let m = random_model(&mut rng, 4).unwrap();
            let sur = surrogate_from_noisy(&m, true).unwrap();
            let d = 0.5 * (sur.d_min() + sur.d_max());
            let (sol, table, report) = analyze(&m, d, &SolverOptions::default()).unwrap();
            assert!((report.v_noisy - report.v_surrogate - report.inner_variance_term).abs() < 1e-8);
            assert!(report.covariance_cross_term.abs() < 1e-10);
            assert!(report.v_noisy >= report.v_surrogate - 1e-10);
            assert!((report.rate - sol.rate).abs() < 1e-8);
            let noisy_mean: f64 = table.noisy_law().iter().map(|(v, p)| v * p).sum();
            assert!((noisy_mean - sol.rate).abs() < 1e-8);
            let pair_mean: f64 = (0..m.n_source())
                .flat_map(|s| (0..m.n_observation()).map(move |x| (s, x)))
                .filter_map(|(s, x)| table.pair[s][x].map(|j| table.joint[s][x] * j))
                .sum();
            assert!((pair_mean - sol.rate).abs() < 1e-8);
            // the pair form differs from the surrogate one by lambda times
            // the centered inner distortion
            for s in 0..m.n_source() {
                for x in 0..m.n_observation() {
                    if let Some(jp) = table.pair[s][x] {
                        let cond: f64 = (0..m.n_source())
                            .filter_map(|t| table.inner[t][x].map(|v| table.joint[t][x] * v))
                            .sum::<f64>()
                            / (0..m.n_source()).map(|t| table.joint[t][x]).sum::<f64>();
                        let expected =
                            table.surrogate[x].unwrap() + sol.lambda_star * (table.inner[s][x].unwrap() - cond);
                        assert!((jp - expected).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_approximation_examples() {
        let (_, sol, _, report) = bes_at(0.1, 0.1);
        let at_half = gaussian_approx_rate(1000, 0.5, &sol, &report, ThirdOrder::None).unwrap();
        assert!((at_half - sol.rate).abs() < 1e-15);
        let bits = gaussian_approx_rate(1000, 0.1, &sol, &report, ThirdOrder::None).unwrap() / std::f64::consts::LN_2;
        assert!((bits - 0.651).abs() < 5e-4, "{bits}");
        let k = 1_000_000u64;
        let big = gaussian_approx_rate(k, 0.1, &sol, &report, ThirdOrder::None).unwrap();
        let expected = (report.v_noisy / k as f64).sqrt() * gaussian_q_inv(0.1).unwrap();
        assert!(((big - sol.rate) / expected - 1.0).abs() < 1e-6);
        let mut last = f64::INFINITY;
        for k in [10, 100, 1000, 10000] {
            let v = gaussian_approx_rate(k, 0.1, &sol, &report, ThirdOrder::None).unwrap();
            assert!(v < last);
            last = v;
        }
        let a = gaussian_approximation(100, 0.05, 1.0, 0.5, ThirdOrder::None).unwrap();
        let b = gaussian_approximation(100, 0.2, 1.0, 0.5, ThirdOrder::None).unwrap();
        assert!(a > b);
        let c = gaussian_approximation(100, 0.2, 1.0, 0.5, ThirdOrder::HalfLogOverK).unwrap();
        assert!((c - b - (100f64).ln() / 200.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_check_on_erased_letter() {
        let m = builtin_bes(0.1).unwrap();
        let (num, ana) = directional_derivative_check(&m, 0, 2, 0.1, 1e-4, &SolverOptions::default()).unwrap();
        assert!((num - ana).abs() < 1e-3, "{num} vs {ana}");
    }

    #[test]
    fn analytic_directional_values_average_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_model(&mut rng, 3).unwrap();
        let sur = surrogate_from_noisy(&m, true).unwrap();
        let d = 0.5 * (sur.d_min() + sur.d_max());
        let (_, table, report) = analyze(&m, d, &SolverOptions::default()).unwrap();
        let mut mean = 0.0;
        let mut var = 0.0;
        for s in 0..m.n_source() {
            for x in 0..m.n_observation() {
                if let Some(j) = table.pair[s][x] {
                    mean += table.joint[s][x] * (j - report.rate);
                    var += table.joint[s][x] * (j - report.rate).powi(2);
                }
            }
        }
        assert!(mean.abs() < 1e-9);
        assert!((var - report.v_pair).abs() < 1e-10);
    }
}
