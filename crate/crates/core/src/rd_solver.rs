//! Rate-distortion function of the surrogate problem by alternating
//! minimization.
//!
//! For a slope `lambda >= 0` the solver iterates
//!
//! ```text
//! W(z|x) = q(z) exp(-lambda dbar(x,z)) / Z(x),     q <- P_X W
//! ```
//!
//! and stops once the duality gap `ln max_z c(z)` falls below the tolerance,
//! where `c(z) = sum_x P_X(x) exp(-lambda dbar(x,z)) / Z(x)`. A fixed
//! distortion level is reached by bisection on `lambda`.

use crate::error::{Error, Result};
use crate::model::{Channel, Distribution, SurrogateModel};
use crate::numerics::log_sum_exp;

/// Marginal entries below this are set to zero.
const MASS_FLOOR: f64 = 1e-14;
/// Required `|c(z) - 1|` on reproduction symbols with mass above
/// [`FIXED_POINT_MASS`].
const FIXED_POINT_TOL: f64 = 1e-9;
const FIXED_POINT_MASS: f64 = 1e-9;
/// Alternating-minimization steps between Newton polishing attempts.
const POLISH_EVERY: usize = 50;

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    /// Duality-gap tolerance in nats.
    pub tol: f64,
    pub max_iterations: usize,
    /// Return the zero-rate solution instead of an error for `d > d_max`.
    pub permissive: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-10, max_iterations: 100_000, permissive: false }
    }
}

/// Optimal test channel of the surrogate problem at one slope.
#[derive(Clone, Debug)]
pub struct TiltedSolution {
    /// `I(X; Z*)` in nats.
    pub rate: f64,
    /// `E[dbar(X, Z*)]`.
    pub distortion: f64,
    /// Slope parameter; `-R'(d)` when produced by [`solve_distortion`].
    pub lambda_star: f64,
    /// `P_Z*|X`, rows indexed like the surrogate's observable alphabet.
    pub kernel: Channel,
    /// `P_Z*`, exactly the `P_X`-average of the kernel rows.
    pub marginal: Distribution,
    /// Duality gap at termination, in nats.
    pub gap: f64,
    pub iterations: usize,
}

fn exponent(lambda: f64, dbar: f64) -> f64 {
    if dbar.is_infinite() {
        f64::NEG_INFINITY
    } else {
        -lambda * dbar
    }
}

fn exponents(sur: &SurrogateModel, lambda: f64) -> Vec<Vec<f64>> {
    sur.surrogate_distortion.iter().map(|row| row.iter().map(|&v| exponent(lambda, v)).collect()).collect()
}

/// Tilts `ln_q` by the exponents and returns the kernel rows and `ln Z(x)`.
fn tilt(ln_q: &[f64], a: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rows = Vec::with_capacity(a.len());
    let mut ln_z = Vec::with_capacity(a.len());
    for (x, ax) in a.iter().enumerate() {
        let lz = log_sum_exp(ax.iter().zip(ln_q).map(|(a, q)| a + q));
        if lz == f64::NEG_INFINITY {
            return Err(Error::Infeasible(format!(
                "observation row {x} has no reproduction of finite distortion in the support of the marginal"
            )));
        }
        rows.push(ax.iter().zip(ln_q).map(|(a, q)| (a + q - lz).exp()).collect());
        ln_z.push(lz);
    }
    Ok((rows, ln_z))
}

fn output_marginal(px: &[f64], rows: &[Vec<f64>]) -> Vec<f64> {
    let nz = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut q = vec![0.0; nz];
    for (p, row) in px.iter().zip(rows) {
        for (qz, w) in q.iter_mut().zip(row) {
            *qz += p * w;
        }
    }
    q
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Assembles a solution from kernel rows; the marginal is recomputed from
/// the rows so that it is their exact average.
fn finish(
    sur: &SurrogateModel,
    lambda: f64,
    mut rows: Vec<Vec<f64>>,
    gap: f64,
    iterations: usize,
) -> Result<TiltedSolution> {
    for row in rows.iter_mut() {
        normalize(row);
    }
    let px = sur.observable.probs();
    let q = output_marginal(px, &rows);
    let mut rate = 0.0;
    let mut distortion = 0.0;
    for (x, row) in rows.iter().enumerate() {
        for (z, &w) in row.iter().enumerate() {
            if w > 0.0 {
                rate += px[x] * w * (w / q[z]).ln();
                distortion += px[x] * w * sur.dbar(x, z);
            }
        }
    }
    Ok(TiltedSolution {
        rate: rate.max(0.0),
        distortion,
        lambda_star: lambda,
        kernel: Channel::new(rows)?,
        marginal: Distribution::from_weights(&q)?,
        gap,
        iterations,
    })
}

/// `G(q) = -sum_x P_X(x) ln Z_q(x)`, whose minimum over the simplex is the
/// optimal value of `I(X;Z) + lambda E[dbar(X,Z)]`.
fn dual_objective(q: &[f64], px: &[f64], a: &[Vec<f64>]) -> f64 {
    px.iter().zip(a).map(|(p, ax)| -p * log_sum_exp(ax.iter().zip(q).map(|(a, q)| a + q.ln()))).sum()
}

/// Gradient `-c` and Hessian of `G` at `q`.
fn dual_derivatives(q: &[f64], px: &[f64], a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nz = q.len();
    let mut c = vec![0.0; nz];
    let mut h = vec![vec![0.0; nz]; nz];
    for (p, ax) in px.iter().zip(a) {
        let lz = log_sum_exp(ax.iter().zip(q).map(|(a, q)| a + q.ln()));
        let r: Vec<f64> = ax.iter().map(|a| (a - lz).exp()).collect();
        for i in 0..nz {
            c[i] += p * r[i];
            for j in 0..nz {
                h[i][j] += p * r[i] * r[j];
            }
        }
    }
    (c, h)
}

/// Solves `m y = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut y = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * y[k]).sum();
        y[row] = (b[row] - s) / m[row][row];
    }
    Some(y)
}

/// Active-set Newton iterations on `G` over the simplex. The caller keeps
/// the result only if it lowers `G`; certification stays with the gap.
fn newton_polish(q0: &[f64], px: &[f64], a: &[Vec<f64>]) -> Vec<f64> {
    let nz = q0.len();
    let mut q = q0.to_vec();
    for _ in 0..100 {
        let (c, h) = dual_derivatives(&q, px, a);
        let mut active: Vec<usize> = (0..nz).filter(|&z| q[z] > 0.0).collect();
        let outside = (0..nz).filter(|&z| q[z] == 0.0 && c[z] > 1.0 + 1e-13).max_by(|&i, &j| c[i].total_cmp(&c[j]));
        let inside_err = active.iter().map(|&z| (c[z] - 1.0).abs()).fold(0.0, f64::max);
        match outside {
            Some(z) => active.push(z),
            None if inside_err < 1e-14 => break,
            None => {}
        }
        let n = active.len();
        let trace: f64 = active.iter().map(|&z| h[z][z]).sum();
        let mut m = vec![vec![0.0; n + 1]; n + 1];
        let mut rhs = vec![0.0; n + 1];
        for (i, &zi) in active.iter().enumerate() {
            for (j, &zj) in active.iter().enumerate() {
                m[i][j] = h[zi][zj];
            }
            m[i][i] += 1e-13 * trace;
            m[i][n] = 1.0;
            m[n][i] = 1.0;
            rhs[i] = c[zi];
        }
        let Some(sol) = solve_dense(m, rhs) else { break };
        let step = &sol[..n];
        let slope: f64 = active.iter().zip(step).map(|(&z, s)| -c[z] * s).sum();
        if !(slope < 0.0) {
            break;
        }
        let mut t_max = f64::INFINITY;
        let mut blocking = None;
        for (&z, &s) in active.iter().zip(step) {
            if s < 0.0 && q[z] / -s < t_max {
                t_max = q[z] / -s;
                blocking = Some(z);
            }
        }
        let g0 = dual_objective(&q, px, a);
        let mut t = t_max.min(1.0);
        let mut next;
        loop {
            next = q.clone();
            for (&z, &s) in active.iter().zip(step) {
                next[z] = (q[z] + t * s).max(0.0);
            }
            if t == t_max {
                if let Some(z) = blocking {
                    next[z] = 0.0;
                }
            }
            normalize(&mut next);
            if dual_objective(&next, px, a) <= g0 + 1e-4 * t * slope || t < 1e-12 {
                break;
            }
            t *= 0.5;
        }
        if t < 1e-12 {
            break;
        }
        q = next;
    }
    q
}

/// Minimizes `I(X;Z) + lambda E[dbar(X,Z)]`, optionally warm-started from a
/// previous marginal.
pub fn solve_slope_from(
    sur: &SurrogateModel,
    lambda: f64,
    start: Option<&Distribution>,
    opts: &SolverOptions,
) -> Result<TiltedSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("slope must be finite and nonnegative, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let nz = sur.n_z();
    let px = sur.observable.probs();
    let a = exponents(sur, lambda);
    let mut q: Vec<f64> = match start {
        Some(s) if s.len() == nz => {
            let u = 1.0 / nz as f64;
            s.probs().iter().map(|p| 0.999 * p + 0.001 * u).collect()
        }
        _ => vec![1.0 / nz as f64; nz],
    };
    let mut gap = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let ln_q: Vec<f64> = q.iter().map(|p| p.ln()).collect();
        let (_, ln_z) = tilt(&ln_q, &a)?;
        let c: Vec<f64> = (0..nz).map(|z| (0..px.len()).map(|x| px[x] * (a[x][z] - ln_z[x]).exp()).sum()).collect();
        gap = c.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln().max(0.0);
        residual =
            q.iter().zip(&c).filter(|(q, _)| **q > FIXED_POINT_MASS).map(|(_, c)| (c - 1.0).abs()).fold(0.0, f64::max);
        if gap < opts.tol && residual < FIXED_POINT_TOL {
            let (rows, _) = tilt(&ln_q, &a)?;
            return finish(sur, lambda, rows, gap, it);
        }
        if it % POLISH_EVERY == 0 {
            let polished = newton_polish(&q, px, &a);
            if dual_objective(&polished, px, &a) <= dual_objective(&q, px, &a) {
                q = polished;
                continue;
            }
        }
        for z in 0..nz {
            q[z] = if q[z] == 0.0 {
                // a clamped symbol that the dual says is needed comes back
                if c[z].ln() > opts.tol {
                    1e-10
                } else {
                    0.0
                }
            } else {
                q[z] * c[z]
            };
            if q[z] < MASS_FLOOR {
                q[z] = 0.0;
            }
        }
        normalize(&mut q);
    }
    Err(Error::NonConvergence { iterations: opts.max_iterations, residual: gap.max(residual) })
}

/// Minimizes `I(X;Z) + lambda E[dbar(X,Z)]` from a uniform start.
pub fn solve_slope(sur: &SurrogateModel, lambda: f64, opts: &SolverOptions) -> Result<TiltedSolution> {
    solve_slope_from(sur, lambda, None, opts)
}

/// Rate-zero solution that reproduces every observation by the single
/// symbol minimizing `E[dbar(X, z)]`.
fn zero_rate(sur: &SurrogateModel) -> Result<TiltedSolution> {
    let means = sur.mean_distortion_per_z();
    let best = (0..means.len())
        .min_by(|&a, &b| means[a].total_cmp(&means[b]))
        .ok_or_else(|| Error::Validation(vec!["empty reproduction alphabet".into()]))?;
    let rows = vec![Distribution::point_mass(sur.n_z(), best).probs().to_vec(); sur.n_x()];
    finish(sur, 0.0, rows, 0.0, 0)
}

/// Mixes two solutions on the same slope so that the distortion equals `d`.
/// Both endpoints minimize the same convex objective, hence so does the mix.
fn mix_to_level(sur: &SurrogateModel, lo: &TiltedSolution, hi: &TiltedSolution, d: f64) -> Result<TiltedSolution> {
    let theta = ((d - hi.distortion) / (lo.distortion - hi.distortion)).clamp(0.0, 1.0);
    let rows = lo
        .kernel
        .rows()
        .iter()
        .zip(hi.kernel.rows())
        .map(|(a, b)| a.iter().zip(b).map(|(a, b)| theta * a + (1.0 - theta) * b).collect())
        .collect();
    finish(sur, 0.5 * (lo.lambda_star + hi.lambda_star), rows, lo.gap.max(hi.gap), lo.iterations + hi.iterations)
}

/// Surrogate rate-distortion function at level `d`, with its slope.
///
/// Requires `d_min < d <= d_max`; `d = d_max` (to within `1e-12`) returns
/// the zero-rate solution with slope 0, as does `d > d_max` when
/// `opts.permissive` is set.
pub fn solve_distortion(sur: &SurrogateModel, d: f64, opts: &SolverOptions) -> Result<TiltedSolution> {
    let (d_min, d_max) = (sur.d_min(), sur.d_max());
    if !d.is_finite() || d <= d_min || (d > d_max + 1e-12 && !opts.permissive) {
        return Err(Error::Range { d, d_min, d_max });
    }
    if d >= d_max - 1e-12 {
        return zero_rate(sur);
    }
    let level_tol = 1e-13 * d.max(1.0);

    let mut lo = 0.0;
    let mut lo_sol: Option<TiltedSolution> = None;
    let mut hi = 1.0;
    let mut hi_sol = solve_slope(sur, hi, opts)?;
    while hi_sol.distortion >= d {
        if hi > 1e12 {
            return Err(Error::Range { d, d_min, d_max });
        }
        lo = hi;
        hi *= 2.0;
        let next = solve_slope_from(sur, hi, Some(&hi_sol.marginal), opts)?;
        lo_sol = Some(std::mem::replace(&mut hi_sol, next));
    }
    if (hi_sol.distortion - d).abs() <= level_tol {
        return Ok(hi_sol);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let sol = solve_slope_from(sur, mid, Some(&hi_sol.marginal), opts)?;
        if (sol.distortion - d).abs() <= level_tol {
            return Ok(sol);
        }
        if sol.distortion >= d {
            lo = mid;
            lo_sol = Some(sol);
        } else {
            hi = mid;
            hi_sol = sol;
        }
    }
    // R has a linear piece at this slope; interpolate between its ends
    match lo_sol {
        Some(lo_sol) if lo_sol.distortion > d => mix_to_level(sur, &lo_sol, &hi_sol, d),
        _ => Ok(hi_sol),
    }
}

/// `J(x, lambda) = -ln E[exp(-lambda dbar(x, Zbar))]` for `Zbar ~ reference`.
///
/// Returns `+inf` when every reproduction charged by the reference has
/// infinite distortion at `x`.
pub fn generalized_tilted_info(sur: &SurrogateModel, reference: &Distribution, x: usize, lambda: f64) -> Result<f64> {
    if x >= sur.n_x() {
        return Err(Error::Domain(format!("observation row {x} out of range")));
    }
    if reference.len() != sur.n_z() {
        return Err(Error::Domain("reference has the wrong alphabet size".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("slope must be nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let lse = log_sum_exp(
        (0..sur.n_z())
            .filter(|&z| reference.get(z) > 0.0)
            .map(|z| reference.get(z).ln() + exponent(lambda, sur.dbar(x, z))),
    );
    Ok(-lse)
}

/// Tilting against a fixed reference: returns `(E[dbar], D(W||ref|P_X))`.
fn reference_tilt(sur: &SurrogateModel, ln_r: &[f64], lambda: f64) -> Result<(f64, f64)> {
    let (rows, ln_z) = tilt(ln_r, &exponents(sur, lambda))?;
    let px = sur.observable.probs();
    let mut dist = 0.0;
    let mut div = 0.0;
    for (x, row) in rows.iter().enumerate() {
        let mut ed = 0.0;
        for (z, &w) in row.iter().enumerate() {
            if w > 0.0 {
                ed += w * sur.dbar(x, z);
            }
        }
        dist += px[x] * ed;
        div += px[x] * (-lambda * ed - ln_z[x]);
    }
    Ok((dist, div.max(0.0)))
}

/// `min D(P_Z|X || reference | P_X)` subject to `E[dbar(X,Z)] <= d`.
///
/// Reproductions outside the support of the reference are excluded.
pub fn generalized_objective(sur: &SurrogateModel, reference: &Distribution, d: f64) -> Result<f64> {
    if reference.len() != sur.n_z() {
        return Err(Error::Domain("reference has the wrong alphabet size".into()));
    }
    let ln_r: Vec<f64> = reference.probs().iter().map(|p| p.ln()).collect();
    let px = sur.observable.probs();
    let supp = reference.support();
    // smallest reachable distortion and the reference mass of its minimizers
    let mut floor = 0.0;
    let mut floor_value = 0.0;
    for x in 0..sur.n_x() {
        let m = supp.iter().map(|&z| sur.dbar(x, z)).fold(f64::INFINITY, f64::min);
        if m.is_infinite() {
            return Err(Error::Infeasible(format!(
                "observation row {x} has no finite-distortion reproduction in the reference support"
            )));
        }
        let mass: f64 = supp.iter().filter(|&&z| sur.dbar(x, z) == m).map(|&z| reference.get(z)).sum();
        floor += px[x] * m;
        floor_value -= px[x] * mass.ln();
    }
    if d < floor - 1e-12 {
        return Err(Error::Infeasible(format!(
            "level {d} is below the smallest distortion {floor} reachable under the reference"
        )));
    }
    if d <= floor + 1e-12 {
        return Ok(floor_value);
    }
    let (d0, v0) = reference_tilt(sur, &ln_r, 0.0)?;
    if d0 <= d {
        return Ok(v0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut hi_val = reference_tilt(sur, &ln_r, hi)?;
    while hi_val.0 > d {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Ok(floor_value);
        }
        hi_val = reference_tilt(sur, &ln_r, hi)?;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = reference_tilt(sur, &ln_r, mid)?;
        if v.0 > d {
            lo = mid;
        } else {
            hi = mid;
            hi_val = v;
        }
        if (hi_val.0 - d).abs() <= 1e-14 {
            break;
        }
    }
    // first-order correction for the residual gap to the level
    Ok((hi_val.1 - hi * (d - hi_val.0)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_bes, surrogate_from_noisy};
    use crate::numerics::binary_entropy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bes(delta: f64) -> SurrogateModel {
        surrogate_from_noisy(&builtin_bes(delta).unwrap(), true).unwrap()
    }

    fn bsc() -> SurrogateModel {
        SurrogateModel::direct(Distribution::uniform(2), vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn random_surrogate(rng: &mut ChaCha8Rng) -> SurrogateModel {
        let nx = rng.gen_range(2..=4);
        let nz = rng.gen_range(2..=4);
        let w: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.1..1.0)).collect();
        let dist = (0..nx).map(|_| (0..nz).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        SurrogateModel::direct(Distribution::from_weights(&w).unwrap(), dist).unwrap()
    }

    fn mid_level(sur: &SurrogateModel) -> f64 {
        0.5 * (sur.d_min() + sur.d_max())
    }

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn zero_slope_gives_zero_rate() {
        let sol = solve_slope(&bes(0.1), 0.0, &opts()).unwrap();
        assert!(sol.rate.abs() < 1e-12);
        for row in sol.kernel.rows() {
            for (a, b) in row.iter().zip(sol.marginal.probs()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bes_slope_solution_matches_closed_form() {
        // R = 0.9 (ln 2 - h(0.05/0.9))
        let closed = 0.9 * (std::f64::consts::LN_2 - binary_entropy(0.05 / 0.9).unwrap());
        let sol = solve_slope(&bes(0.1), 17f64.ln(), &opts()).unwrap();
        assert!((sol.distortion - 0.1).abs() < 1e-10, "{}", sol.distortion);
        assert!((sol.rate - closed).abs() < 1e-10);
        assert!((sol.rate / std::f64::consts::LN_2 - 0.6214).abs() < 1e-4);
    }

    #[test]
    fn bsc_matches_textbook_formula() {
        for d in [0.05f64, 0.11, 0.3] {
            let sol = solve_slope(&bsc(), ((1.0 - d) / d).ln(), &opts()).unwrap();
            let expected = std::f64::consts::LN_2 - binary_entropy(d).unwrap();
            assert!((sol.rate - expected).abs() < 1e-10);
            assert!((sol.distortion - d).abs() < 1e-10);
        }
    }

    #[test]
    fn distortion_level_recovers_slope() {
        let sol = solve_distortion(&bes(0.1), 0.1, &opts()).unwrap();
        assert!((sol.lambda_star - 17f64.ln()).abs() < 1e-8, "{}", sol.lambda_star);
        assert!((sol.distortion - 0.1).abs() < 1e-12);
        assert!((sol.rate / std::f64::consts::LN_2 - 0.62141).abs() < 1e-5);
    }

    #[test]
    fn level_at_d_max_is_free() {
        let sur = bes(0.1);
        let sol = solve_distortion(&sur, sur.d_max(), &opts()).unwrap();
        assert_eq!(sol.rate, 0.0);
        assert_eq!(sol.lambda_star, 0.0);
        assert!(matches!(solve_distortion(&sur, 0.6, &opts()), Err(Error::Range { .. })));
        let permissive = SolverOptions { permissive: true, ..opts() };
        assert_eq!(solve_distortion(&sur, 0.6, &permissive).unwrap().rate, 0.0);
        assert!(matches!(solve_distortion(&sur, 0.05, &opts()), Err(Error::Range { .. })));
    }

    #[test]
    fn invariants_of_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let sur = random_surrogate(&mut rng);
            let sol = solve_distortion(&sur, mid_level(&sur), &opts()).unwrap();
            let px = sur.observable.probs();
            let mut info = 0.0;
            for z in 0..sur.n_z() {
                let avg: f64 = (0..sur.n_x()).map(|x| px[x] * sol.kernel.get(x, z)).sum();
                assert!((avg - sol.marginal.get(z)).abs() < 1e-10);
            }
            for x in 0..sur.n_x() {
                for z in 0..sur.n_z() {
                    let w = sol.kernel.get(x, z);
                    if w > 0.0 {
                        info += px[x] * w * (w / sol.marginal.get(z)).ln();
                    }
                }
            }
            assert!((info - sol.rate).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_point_residual_in_total_variation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let sur = random_surrogate(&mut rng);
            let lambda = rng.gen_range(0.5..8.0);
            let sol = solve_slope(&sur, lambda, &opts()).unwrap();
            for x in 0..sur.n_x() {
                let weights: Vec<f64> =
                    (0..sur.n_z()).map(|z| sol.marginal.get(z) * (-lambda * sur.dbar(x, z)).exp()).collect();
                let total: f64 = weights.iter().sum();
                let tv: f64 = weights.iter().enumerate().map(|(z, w)| (w / total - sol.kernel.get(x, z)).abs()).sum();
                assert!(tv < 1e-8, "tv {tv}");
            }
        }
    }

    #[test]
    fn lagrangian_beats_random_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sur = random_surrogate(&mut rng);
        let lambda = 2.5;
        let sol = solve_slope(&sur, lambda, &opts()).unwrap();
        let best = sol.rate + lambda * sol.distortion;
        let px = sur.observable.probs();
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> = (0..sur.n_x())
                .map(|_| {
                    let w: Vec<f64> = (0..sur.n_z()).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / s).collect()
                })
                .collect();
            let q = output_marginal(px, &rows);
            let mut value = 0.0;
            for x in 0..sur.n_x() {
                for z in 0..sur.n_z() {
                    let w = rows[x][z];
                    if w > 0.0 {
                        value += px[x] * w * ((w / q[z]).ln() + lambda * sur.dbar(x, z));
                    }
                }
            }
            assert!(best <= value + 1e-10);
        }
    }

    #[test]
    fn tilted_moment_is_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let sur = random_surrogate(&mut rng);
            let sol = solve_distortion(&sur, mid_level(&sur), &opts()).unwrap();
            let lam = sol.lambda_star;
            let px = sur.observable.probs();
            // jX(x) = -ln Z(x) - lam d, so the moment is sum_x P(x) e^{-lam dbar}/Z(x)
            let ln_z: Vec<f64> = (0..sur.n_x())
                .map(|x| log_sum_exp((0..sur.n_z()).map(|z| sol.marginal.get(z).ln() - lam * sur.dbar(x, z))))
                .collect();
            for z in 0..sur.n_z() {
                let m: f64 = (0..sur.n_x()).map(|x| px[x] * (-lam * sur.dbar(x, z) - ln_z[x]).exp()).sum();
                assert!(m <= 1.0 + 1e-8);
                if sol.marginal.get(z) > 1e-6 {
                    assert!((m - 1.0).abs() < 1e-6, "{m}");
                }
            }
        }
    }

    #[test]
    fn rate_curve_is_convex_with_matching_slope() {
        let sur = bes(0.1);
        let grid: Vec<f64> = (0..=20).map(|i| 0.07 + 0.02 * i as f64).collect();
        let sols: Vec<TiltedSolution> = grid.iter().map(|&d| solve_distortion(&sur, d, &opts()).unwrap()).collect();
        for w in sols.windows(3) {
            assert!(w[1].rate <= w[0].rate);
            assert!(w[1].rate <= 0.5 * (w[0].rate + w[2].rate) + 1e-12);
            let slope = (w[2].rate - w[0].rate) / 0.04;
            assert!((slope + w[1].lambda_star).abs() <= 0.02 * w[1].lambda_star);
        }
    }

    #[test]
    fn reference_tilted_info_examples() {
        let sur = bes(0.1);
        let u = Distribution::uniform(2);
        let q = sur.row_of(2).unwrap();
        assert_eq!(generalized_tilted_info(&sur, &u, 0, 0.0).unwrap(), 0.0);
        for lam in [0.3, 1.0, 5.0] {
            assert!((generalized_tilted_info(&sur, &u, q, lam).unwrap() - lam / 2.0).abs() < 1e-14);
        }
        let j = generalized_tilted_info(&sur, &u, 0, 17f64.ln()).unwrap();
        assert!((j - (17.0f64 / 9.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn reference_objective_examples() {
        let sur = bes(0.1);
        let sol = solve_distortion(&sur, 0.1, &opts()).unwrap();
        let at_opt = generalized_objective(&sur, &sol.marginal, 0.1).unwrap();
        assert!((at_opt - sol.rate).abs() < 1e-9);
        // the second reproduction alone costs E[dbar(X,1)] = 1/2
        let point = Distribution::point_mass(2, 1);
        assert_eq!(generalized_objective(&sur, &point, 0.5).unwrap(), 0.0);
        assert!(matches!(generalized_objective(&sur, &point, 0.3), Err(Error::Infeasible(_))));
    }

    #[test]
    fn reference_objective_against_kernel_grid() {
        // BES rows: x=0,1 carry (0,1)/(1,0), x=? carries (1/2,1/2); by
        // symmetry of dbar only the kernel of each row matters
        let sur = bes(0.1);
        let r = Distribution::new(vec![0.6, 0.4]).unwrap();
        let value = generalized_objective(&sur, &r, 0.1).unwrap();
        let px = sur.observable.probs();
        let kl = |w: f64, r0: f64| {
            let t = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
            t(w, r0) + t(1.0 - w, 1.0 - r0)
        };
        let n = 400;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            // W(1|x=0) = a, W(0|x=1) = b, W(0|x=?) free
            let a = i as f64 / n as f64 * 0.25;
            for j in 0..=n {
                let b = j as f64 / n as f64 * 0.25;
                let dist = px[0] * a + px[1] * b + px[2] * 0.5;
                if dist > 0.1 {
                    continue;
                }
                let v = px[0] * kl(1.0 - a, 0.6) + px[1] * kl(b, 0.6) + 0.0;
                best = best.min(v);
            }
        }
        assert!(value <= best + 1e-9);
        assert!(value >= best - 1e-3, "{value} vs grid {best}");
        assert!(value >= sol_rate(&sur) - 1e-12);
    }

    fn sol_rate(sur: &SurrogateModel) -> f64 {
        solve_distortion(sur, 0.1, &SolverOptions::default()).unwrap().rate
    }
}
