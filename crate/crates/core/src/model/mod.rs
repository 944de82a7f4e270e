//! Finite-alphabet model objects.
//!
//! A [`NoisySourceModel`] bundles the source law `P_S`, the observation
//! channel `P_X|S` and a per-letter distortion `d(s, z)`. The encoder only
//! sees `X`, so most analyses run on the induced [`SurrogateModel`], whose
//! distortion `dbar(x, z) = E[d(S, z) | X = x]` averages out the residual
//! source uncertainty.

mod file;

pub use file::{load_model, parse_model};

use crate::error::{Error, Result};
use crate::numerics::{ExtRational, Rational};

const PROB_TOL: f64 = 1e-12;

/// A probability vector over an indexed finite alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let mut problems = Vec::new();
        check_prob_row(&probs, "distribution", &mut problems);
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Distribution { probs })
    }

    /// Normalizes a nonnegative weight vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite, nonnegative, not all zero".into()));
        }
        Ok(Distribution { probs: weights.iter().map(|w| w / total).collect() })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution { probs: vec![1.0 / n as f64; n] }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Distribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }
}

fn check_prob_row(row: &[f64], what: &str, problems: &mut Vec<String>) {
    if row.is_empty() {
        problems.push(format!("{what} is empty"));
        return;
    }
    if let Some(p) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        problems.push(format!("{what} has invalid entry {p}"));
        return;
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        problems.push(format!("{what} sums to {sum}"));
    }
}

/// A stochastic matrix; row `i` is the output law given input `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    rows: Vec<Vec<f64>>,
    n_out: usize,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_out = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut problems = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_out {
                problems.push(format!("channel row {i} has {} entries, expected {n_out}", row.len()));
                continue;
            }
            check_prob_row(row, &format!("channel row {i}"), &mut problems);
        }
        if rows.is_empty() {
            problems.push("channel has no rows".into());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Channel { rows, n_out })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Channel { rows, n_out: n }
    }

    pub fn n_inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_out
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Per-letter distortion `d(s, z)` with exact rational (or infinite) entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionMatrix {
    exact: Vec<Vec<ExtRational>>,
    values: Vec<Vec<f64>>,
}

impl DistortionMatrix {
    pub fn new(exact: Vec<Vec<ExtRational>>) -> Result<Self> {
        let n_cols = exact.first().map(|r| r.len()).unwrap_or(0);
        let mut problems = Vec::new();
        if exact.is_empty() || n_cols == 0 {
            problems.push("distortion matrix is empty".to_string());
        }
        for (i, row) in exact.iter().enumerate() {
            if row.len() != n_cols {
                problems.push(format!("distortion row {i} has {} entries, expected {n_cols}", row.len()));
            }
            if row.iter().any(|v| v.finite().is_some_and(|r| r.is_negative())) {
                problems.push(format!("distortion row {i} has a negative entry"));
            }
            if !row.iter().any(|v| v.is_finite()) {
                problems.push(format!("distortion row {i} has no finite entry"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let values = exact.iter().map(|r| r.iter().map(|v| v.to_f64()).collect()).collect();
        Ok(DistortionMatrix { exact, values })
    }

    /// Builds from floats, mapping each entry to a nearby short rational.
    pub fn from_f64(rows: Vec<Vec<f64>>) -> Result<Self> {
        let exact = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| {
                        if v == f64::INFINITY {
                            Ok(ExtRational::Infinite)
                        } else {
                            Rational::from_f64(v).map(ExtRational::Finite)
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(exact)
    }

    /// `d(s, z) = 1{s != z}` on an `n`-letter alphabet.
    pub fn hamming(n: usize) -> Self {
        let exact = (0..n)
            .map(|i| (0..n).map(|j| ExtRational::Finite(Rational::from_integer((i != j) as i128))).collect())
            .collect();
        Self::new(exact).expect("hamming matrix is valid")
    }

    pub fn n_rows(&self) -> usize {
        self.exact.len()
    }

    pub fn n_cols(&self) -> usize {
        self.exact.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn get(&self, s: usize, z: usize) -> f64 {
        self.values[s][z]
    }

    pub fn exact(&self, s: usize, z: usize) -> ExtRational {
        self.exact[s][z]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Symbol names for the source, observation and reproduction alphabets.
#[derive(Clone, Debug, PartialEq)]
pub struct Alphabets {
    pub source: Vec<String>,
    pub observation: Vec<String>,
    pub reproduction: Vec<String>,
}

impl Alphabets {
    /// Names `0, 1, ...` for each alphabet.
    pub fn numbered(n_s: usize, n_x: usize, n_z: usize) -> Self {
        let names = |n: usize| (0..n).map(|i| i.to_string()).collect();
        Alphabets { source: names(n_s), observation: names(n_x), reproduction: names(n_z) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisySourceModel {
    pub source: Distribution,
    pub observation: Channel,
    pub distortion: DistortionMatrix,
    pub alphabets: Alphabets,
}

impl NoisySourceModel {
    pub fn new(
        source: Distribution,
        observation: Channel,
        distortion: DistortionMatrix,
        alphabets: Alphabets,
    ) -> Result<Self> {
        let n_s = source.len();
        let mut problems = Vec::new();
        if observation.n_inputs() != n_s {
            problems.push(format!(
                "observation channel has {} rows, source alphabet has {n_s} symbols",
                observation.n_inputs()
            ));
        }
        if distortion.n_rows() != n_s {
            problems
                .push(format!("distortion matrix has {} rows, source alphabet has {n_s} symbols", distortion.n_rows()));
        }
        if alphabets.source.len() != n_s {
            problems.push("source alphabet size mismatch".into());
        }
        if alphabets.observation.len() != observation.n_outputs() {
            problems.push("observation alphabet size mismatch".into());
        }
        if alphabets.reproduction.len() != distortion.n_cols() {
            problems.push("reproduction alphabet size mismatch".into());
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(NoisySourceModel { source, observation, distortion, alphabets })
    }

    /// Model with numbered alphabets.
    pub fn from_parts(source: Distribution, observation: Channel, distortion: DistortionMatrix) -> Result<Self> {
        let alphabets = Alphabets::numbered(source.len(), observation.n_outputs(), distortion.n_cols());
        Self::new(source, observation, distortion, alphabets)
    }

    /// Rebuilds a model from a joint law `P_SX` (rows indexed by `s`).
    ///
    /// Source symbols of zero mass get a uniform observation row.
    pub fn from_joint(joint: &[Vec<f64>], distortion: DistortionMatrix, alphabets: Alphabets) -> Result<Self> {
        let n_x = joint.first().map(|r| r.len()).unwrap_or(0);
        let ps: Vec<f64> = joint.iter().map(|r| r.iter().sum()).collect();
        let total: f64 = ps.iter().sum();
        let ps: Vec<f64> = ps.iter().map(|p| p / total).collect();
        let rows = joint
            .iter()
            .map(|r| {
                let m: f64 = r.iter().sum();
                if m > 0.0 {
                    r.iter().map(|v| v / m).collect()
                } else {
                    vec![1.0 / n_x as f64; n_x]
                }
            })
            .collect();
        Self::new(Distribution::new(ps)?, Channel::new(rows)?, distortion, alphabets)
    }

    pub fn n_source(&self) -> usize {
        self.source.len()
    }

    pub fn n_observation(&self) -> usize {
        self.observation.n_outputs()
    }

    pub fn n_reproduction(&self) -> usize {
        self.distortion.n_cols()
    }

    /// `P_SX(s, x)`.
    pub fn joint(&self, s: usize, x: usize) -> f64 {
        self.source.get(s) * self.observation.get(s, x)
    }

    pub fn joint_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.n_source()).map(|s| (0..self.n_observation()).map(|x| self.joint(s, x)).collect()).collect()
    }

    /// Unpruned observation marginal `P_X`.
    pub fn observation_marginal(&self) -> Vec<f64> {
        (0..self.n_observation()).map(|x| (0..self.n_source()).map(|s| self.joint(s, x)).sum()).collect()
    }

    /// `P_S|X(. | x)`; errors when `P_X(x) = 0`.
    pub fn posterior(&self, x: usize) -> Result<Vec<f64>> {
        if x >= self.n_observation() {
            return Err(Error::Domain(format!("observation index {x} out of range")));
        }
        let px: f64 = (0..self.n_source()).map(|s| self.joint(s, x)).sum();
        if !(px > 0.0) {
            return Err(Error::Domain(format!("observation '{}' has zero probability", self.alphabets.observation[x])));
        }
        Ok((0..self.n_source()).map(|s| self.joint(s, x) / px).collect())
    }

    /// True when `X = x` pins down `S`.
    pub fn is_noiseless_letter(&self, x: usize) -> Result<bool> {
        Ok(self.posterior(x)?.iter().filter(|p| **p > 0.0).count() == 1)
    }

    pub fn symbol_index(names: &[String], symbol: &str) -> Option<usize> {
        names.iter().position(|n| n == symbol)
    }
}

/// The binary equiprobable source seen through an erasure channel with
/// erasure probability `delta`, under bit-error distortion.
///
/// Alphabets: `S = {0, 1}`, `X = {0, 1, ?}`, `Z = {0, 1}`.
pub fn builtin_bes(delta: f64) -> Result<NoisySourceModel> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("erasure probability must lie in [0,1], got {delta}")));
    }
    let observation = Channel::new(vec![vec![1.0 - delta, 0.0, delta], vec![0.0, 1.0 - delta, delta]])?;
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
    NoisySourceModel::new(
        Distribution::uniform(2),
        observation,
        DistortionMatrix::hamming(2),
        Alphabets {
            source: names(&["0", "1"]),
            observation: names(&["0", "1", "?"]),
            reproduction: names(&["0", "1"]),
        },
    )
}

/// A random model with alphabet sizes drawn from `2..=max_alphabet`.
///
/// Probabilities are bounded away from zero and distortions are multiples
/// of `1/20` in `[0, 1]`, so every letter is observable and every level in
/// `(d_min, d_max)` is reachable. Draws with `d_max - d_min <= 0.02` are
/// rejected.
pub fn random_model<R: rand::Rng>(rng: &mut R, max_alphabet: usize) -> Result<NoisySourceModel> {
    loop {
        let m = random_model_once(rng, max_alphabet)?;
        let sur = surrogate_from_noisy(&m, false)?;
        if sur.d_max() - sur.d_min() > 0.02 {
            return Ok(m);
        }
    }
}

fn random_model_once<R: rand::Rng>(rng: &mut R, max_alphabet: usize) -> Result<NoisySourceModel> {
    let max = max_alphabet.max(2);
    let (n_s, n_x, n_z) = (rng.gen_range(2..=max), rng.gen_range(2..=max), rng.gen_range(2..=max));
    let mut weights = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(0.05..1.0)).collect() };
    let source = Distribution::from_weights(&weights(n_s))?;
    let rows = (0..n_s)
        .map(|_| Distribution::from_weights(&weights(n_x)).map(|d| d.probs().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let distortion = (0..n_s)
        .map(|_| {
            (0..n_z)
                .map(|_| ExtRational::Finite(Rational::new(rng.gen_range(0..=20), 20).expect("nonzero denominator")))
                .collect()
        })
        .collect();
    NoisySourceModel::from_parts(source, Channel::new(rows)?, DistortionMatrix::new(distortion)?)
}

/// The noiseless problem induced on the observation alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateModel {
    /// `P_X` restricted to its support.
    pub observable: Distribution,
    /// `dbar(x, z)`, rows indexed like `observable`.
    pub surrogate_distortion: Vec<Vec<f64>>,
    /// `P_S|X`, rows indexed like `observable`.
    pub conditional_source: Channel,
    /// Original observation index of each retained row.
    pub kept: Vec<usize>,
}

impl SurrogateModel {
    /// A noiseless problem given directly by `P_X` and a distortion on `X x Z`.
    pub fn direct(observable: Distribution, distortion: Vec<Vec<f64>>) -> Result<Self> {
        let n = observable.len();
        if distortion.len() != n || distortion.iter().any(|r| r.len() != distortion[0].len()) {
            return Err(Error::Validation(vec!["distortion shape does not match P_X".into()]));
        }
        if distortion.iter().flatten().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Validation(vec!["distortion entries must be nonnegative".into()]));
        }
        let kept = observable.support();
        if kept.len() != n {
            return Err(Error::Validation(vec!["P_X must have full support".into()]));
        }
        Ok(SurrogateModel {
            observable,
            surrogate_distortion: distortion,
            conditional_source: Channel::identity(n),
            kept,
        })
    }

    pub fn n_x(&self) -> usize {
        self.observable.len()
    }

    pub fn n_z(&self) -> usize {
        self.surrogate_distortion.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn dbar(&self, x: usize, z: usize) -> f64 {
        self.surrogate_distortion[x][z]
    }

    /// Row of the surrogate model for an original observation symbol.
    pub fn row_of(&self, original_x: usize) -> Option<usize> {
        self.kept.iter().position(|&k| k == original_x)
    }

    /// `E[dbar(X, z)]` for each `z`.
    pub fn mean_distortion_per_z(&self) -> Vec<f64> {
        (0..self.n_z())
            .map(|z| (0..self.n_x()).map(|x| weighted(self.observable.get(x), self.dbar(x, z))).sum())
            .collect()
    }

    /// `d_max = min_z E[dbar(X, z)]`.
    pub fn d_max(&self) -> f64 {
        self.mean_distortion_per_z().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `d_min = E[min_z dbar(X, z)]`, the infimum of levels with finite rate.
    pub fn d_min(&self) -> f64 {
        (0..self.n_x())
            .map(|x| {
                let m = self.surrogate_distortion[x].iter().copied().fold(f64::INFINITY, f64::min);
                weighted(self.observable.get(x), m)
            })
            .sum()
    }
}

/// `p * v` with `0 * inf = 0`.
pub(crate) fn weighted(p: f64, v: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * v
    }
}

/// Builds the surrogate problem; zero-probability observations are dropped
/// (with a warning) when `prune` is set, and rejected otherwise.
pub fn surrogate_from_noisy(model: &NoisySourceModel, prune: bool) -> Result<SurrogateModel> {
    let px = model.observation_marginal();
    let mut kept = Vec::new();
    for (x, &p) in px.iter().enumerate() {
        if p > 0.0 {
            kept.push(x);
        } else if prune {
            log::warn!("observation symbol '{}' has zero probability and is pruned", model.alphabets.observation[x]);
        } else {
            return Err(Error::Validation(vec![format!(
                "observation symbol '{}' has zero probability",
                model.alphabets.observation[x]
            )]));
        }
    }
    let total: f64 = kept.iter().map(|&x| px[x]).sum();
    let observable = Distribution::new(kept.iter().map(|&x| px[x] / total).collect())
        .or_else(|_| Distribution::from_weights(&kept.iter().map(|&x| px[x]).collect::<Vec<_>>()))?;

    let mut posterior_rows = Vec::with_capacity(kept.len());
    let mut dbar = Vec::with_capacity(kept.len());
    let mut problems = Vec::new();
    for &x in &kept {
        let post = model.posterior(x)?;
        let row: Vec<f64> = (0..model.n_reproduction())
            .map(|z| (0..model.n_source()).map(|s| weighted(post[s], model.distortion.get(s, z))).sum())
            .collect();
        if !row.iter().any(|v| v.is_finite()) {
            problems.push(format!(
                "observation '{}' has no reproduction with finite expected distortion",
                model.alphabets.observation[x]
            ));
        }
        dbar.push(row);
        posterior_rows.push(post);
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    Ok(SurrogateModel {
        observable,
        surrogate_distortion: dbar,
        conditional_source: Channel::new(posterior_rows)?,
        kept,
    })
}

/// Law of `d(S, z)` given `X = x`, as sorted `(value, prob)` pairs with
/// duplicate values merged.
pub fn conditional_distortion_dist(model: &NoisySourceModel, x: usize, z: usize) -> Result<Vec<(ExtRational, f64)>> {
    if z >= model.n_reproduction() {
        return Err(Error::Domain(format!("reproduction index {z} out of range")));
    }
    let post = model.posterior(x)?;
    let mut law: Vec<(ExtRational, f64)> = Vec::new();
    for (s, &p) in post.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let v = model.distortion.exact(s, z);
        match law.iter_mut().find(|(w, _)| *w == v) {
            Some(entry) => entry.1 += p,
            None => law.push((v, p)),
        }
    }
    law.sort_by_key(|a| a.0);
    Ok(law)
}
