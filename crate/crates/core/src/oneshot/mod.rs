//! General finite-blocklength bounds on `k`-fold products of a noisy source
//! model.
//!
//! The converse takes the expected infimum over reproduction blocks of a
//! tail probability involving a backward kernel. The achievability bounds
//! are the exact random-coding bound, its covering-lemma weakening, and a
//! weakening in terms of a conditional-type kernel.
//!
//! Block quantities are evaluated over joint types wherever the kernels are
//! products. The distortion of a block is the per-letter average, and
//! threshold events are decided on exact rational sums.

mod tail;
pub mod types;

use std::collections::HashMap;

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{conditional_distortion_dist, surrogate_from_noisy, Channel, Distribution, NoisySourceModel};
use crate::numerics::{ExtRational, Rational};
use crate::rd_solver::{solve_distortion, SolverOptions, TiltedSolution};

pub use tail::{convolve, convolve_power, prob_greater, Law, TailDp, GRID_CAP};
use types::{
    block_count, block_from_index, compositions, count_compositions, count_conditional_types, for_each_composition,
    for_each_conditional_type, ln_multinomial, ln_type_prob, pair_type, type_of,
};

/// Blocks are enumerated one by one only up to this many.
pub const BLOCK_CAP: usize = 4096;
/// Above this many observation types the average over blocks is sampled.
pub const X_TYPE_CAP: f64 = 50_000.0;
/// Cap on the total number of (type, conditional type) pairs visited.
pub const WORK_CAP: f64 = 4.0e6;

/// Monte Carlo settings. Every sampled estimate is reproducible from the
/// seed, and searches over `M` reuse one set of samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sampling {
    pub samples: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling { samples: 20_000, seed: 0 }
    }
}

/// A `k`-letter block of a memoryless noisy source with per-letter
/// threshold `d` and target excess-distortion probability `eps`.
#[derive(Clone, Debug)]
pub struct BlockSpec {
    pub base: NoisySourceModel,
    pub k: usize,
    pub d: Rational,
    pub eps: f64,
    pub sampling: Sampling,
}

impl BlockSpec {
    pub fn new(base: NoisySourceModel, k: usize, d: Rational, eps: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if k == 0 {
            problems.push("blocklength must be at least 1".to_string());
        }
        if !(eps > 0.0 && eps < 1.0) {
            problems.push(format!("eps {eps} outside (0, 1)"));
        }
        if d.is_negative() {
            problems.push(format!("threshold {d} is negative"));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(BlockSpec { base, k, d, eps, sampling: Sampling::default() })
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    /// `k d`, the threshold on the distortion sum.
    pub fn kd(&self) -> Rational {
        self.d.mul_int(self.k as i128)
    }

    pub fn n_x(&self) -> usize {
        self.base.n_observation()
    }

    pub fn n_z(&self) -> usize {
        self.base.n_reproduction()
    }

    fn p_x(&self) -> Vec<f64> {
        self.base.observation_marginal()
    }

    /// The optimal per-letter test channel of the surrogate problem at `d`.
    pub fn tilted_solution(&self) -> Result<TiltedSolution> {
        let sur = surrogate_from_noisy(&self.base, true)?;
        let opts = SolverOptions { permissive: true, ..SolverOptions::default() };
        solve_distortion(&sur, self.d.to_f64(), &opts)
    }

    /// Tilted kernel lifted to the full observation alphabet. Letters of
    /// zero probability get the output marginal.
    pub fn tilted_kernel(&self) -> Result<(Channel, TiltedSolution)> {
        let sol = self.tilted_solution()?;
        let sur = surrogate_from_noisy(&self.base, true)?;
        let rows = (0..self.n_x())
            .map(|a| match sur.row_of(a) {
                Some(r) => sol.kernel.row(r).to_vec(),
                None => sol.marginal.probs().to_vec(),
            })
            .collect();
        Ok((Channel::new(rows)?, sol))
    }
}

/// A probability with its Monte Carlo standard error, zero when exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0 }
    }

    pub fn is_exact(&self) -> bool {
        self.std_error == 0.0
    }

    fn from_samples(values: &[(f64, usize)]) -> Self {
        let n: usize = values.iter().map(|(_, c)| c).sum();
        let nf = n as f64;
        let mean = values.iter().map(|(v, c)| v * *c as f64).sum::<f64>() / nf;
        let var = if n > 1 {
            values.iter().map(|(v, c)| *c as f64 * (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        Estimate { value: mean, std_error: (var / nf).sqrt() }
    }
}

/// Per-letter laws of `d(S, z)` given `X = x`, indexed `[x][z]`; empty for
/// letters of zero probability.
fn letter_laws(model: &NoisySourceModel) -> Result<Vec<Vec<Law>>> {
    let px = model.observation_marginal();
    (0..model.n_observation())
        .map(|a| {
            if px[a] <= 0.0 {
                return Ok(vec![Vec::new(); model.n_reproduction()]);
            }
            (0..model.n_reproduction()).map(|b| conditional_distortion_dist(model, a, b)).collect()
        })
        .collect()
}

/// Memoized laws of distortion sums for pair types.
struct LawCache<'a> {
    laws: &'a [Vec<Law>],
    n_z: usize,
    powers: HashMap<(usize, usize, usize), Law>,
}

impl<'a> LawCache<'a> {
    fn new(laws: &'a [Vec<Law>], n_z: usize) -> Self {
        LawCache { laws, n_z, powers: HashMap::new() }
    }

    fn power(&mut self, a: usize, b: usize, c: usize) -> Result<&Law> {
        if !self.powers.contains_key(&(a, b, c)) {
            let law = convolve_power(&self.laws[a][b], c, GRID_CAP)?;
            self.powers.insert((a, b, c), law);
        }
        Ok(&self.powers[&(a, b, c)])
    }

    /// Law of the distortion sum of a block with the given pair counts.
    fn pair_law(&mut self, counts: &[usize]) -> Result<Law> {
        let mut law: Law = vec![(ExtRational::Finite(Rational::zero()), 1.0)];
        for (idx, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let (a, b) = (idx / self.n_z, idx % self.n_z);
            let p = self.power(a, b, c)?.clone();
            law = convolve(&law, &p, GRID_CAP)?;
        }
        Ok(law)
    }
}

fn is_refusal(e: &Error) -> bool {
    matches!(e, Error::Refused(_))
}

fn check_block(block: &BlockSpec, seq: &[usize], alphabet: usize, what: &str) -> Result<()> {
    if seq.len() != block.k {
        return Err(Error::Domain(format!("{what} has length {}, expected {}", seq.len(), block.k)));
    }
    if let Some(&bad) = seq.iter().find(|&&s| s >= alphabet) {
        return Err(Error::Domain(format!("{what} symbol {bad} out of range")));
    }
    Ok(())
}

/// `pi(x, z) = P[d(S^k, z) > d | X^k = x]`, exact unless the grid of sums
/// explodes, in which case it is sampled.
pub fn pi_excess_prob(block: &BlockSpec, x_block: &[usize], z_block: &[usize]) -> Result<Estimate> {
    check_block(block, x_block, block.n_x(), "observation block")?;
    check_block(block, z_block, block.n_z(), "reproduction block")?;
    let px = block.p_x();
    if x_block.iter().any(|&a| px[a] <= 0.0) {
        return Err(Error::Domain("observation block has probability zero".into()));
    }
    let laws = letter_laws(&block.base)?;
    let mut cache = LawCache::new(&laws, block.n_z());
    match cache.pair_law(&pair_type(x_block, z_block, block.n_x(), block.n_z())) {
        Ok(law) => Ok(Estimate::exact(prob_greater(&law, block.kd()))),
        Err(e) if is_refusal(&e) => {
            log::warn!("{e}; sampling pi instead");
            sample_pi(block, &laws, x_block, z_block)
        }
        Err(e) => Err(e),
    }
}

fn sample_pi(block: &BlockSpec, laws: &[Vec<Law>], x: &[usize], z: &[usize]) -> Result<Estimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(block.sampling.seed);
    let pickers: Vec<WeightedIndex<f64>> = x
        .iter()
        .zip(z)
        .map(|(&a, &b)| {
            WeightedIndex::new(laws[a][b].iter().map(|(_, p)| *p))
                .map_err(|e| Error::Domain(format!("bad letter law: {e}")))
        })
        .collect::<Result<_>>()?;
    let kd = ExtRational::Finite(block.kd());
    let n = block.sampling.samples.max(2);
    let mut hits = 0usize;
    for _ in 0..n {
        let mut total = ExtRational::Finite(Rational::zero());
        for ((&a, &b), pick) in x.iter().zip(z).zip(&pickers) {
            total = total + laws[a][b][pick.sample(&mut rng)].0;
        }
        if total > kd {
            hits += 1;
        }
    }
    Ok(Estimate::from_samples(&[(1.0, hits), (0.0, n - hits)]))
}

/// Observation types with their log-probabilities, or sampled types with
/// their multiplicities.
enum XTypes {
    Exact(Vec<(Vec<usize>, f64)>),
    Sampled(Vec<(Vec<usize>, usize)>),
}

fn x_types(block: &BlockSpec) -> Result<XTypes> {
    let px = block.p_x();
    let n_x = block.n_x();
    if count_compositions(block.k, n_x) <= X_TYPE_CAP {
        let mut out = Vec::new();
        for_each_composition(block.k, n_x, &mut |t| {
            let w = ln_type_prob(t, &px);
            if w > f64::NEG_INFINITY {
                out.push((t.to_vec(), w));
            }
        });
        return Ok(XTypes::Exact(out));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(block.sampling.seed);
    let pick = WeightedIndex::new(&px).map_err(|e| Error::Domain(format!("bad observation law: {e}")))?;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..block.sampling.samples.max(2) {
        let blk: Vec<usize> = (0..block.k).map(|_| pick.sample(&mut rng)).collect();
        *counts.entry(type_of(&blk, n_x)).or_insert(0) += 1;
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort();
    Ok(XTypes::Sampled(v))
}

impl XTypes {
    fn types(&self) -> Vec<&[usize]> {
        match self {
            XTypes::Exact(v) => v.iter().map(|(t, _)| t.as_slice()).collect(),
            XTypes::Sampled(v) => v.iter().map(|(t, _)| t.as_slice()).collect(),
        }
    }

    /// Combine per-type values into an estimate of their average.
    fn average(&self, values: &[f64]) -> Estimate {
        match self {
            XTypes::Exact(v) => {
                let total: f64 = v.iter().zip(values).map(|((_, w), val)| w.exp() * val).sum();
                Estimate::exact(total)
            }
            XTypes::Sampled(v) => {
                let pairs: Vec<(f64, usize)> = v.iter().zip(values).map(|((_, c), val)| (*val, *c)).collect();
                Estimate::from_samples(&pairs)
            }
        }
    }
}

fn guard_work(x: &XTypes, n_z: usize, what: &str) -> Result<()> {
    let work: f64 = x.types().iter().map(|t| count_conditional_types(t, n_z)).sum();
    if work > WORK_CAP {
        return Err(Error::Refused(format!(
            "{what} needs {work:.3e} type evaluations (cap {WORK_CAP:.0e}); use a smaller block or the erasure-source bounds"
        )));
    }
    Ok(())
}

/// Codeword distribution for random coding.
#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    /// Codeword letters drawn i.i.d. from a per-letter law.
    Product(Distribution),
    /// A law on all `|Z|^k` blocks, indexed as by [`types::block_from_index`].
    Block(Vec<f64>),
}

/// The law of `pi(x, Zbar)` for each observation (type), ready to evaluate
/// the random-coding bound at any `M`.
#[derive(Clone, Debug)]
pub struct RandomCodingTable {
    /// Per entry: increments `v_i - v_{i-1}` of the sorted distinct
    /// pi-values and `ln P[pi >= v_i]`.
    steps: Vec<Vec<(f64, f64)>>,
    weights: Weights,
}

#[derive(Clone, Debug)]
enum Weights {
    Exact(Vec<f64>),
    Sampled(Vec<usize>),
}

fn integral_steps(mut law: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    law.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (v, p) in law {
        match merged.last_mut() {
            Some(last) if (last.0 - v).abs() <= 1e-15 => last.1 += p,
            _ => merged.push((v, p)),
        }
    }
    let total: f64 = merged.iter().map(|(_, p)| p).sum();
    let mut below = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(merged.len());
    for (v, p) in merged {
        let mass_at_least = (total - below) / total;
        let ln_tail = if below / total < 0.5 { (-below / total).ln_1p() } else { mass_at_least.ln() };
        if v > prev {
            out.push((v - prev, ln_tail));
        }
        below += p;
        prev = v;
    }
    out
}

impl RandomCodingTable {
    pub fn new(block: &BlockSpec, reference: &Reference) -> Result<Self> {
        match reference {
            Reference::Product(p) => Self::product(block, p),
            Reference::Block(w) => Self::blockwise(block, w),
        }
    }

    fn product(block: &BlockSpec, reference: &Distribution) -> Result<Self> {
        let n_z = block.n_z();
        if reference.len() != n_z {
            return Err(Error::Domain(format!("reference has {} letters, expected {n_z}", reference.len())));
        }
        if reference.support().is_empty() {
            return Err(Error::Domain("reference has empty support".into()));
        }
        let x = x_types(block)?;
        guard_work(&x, n_z, "random-coding bound")?;
        let laws = letter_laws(&block.base)?;
        let kd = block.kd();
        let ln_ref: Vec<f64> = reference.probs().iter().map(|p| p.ln()).collect();
        let steps = x
            .types()
            .par_iter()
            .map_init(
                || LawCache::new(&laws, n_z),
                |cache, xt| -> Result<Vec<(f64, f64)>> {
                    let mut law = Vec::new();
                    let mut failure = None;
                    for_each_conditional_type(xt, n_z, &mut |c| {
                        if failure.is_some() {
                            return;
                        }
                        let mut lp = 0.0;
                        for (a, &n_a) in xt.iter().enumerate() {
                            if n_a == 0 {
                                continue;
                            }
                            let row = &c[a * n_z..(a + 1) * n_z];
                            lp += ln_multinomial(row);
                            for (b, &cnt) in row.iter().enumerate() {
                                if cnt > 0 {
                                    lp += cnt as f64 * ln_ref[b];
                                }
                            }
                        }
                        if lp == f64::NEG_INFINITY {
                            return;
                        }
                        match cache.pair_law(c) {
                            Ok(l) => law.push((prob_greater(&l, kd), lp.exp())),
                            Err(e) => failure = Some(e),
                        }
                    });
                    match failure {
                        Some(e) => Err(e),
                        None => Ok(integral_steps(law)),
                    }
                },
            )
            .collect::<Result<Vec<_>>>()?;
        let weights = match &x {
            XTypes::Exact(v) => Weights::Exact(v.iter().map(|(_, w)| w.exp()).collect()),
            XTypes::Sampled(v) => Weights::Sampled(v.iter().map(|(_, c)| *c).collect()),
        };
        Ok(RandomCodingTable { steps, weights })
    }

    fn blockwise(block: &BlockSpec, reference: &[f64]) -> Result<Self> {
        let (n_x, n_z, k) = (block.n_x(), block.n_z(), block.k);
        let nzb = block_count(n_z, k, BLOCK_CAP)
            .ok_or_else(|| Error::Refused(format!("{n_z}^{k} reproduction blocks exceed {BLOCK_CAP}")))?;
        if reference.len() != nzb {
            return Err(Error::Domain(format!("block reference has {} entries, expected {nzb}", reference.len())));
        }
        let reference = Distribution::new(reference.to_vec())?;
        let laws = letter_laws(&block.base)?;
        let kd = block.kd();
        let px = block.p_x();
        let z_blocks: Vec<(Vec<usize>, f64)> = (0..nzb)
            .filter(|&i| reference.get(i) > 0.0)
            .map(|i| (block_from_index(i, k, n_z), reference.get(i)))
            .collect();
        let (x_blocks, weights): (Vec<Vec<usize>>, Weights) = match block_count(n_x, k, BLOCK_CAP) {
            Some(nxb) => {
                let mut xs = Vec::new();
                let mut ws = Vec::new();
                for i in 0..nxb {
                    let x = block_from_index(i, k, n_x);
                    let w: f64 = x.iter().map(|&a| px[a]).product();
                    if w > 0.0 {
                        xs.push(x);
                        ws.push(w);
                    }
                }
                (xs, Weights::Exact(ws))
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(block.sampling.seed);
                let pick = WeightedIndex::new(&px).map_err(|e| Error::Domain(e.to_string()))?;
                let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
                for _ in 0..block.sampling.samples.max(2) {
                    let x: Vec<usize> = (0..k).map(|_| pick.sample(&mut rng)).collect();
                    *counts.entry(x).or_insert(0) += 1;
                }
                let mut v: Vec<_> = counts.into_iter().collect();
                v.sort();
                let (xs, cs) = v.into_iter().unzip();
                (xs, Weights::Sampled(cs))
            }
        };
        let steps = x_blocks
            .par_iter()
            .map_init(
                || LawCache::new(&laws, n_z),
                |cache, x| -> Result<Vec<(f64, f64)>> {
                    let mut law = Vec::with_capacity(z_blocks.len());
                    for (z, w) in &z_blocks {
                        let l = cache.pair_law(&pair_type(x, z, n_x, n_z))?;
                        law.push((prob_greater(&l, kd), *w));
                    }
                    Ok(integral_steps(law))
                },
            )
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomCodingTable { steps, weights })
    }

    /// `int_0^1 E[P^M[pi(X, Zbar) > t | X]] dt` with `M = e^ln_m`.
    pub fn evaluate_ln(&self, ln_m: f64) -> Estimate {
        let m = ln_m.exp();
        let per_entry: Vec<f64> = self
            .steps
            .iter()
            .map(|steps| {
                steps
                    .iter()
                    .map(|&(gap, ln_tail)| if ln_tail == 0.0 { gap } else { gap * (m * ln_tail).exp() })
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            })
            .collect();
        match &self.weights {
            Weights::Exact(w) => {
                Estimate::exact(w.iter().zip(&per_entry).map(|(w, v)| w * v).sum::<f64>().clamp(0.0, 1.0))
            }
            Weights::Sampled(c) => {
                let pairs: Vec<(f64, usize)> = per_entry.into_iter().zip(c.iter().copied()).collect();
                Estimate::from_samples(&pairs)
            }
        }
    }

    pub fn evaluate(&self, m: f64) -> Estimate {
        self.evaluate_ln(m.ln())
    }

    /// The limit as `M` grows: the mass of observations that no block
    /// covers with certainty.
    pub fn floor(&self) -> Estimate {
        self.evaluate_ln(f64::INFINITY)
    }
}

fn check_m(m: f64) -> Result<f64> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("code size must be at least 1, got {m}")));
    }
    Ok(m.ln())
}

/// Average excess-distortion probability of `M` codewords drawn from
/// `reference` under the encoder that minimizes `pi`. This is exactly the
/// random-coding ensemble average.
pub fn achievability_random_coding(block: &BlockSpec, m: f64, reference: &Reference) -> Result<Estimate> {
    let ln_m = check_m(m)?;
    Ok(RandomCodingTable::new(block, reference)?.evaluate_ln(ln_m))
}

/// Settings for the converse. Unset fields take the defaults: the
/// per-letter backward kernel of the tilted optimum, `lambda = k lambda*`,
/// and 32 log-spaced `gamma` in `[0.1, 3 ln k + 10]`.
#[derive(Clone, Debug, Default)]
pub struct ConverseOptions {
    /// Per-letter `P_Xbar|Zbar`, rows indexed by reproduction letter.
    pub backward: Option<Channel>,
    /// Multiplier of the per-letter distortion excess `d(S, z) - d`.
    pub lambda: Option<f64>,
    pub gamma_grid: Option<Vec<f64>>,
}

/// `n` points spaced evenly in logarithm over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

pub fn default_gamma_grid(k: usize) -> Vec<f64> {
    log_grid(0.1, 3.0 * (k as f64).ln() + 10.0, 32)
}

/// Backward kernel `P_X|Z*` of a per-letter test channel. Reproduction
/// letters never used fall back to `P_X`.
pub fn backward_kernel(p_x: &[f64], forward: &Channel) -> Result<Channel> {
    let n_z = forward.n_outputs();
    let q: Vec<f64> = (0..n_z).map(|b| p_x.iter().enumerate().map(|(a, p)| p * forward.get(a, b)).sum()).collect();
    let rows = (0..n_z)
        .map(|b| {
            if q[b] <= 0.0 {
                p_x.to_vec()
            } else {
                p_x.iter().enumerate().map(|(a, p)| p * forward.get(a, b) / q[b]).collect()
            }
        })
        .collect();
    Channel::new(rows)
}

/// Which evaluation the converse used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConverseMethod {
    /// Infimum over all reproduction blocks, through conditional types.
    Types,
    /// Letter-by-letter infimum; exact when every per-letter term is
    /// deterministic given the observation.
    Separable,
}

/// Sorted distortion-sum values with `P[T >= value]`.
type TailTable = Vec<(f64, f64)>;

fn tail_table(law: &Law) -> TailTable {
    let mut out: TailTable = Vec::with_capacity(law.len());
    let mut acc = 0.0;
    for (v, p) in law.iter().rev() {
        acc += p;
        out.push((v.to_f64(), acc.min(1.0)));
    }
    out.reverse();
    out
}

fn tail_at_least(table: &TailTable, threshold: f64) -> f64 {
    let i = table.partition_point(|(v, _)| *v < threshold);
    table.get(i).map_or(0.0, |(_, p)| *p)
}

/// Per-type data for the converse, reusable across `M`.
#[derive(Clone, Debug)]
pub struct ConverseTable {
    k: usize,
    d: f64,
    lambda: f64,
    gammas: Vec<f64>,
    pub method: ConverseMethod,
    /// Per observation type: for each conditional type, the information
    /// term and the tail table of the distortion sum.
    entries: Vec<Vec<(f64, TailTable)>>,
    weights: Vec<f64>,
}

const SLACK: f64 = 1e-9;
/// Default per-letter `lambda` when `d` is at or below `d_min`.
const BELOW_RANGE_LAMBDA: f64 = 1e6;

impl ConverseTable {
    pub fn new(block: &BlockSpec, opts: &ConverseOptions) -> Result<Self> {
        let (n_x, n_z, k) = (block.n_x(), block.n_z(), block.k);
        let px = block.p_x();
        let (backward, lambda) = match (&opts.backward, opts.lambda) {
            (Some(b), Some(l)) => (b.clone(), l),
            _ => match block.tilted_kernel() {
                Ok((fwd, sol)) => {
                    let b = match &opts.backward {
                        Some(b) => b.clone(),
                        None => backward_kernel(&px, &fwd)?,
                    };
                    (b, opts.lambda.unwrap_or(k as f64 * sol.lambda_star))
                }
                // no slope below d_min: an independent kernel and a steep
                // lambda leave the excess-distortion probability itself
                Err(Error::Range { .. }) => {
                    let b = opts.backward.clone().unwrap_or(Channel::new(vec![px.clone(); n_z])?);
                    (b, opts.lambda.unwrap_or(BELOW_RANGE_LAMBDA * k as f64))
                }
                Err(e) => return Err(e),
            },
        };
        if backward.n_inputs() != n_z || backward.n_outputs() != n_x {
            return Err(Error::Domain(format!(
                "backward kernel must be {n_z} x {n_x}, got {} x {}",
                backward.n_inputs(),
                backward.n_outputs()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::Domain(format!("lambda must be nonnegative, got {lambda}")));
        }
        let gammas = opts.gamma_grid.clone().unwrap_or_else(|| default_gamma_grid(k));
        if gammas.is_empty() || gammas.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::Domain("gamma grid must be nonempty and nonnegative".into()));
        }
        // per-letter information terms ln(P_Xbar|Zbar(a|b) / P_X(a))
        let info: Vec<Vec<f64>> = (0..n_x)
            .map(|a| (0..n_z).map(|b| if px[a] > 0.0 { (backward.get(b, a) / px[a]).ln() } else { 0.0 }).collect())
            .collect();
        let laws = letter_laws(&block.base)?;
        let x = match x_types(block)? {
            XTypes::Exact(v) => v,
            XTypes::Sampled(_) => {
                return Err(Error::Refused(format!(
                    "the converse needs all {:.3e} observation types",
                    count_compositions(k, n_x)
                )))
            }
        };
        let weights = x.iter().map(|(_, w)| w.exp()).collect();
        let xt = XTypes::Exact(x.clone());
        let by_types = guard_work(&xt, n_z, "converse");
        let base = ConverseTable {
            k,
            d: block.d.to_f64(),
            lambda,
            gammas,
            method: ConverseMethod::Types,
            entries: Vec::new(),
            weights,
        };
        if by_types.is_ok() {
            let entries = x
                .par_iter()
                .map_init(
                    || LawCache::new(&laws, n_z),
                    |cache, (t, _)| -> Result<Vec<(f64, TailTable)>> {
                        let mut out = Vec::new();
                        let mut failure = None;
                        for_each_conditional_type(t, n_z, &mut |c| {
                            if failure.is_some() {
                                return;
                            }
                            let mut i_term = 0.0;
                            for (idx, &cnt) in c.iter().enumerate() {
                                if cnt > 0 {
                                    i_term += cnt as f64 * info[idx / n_z][idx % n_z];
                                }
                            }
                            match cache.pair_law(c) {
                                Ok(l) => out.push((i_term, tail_table(&l))),
                                Err(e) => failure = Some(e),
                            }
                        });
                        match failure {
                            Some(e) => Err(e),
                            None => Ok(out),
                        }
                    },
                )
                .collect::<Result<Vec<_>>>();
            match entries {
                Ok(entries) => return Ok(ConverseTable { entries, ..base }),
                Err(e) if is_refusal(&e) => log::warn!("{e}"),
                Err(e) => return Err(e),
            }
        }
        // letter-by-letter: valid only when every per-letter distortion is
        // deterministic given the observed letter
        let mut per_letter = vec![f64::INFINITY; n_x];
        for a in 0..n_x {
            if px[a] <= 0.0 {
                continue;
            }
            for b in 0..n_z {
                let law = &laws[a][b];
                if law.len() != 1 {
                    return Err(Error::Refused(format!(
                        "converse for k = {k}: the block infimum is too large to enumerate and observation {} \
                         leaves the distortion to {} random, so it does not separate across letters; \
                         use the erasure-source bounds for long blocks",
                        block.base.alphabets.observation[a], block.base.alphabets.reproduction[b]
                    )));
                }
            }
        }
        log::warn!("converse: minimizing letter by letter");
        for a in 0..n_x {
            if px[a] <= 0.0 {
                continue;
            }
            for b in 0..n_z {
                let dv = laws[a][b][0].0.to_f64();
                let f = if info[a][b] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    info[a][b] + lambda / k as f64 * (dv - base.d)
                };
                per_letter[a] = per_letter[a].min(f);
            }
        }
        // one entry per observation type with a deterministic sum
        let entries = x
            .iter()
            .map(|(t, _)| {
                let total: f64 = t.iter().zip(&per_letter).filter(|(n, _)| **n > 0).map(|(n, f)| *n as f64 * f).sum();
                // encode as an information term with a zero distortion excess
                vec![(total, vec![(base.d * k as f64, 1.0)])]
            })
            .collect();
        Ok(ConverseTable { entries, method: ConverseMethod::Separable, ..base })
    }

    fn inner(&self, i_term: f64, table: &TailTable, level: f64) -> f64 {
        if i_term == f64::NEG_INFINITY {
            return 0.0;
        }
        let need = level - i_term;
        if self.lambda > 0.0 {
            // i + lambda (T / k - d) >= level  <=>  T >= k (d + need / lambda)
            let thr = self.k as f64 * (self.d + need / self.lambda);
            tail_at_least(table, thr + SLACK * (1.0 + thr.abs()))
        } else if need <= -SLACK * (1.0 + level.abs()) {
            1.0
        } else {
            0.0
        }
    }

    /// The bound at `M = e^ln_m` and the maximizing `gamma`, before
    /// clamping to `[0, 1]`.
    pub fn evaluate_ln_raw(&self, ln_m: f64) -> (f64, f64) {
        let mut best = (f64::NEG_INFINITY, self.gammas[0]);
        for &g in &self.gammas {
            let level = ln_m + g;
            let mut total = 0.0;
            for (w, entry) in self.weights.iter().zip(&self.entries) {
                let inf = entry.iter().map(|(i, t)| self.inner(*i, t, level)).fold(f64::INFINITY, f64::min);
                total += w * inf.min(1.0);
            }
            let v = total - (-g).exp();
            if v > best.0 {
                best = (v, g);
            }
        }
        best
    }

    pub fn evaluate_ln(&self, ln_m: f64) -> f64 {
        self.evaluate_ln_raw(ln_m).0.clamp(0.0, 1.0)
    }
}

/// Lower bound on the excess-distortion probability of every code with `M`
/// codewords, clamped to `[0, 1]`.
pub fn converse_bound(block: &BlockSpec, m: f64, opts: &ConverseOptions) -> Result<f64> {
    let ln_m = check_m(m)?;
    Ok(ConverseTable::new(block, opts)?.evaluate_ln(ln_m))
}

/// Probability that `k` i.i.d. letters with the given `(value, prob)`
/// atoms sum to more than `threshold`, never understated.
fn iid_sum_exceeds(atoms: &[(f64, f64)], k: usize, threshold: f64) -> f64 {
    // merge equal atoms
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for &(v, p) in atoms {
        if p <= 0.0 {
            continue;
        }
        match merged.iter_mut().find(|(w, _)| *w == v) {
            Some(e) => e.1 += p,
            None => merged.push((v, p)),
        }
    }
    let scale = merged.iter().map(|(v, _)| v.abs()).fold(0.0, f64::max);
    let slack = 1e-12 * k as f64 * (1.0 + scale);
    if merged.iter().any(|(v, _)| *v == f64::INFINITY) {
        // an infinite atom exceeds everything
        let p_inf: f64 = merged.iter().filter(|(v, _)| v.is_infinite()).map(|(_, p)| p).sum();
        let finite: Vec<(f64, f64)> = merged.iter().copied().filter(|(v, _)| v.is_finite()).collect();
        let p_fin = 1.0 - p_inf;
        if finite.is_empty() {
            return 1.0;
        }
        let cond: Vec<(f64, f64)> = finite.iter().map(|(v, p)| (*v, p / p_fin)).collect();
        return (1.0 - p_fin.powi(k as i32) * (1.0 - iid_sum_exceeds(&cond, k, threshold))).clamp(0.0, 1.0);
    }
    let m = merged.len();
    let probs: Vec<f64> = merged.iter().map(|(_, p)| *p).collect();
    if count_compositions(k, m) <= WORK_CAP {
        let mut total = 0.0;
        for_each_composition(k, m, &mut |c| {
            let s: f64 = c.iter().zip(&merged).map(|(n, (v, _))| *n as f64 * v).sum();
            if s > threshold - slack {
                total += ln_type_prob(c, &probs).exp();
            }
        });
        return total.min(1.0);
    }
    // lattice with every atom rounded up
    const BINS: usize = 1 << 16;
    let lo = merged.iter().map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
    let hi = merged.iter().map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
    let h = ((hi - lo) * k as f64 / BINS as f64).max(1e-12);
    let steps: Vec<(usize, f64)> = merged.iter().map(|(v, p)| (((v - lo) / h).ceil() as usize, *p)).collect();
    let width = steps.iter().map(|(s, _)| *s).max().unwrap_or(0);
    let mut dist = vec![1.0];
    for _ in 0..k {
        let mut next = vec![0.0; dist.len() + width];
        for (i, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(s, q) in &steps {
                next[i + s] += p * q;
            }
        }
        dist = next;
    }
    dist.iter()
        .enumerate()
        .filter(|(i, _)| k as f64 * lo + *i as f64 * h > threshold - slack)
        .map(|(_, p)| p)
        .sum::<f64>()
        .min(1.0)
}

/// `P[d(S^k, Z^k) > d] + P[i(X^k; Z^k) > ln M - gamma] + exp(-e^gamma)`
/// for the product of a per-letter test channel.
pub fn achievability_shannon_style(block: &BlockSpec, m: f64, kernel: &Channel, gamma: f64) -> Result<Estimate> {
    let ln_m = check_m(m)?;
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be nonnegative, got {gamma}")));
    }
    let (n_x, n_z, k) = (block.n_x(), block.n_z(), block.k);
    if kernel.n_inputs() != n_x || kernel.n_outputs() != n_z {
        return Err(Error::Domain(format!("kernel must be {n_x} x {n_z}")));
    }
    let px = block.p_x();
    let laws = letter_laws(&block.base)?;
    let q: Vec<f64> = (0..n_z).map(|b| (0..n_x).map(|a| px[a] * kernel.get(a, b)).sum()).collect();

    // per-letter distortion law under P_S X Z
    let mut letter: std::collections::BTreeMap<ExtRational, f64> = Default::default();
    let mut info_atoms = Vec::new();
    for a in 0..n_x {
        for b in 0..n_z {
            let w = px[a] * kernel.get(a, b);
            if w <= 0.0 {
                continue;
            }
            for (v, p) in &laws[a][b] {
                *letter.entry(*v).or_insert(0.0) += w * p;
            }
            info_atoms.push(((kernel.get(a, b) / q[b]).ln(), w));
        }
    }
    let letter: Law = letter.into_iter().collect();
    let distortion = match convolve_power(&letter, k, GRID_CAP) {
        Ok(law) => Estimate::exact(prob_greater(&law, block.kd())),
        Err(e) if is_refusal(&e) => {
            log::warn!("{e}; sampling the distortion term");
            let mut rng = ChaCha8Rng::seed_from_u64(block.sampling.seed);
            let pick = WeightedIndex::new(letter.iter().map(|(_, p)| *p)).map_err(|e| Error::Domain(e.to_string()))?;
            let kd = ExtRational::Finite(block.kd());
            let n = block.sampling.samples.max(2);
            let hits = (0..n)
                .filter(|_| {
                    let t = (0..k)
                        .fold(ExtRational::Finite(Rational::zero()), |acc, _| acc + letter[pick.sample(&mut rng)].0);
                    t > kd
                })
                .count();
            Estimate::from_samples(&[(1.0, hits), (0.0, n - hits)])
        }
        Err(e) => return Err(e),
    };
    let info = iid_sum_exceeds(&info_atoms, k, ln_m - gamma);
    let value = (distortion.value + info + (-gamma.exp()).exp()).min(1.0);
    Ok(Estimate { value, std_error: distortion.std_error })
}

/// Settings of the conditional-type achievability bound. `ln_gamma` is
/// kept in logarithms since `gamma` scales with `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct TiltedParams {
    pub ln_gamma: f64,
    pub beta: f64,
    /// Width of the distortion window below `d`.
    pub delta: f64,
    /// Per-letter reference law of the codewords.
    pub reference: Distribution,
}

impl TiltedParams {
    /// `beta = sqrt(k) / b`, `delta = tau / k`,
    /// `ln gamma = ln M - ln ln k + ln 2`.
    pub fn asymptotic(k: usize, m: f64, b: f64, tau: f64, reference: Distribution) -> Result<Self> {
        let ln_m = check_m(m)?;
        if k < 2 || !(b > 0.0) || !(tau > 0.0) {
            return Err(Error::Domain("need k >= 2, b > 0 and tau > 0".into()));
        }
        let kf = k as f64;
        Ok(TiltedParams {
            ln_gamma: ln_m - kf.ln().ln() + std::f64::consts::LN_2,
            beta: kf.sqrt() / b,
            delta: tau / kf,
            reference,
        })
    }
}

/// Counts of each reproduction letter assigned to `n` copies of an
/// observation letter: `n W(.|a)` rounded by largest remainder.
fn rounded_row(n: usize, row: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = row.iter().map(|w| w * n as f64).collect();
    let mut c: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - c.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&i, &j| (raw[j] - raw[j].floor()).total_cmp(&(raw[i] - raw[i].floor())).then(i.cmp(&j)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if row[i] > 0.0 || row.iter().all(|w| *w <= 0.0) {
            c[i] += 1;
            left -= 1;
        }
    }
    c
}

/// Checks that a per-letter kernel, applied as a uniform arrangement of its
/// rounded composition, makes `d(S, Z)` a function of `(S, X)`.
///
/// This fails exactly when some observation letter splits between two
/// reproductions whose distortion difference depends on the source letter.
pub fn check_type_kernel(model: &NoisySourceModel, kernel: &Channel) -> Result<()> {
    let px = model.observation_marginal();
    for a in 0..model.n_observation() {
        if px[a] <= 0.0 {
            continue;
        }
        let post = model.posterior(a)?;
        let support: Vec<usize> = (0..post.len()).filter(|&s| post[s] > 0.0).collect();
        let outputs: Vec<usize> = (0..model.n_reproduction()).filter(|&b| kernel.get(a, b) > 0.0).collect();
        for (i, &b1) in outputs.iter().enumerate() {
            for &b2 in &outputs[i + 1..] {
                let mut gaps = Vec::new();
                let mut uneven = false;
                for &s in &support {
                    match (model.distortion.exact(s, b1), model.distortion.exact(s, b2)) {
                        (ExtRational::Finite(u), ExtRational::Finite(v)) => gaps.push(u - v),
                        (ExtRational::Infinite, ExtRational::Infinite) => {}
                        _ => uneven = true,
                    }
                }
                uneven |= gaps.windows(2).any(|w| w[0] != w[1]);
                if uneven {
                    return Err(Error::ConditionViolation {
                        x_block: vec![a, a],
                        z_a: vec![b1, b2],
                        z_b: vec![b2, b1],
                    });
                }
            }
        }
    }
    Ok(())
}

/// Replace every kernel row that breaks [`check_type_kernel`] by a point
/// mass on its most likely reproduction.
pub fn conditioned_kernel(model: &NoisySourceModel, kernel: &Channel) -> Result<Channel> {
    let mut rows: Vec<Vec<f64>> = kernel.rows().to_vec();
    loop {
        let current = Channel::new(rows.clone())?;
        match check_type_kernel(model, &current) {
            Ok(()) => return Ok(current),
            Err(Error::ConditionViolation { x_block, .. }) => {
                let a = x_block[0];
                let best =
                    (0..rows[a].len()).max_by(|&i, &j| rows[a][i].total_cmp(&rows[a][j]).then(j.cmp(&i))).unwrap_or(0);
                rows[a] = (0..rows[a].len()).map(|b| if b == best { 1.0 } else { 0.0 }).collect();
            }
            Err(e) => return Err(e),
        }
    }
}

/// Conditional-type achievability bound with a uniform arrangement of the
/// rounded composition of `kernel` within each observation letter. The
/// inner infimum over `lambda` runs over 64 log-spaced points around
/// `k lambda*`.
pub fn achievability_tilted(block: &BlockSpec, m: f64, kernel: &Channel, params: &TiltedParams) -> Result<Estimate> {
    let ln_m = check_m(m)?;
    let (n_x, n_z, k) = (block.n_x(), block.n_z(), block.k);
    if kernel.n_inputs() != n_x || kernel.n_outputs() != n_z || params.reference.len() != n_z {
        return Err(Error::Domain("kernel or reference has the wrong shape".into()));
    }
    if !(params.beta > 0.0) || !(params.delta >= 0.0) {
        return Err(Error::Domain("beta must be positive and delta nonnegative".into()));
    }
    check_type_kernel(&block.base, kernel)?;
    let lambda_star = block.tilted_solution().map(|s| s.lambda_star).unwrap_or(1.0).max(1e-3);
    let lambdas = log_grid(k as f64 * lambda_star / 100.0, k as f64 * lambda_star * 100.0, 64);
    let laws = letter_laws(&block.base)?;
    let x = x_types(block)?;
    let kf = k as f64;
    let (d, delta) = (block.d.to_f64(), params.delta);
    let kd = block.kd();
    let ln_ref: Vec<f64> = params.reference.probs().iter().map(|p| p.ln()).collect();
    let level = params.ln_gamma - params.beta.ln();
    let values = x
        .types()
        .par_iter()
        .map_init(
            || LawCache::new(&laws, n_z),
            |cache, t| -> Result<f64> {
                let mut counts = vec![0usize; n_x * n_z];
                let mut div = 0.0;
                for (a, &n_a) in t.iter().enumerate() {
                    if n_a == 0 {
                        continue;
                    }
                    let row = rounded_row(n_a, kernel.row(a));
                    div -= ln_multinomial(&row);
                    for (b, &c) in row.iter().enumerate() {
                        if c > 0 {
                            div -= c as f64 * ln_ref[b];
                        }
                        counts[a * n_z + b] = c;
                    }
                }
                if div.is_nan() || div == f64::INFINITY {
                    return Ok(1.0);
                }
                let law = cache.pair_law(&counts)?;
                let table = tail_table(&law);
                let over = prob_greater(&law, kd);
                // P[k(d - delta) <= T <= kd], understated
                let low = kf * (d - delta);
                let window = (tail_at_least(&table, low + SLACK * (1.0 + low.abs())) - over).max(0.0);
                let third = (1.0 - params.beta * window).max(0.0);
                // P[D + lambda (T/k - (d - delta)) > level], overstated
                let first = lambdas
                    .iter()
                    .map(|&lam| {
                        let thr = kf * ((level - div) / lam + d - delta);
                        table.iter().find(|(v, _)| *v > thr - SLACK * (1.0 + thr.abs())).map_or(0.0, |(_, p)| *p)
                    })
                    .fold(1.0, f64::min);
                Ok((first + over + third).min(1.0))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let est = x.average(&values);
    let tail = (-(ln_m - params.ln_gamma).exp()).exp();
    Ok(Estimate { value: (est.value + tail).min(1.0), std_error: est.std_error })
}

/// Bracket on the smallest code size meeting `eps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodeSizeBracket {
    /// `ln` of one plus the largest `M` whose converse exceeds `eps`;
    /// infinite when no code meets `eps`.
    pub ln_m_converse: f64,
    /// `ln` of the smallest `M` whose best achievability bound is at most
    /// `eps`; `None` when the bracket is open.
    pub ln_m_achievability: Option<f64>,
}

impl CodeSizeBracket {
    fn as_integer(ln_m: f64) -> Option<u64> {
        (ln_m.is_finite() && ln_m < 43.0).then(|| ln_m.exp().round() as u64)
    }

    pub fn m_converse(&self) -> Option<u64> {
        Self::as_integer(self.ln_m_converse)
    }

    pub fn m_achievability(&self) -> Option<u64> {
        self.ln_m_achievability.and_then(Self::as_integer)
    }
}

/// Code sizes are refined to exact integers below this `ln M`.
const INTEGER_REFINE_LN: f64 = 30.0;

/// Bisection for the boundary of a monotone predicate on `ln M`; returns
/// the smallest `ln M` (integer-exact when small) where `done` holds.
fn first_true(lo: f64, hi: f64, done: &dyn Fn(f64) -> bool) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if done(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    if hi < INTEGER_REFINE_LN {
        let mut m = hi.exp().ceil().max(1.0);
        while m > 1.0 && done((m - 1.0).ln()) {
            m -= 1.0;
        }
        while !done(m.ln()) {
            m += 1.0;
        }
        return m.ln();
    }
    hi
}

/// Brackets `M*(k, d, eps)` between the converse and the best random-coding
/// bound over the tilted-marginal and uniform references.
pub fn code_size_bracket(block: &BlockSpec) -> Result<CodeSizeBracket> {
    let eps = block.eps;
    let cap = block.k as f64 * (block.n_z() as f64).ln();
    let conv = ConverseTable::new(block, &ConverseOptions::default())?;
    // every code is no better than one using all |Z|^k blocks
    let ln_m_converse = if conv.evaluate_ln(0.0) <= eps {
        0.0
    } else if conv.evaluate_ln(cap) > eps {
        f64::INFINITY
    } else {
        first_true(0.0, cap, &|l| conv.evaluate_ln(l) <= eps)
    };

    let mut refs = vec![Distribution::uniform(block.n_z())];
    if let Ok(sol) = block.tilted_solution() {
        refs.push(sol.marginal.clone());
    }
    let tables = refs
        .iter()
        .map(|r| RandomCodingTable::new(block, &Reference::Product(r.clone())))
        .collect::<Result<Vec<_>>>()?;
    let ach = |l: f64| tables.iter().map(|t| t.evaluate_ln(l).value).fold(1.0, f64::min);
    let ln_m_achievability = if ach(f64::INFINITY) > eps {
        None
    } else if ach(0.0) <= eps {
        Some(0.0)
    } else {
        let mut hi = cap.max(1.0) + 10.0;
        while ach(hi) > eps {
            hi *= 2.0;
        }
        Some(first_true(0.0, hi, &|l| ach(l) <= eps))
    };
    Ok(CodeSizeBracket { ln_m_converse, ln_m_achievability })
}

/// All conditional types of an observation type, for oracles and tests.
pub fn conditional_types(x_type: &[usize], n_z: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_conditional_type(x_type, n_z, &mut |c| out.push(c.to_vec()));
    out
}

/// All compositions of `n` into `parts`, for oracles and tests.
pub fn all_compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    compositions(n, parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_bes;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d).unwrap()
    }

    fn bes_block(delta: f64, k: usize, d: Rational) -> BlockSpec {
        BlockSpec::new(builtin_bes(delta).unwrap(), k, d, 0.1).unwrap()
    }

    #[test]
    fn pi_examples() {
        let b = bes_block(0.1, 1, r(1, 10));
        let v = pi_excess_prob(&b, &[2], &[0]).unwrap();
        assert!(v.is_exact() && (v.value - 0.5).abs() < 1e-15);
        let b = bes_block(0.1, 2, r(1, 4));
        let v = pi_excess_prob(&b, &[2, 0], &[0, 0]).unwrap();
        assert!((v.value - 0.5).abs() < 1e-15);
        assert_eq!(pi_excess_prob(&b, &[0, 1], &[0, 1]).unwrap().value, 0.0);
        assert_eq!(pi_excess_prob(&b, &[0, 1], &[1, 1]).unwrap().value, 1.0);
    }

    #[test]
    fn integral_of_step_tail() {
        // pi uniform on {0, 1/2, 1}: the integral of P[pi > t] is 1/2
        let steps = integral_steps(vec![(0.0, 1.0 / 3.0), (0.5, 1.0 / 3.0), (1.0, 1.0 / 3.0)]);
        let m1: f64 = steps.iter().map(|(g, lt)| g * lt.exp()).sum();
        assert!((m1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rounding_keeps_counts() {
        assert_eq!(rounded_row(7, &[0.5, 0.5]), vec![4, 3]);
        assert_eq!(rounded_row(3, &[0.0, 1.0]), vec![0, 3]);
        assert_eq!(rounded_row(10, &[0.13, 0.5, 0.37]).iter().sum::<usize>(), 10);
    }

    #[test]
    fn erasure_split_breaks_the_type_condition() {
        let b = bes_block(0.1, 4, r(1, 10));
        let (w, _) = b.tilted_kernel().unwrap();
        assert!(matches!(check_type_kernel(&b.base, &w), Err(Error::ConditionViolation { .. })));
        let fixed = conditioned_kernel(&b.base, &w).unwrap();
        check_type_kernel(&b.base, &fixed).unwrap();
        assert_eq!(fixed.row(2).iter().filter(|p| **p == 1.0).count(), 1);
        assert_eq!(fixed.row(0), w.row(0));
    }
}
