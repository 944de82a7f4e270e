//! Exhaustive oracles over source blocks and codebooks.

#![allow(dead_code)]

use noisy_rd::model::NoisySourceModel;
use noisy_rd::numerics::{ExtRational, Rational};
use noisy_rd::oneshot::types::block_from_index;

pub fn r(n: i128, d: i128) -> Rational {
    Rational::new(n, d).unwrap()
}

pub fn blocks(alphabet: usize, k: usize) -> Vec<Vec<usize>> {
    (0..alphabet.pow(k as u32)).map(|i| block_from_index(i, k, alphabet)).collect()
}

/// pi(x, z) by summing over all source blocks.
pub fn pi_oracle(model: &NoisySourceModel, k: usize, d: Rational, x: &[usize], z: &[usize]) -> f64 {
    let posts: Vec<Vec<f64>> = x.iter().map(|&a| model.posterior(a).unwrap()).collect();
    let kd = ExtRational::Finite(d.mul_int(k as i128));
    let mut total = 0.0;
    for s in blocks(model.n_source(), k) {
        let p: f64 = s.iter().zip(&posts).map(|(&si, post)| post[si]).product();
        if p == 0.0 {
            continue;
        }
        let dist = s
            .iter()
            .zip(z)
            .fold(ExtRational::Finite(Rational::zero()), |acc, (&si, &zi)| acc + model.distortion.exact(si, zi));
        if dist > kd {
            total += p;
        }
    }
    total
}

/// Observation blocks of positive probability with their weights.
pub fn x_blocks(model: &NoisySourceModel, k: usize) -> Vec<(Vec<usize>, f64)> {
    let px = model.observation_marginal();
    blocks(model.n_observation(), k)
        .into_iter()
        .map(|x| {
            let w = x.iter().map(|&a| px[a]).product::<f64>();
            (x, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect()
}

/// Weights of the observation blocks and `pi[x][z]` over all z-blocks.
pub struct PiTable {
    pub weights: Vec<f64>,
    pub pi: Vec<Vec<f64>>,
    pub n_z_blocks: usize,
}

impl PiTable {
    pub fn new(model: &NoisySourceModel, k: usize, d: Rational) -> Self {
        let xs = x_blocks(model, k);
        let zs = blocks(model.n_reproduction(), k);
        let pi = xs.iter().map(|(x, _)| zs.iter().map(|z| pi_oracle(model, k, d, x, z)).collect()).collect();
        PiTable { weights: xs.iter().map(|(_, w)| *w).collect(), pi, n_z_blocks: zs.len() }
    }

    /// Excess probability of a codebook (indices of z-blocks) under the
    /// pi-minimizing encoder.
    pub fn codebook_error(&self, code: &[usize]) -> f64 {
        self.weights.iter().zip(&self.pi).map(|(w, row)| w * code.iter().map(|&c| row[c]).fold(1.0, f64::min)).sum()
    }

    /// Smallest excess probability over all codebooks of size `m`.
    pub fn optimum(&self, m: usize) -> f64 {
        let n = self.n_z_blocks;
        (0..n.pow(m as u32)).map(|idx| self.codebook_error(&block_from_index(idx, m, n))).fold(1.0, f64::min)
    }
}

/// Excess probability of a codebook of z-blocks.
pub fn codebook_error(model: &NoisySourceModel, k: usize, d: Rational, code: &[Vec<usize>]) -> f64 {
    x_blocks(model, k)
        .iter()
        .map(|(x, w)| w * code.iter().map(|c| pi_oracle(model, k, d, x, c)).fold(1.0, f64::min))
        .sum()
}

/// Average over all ordered codebooks drawn i.i.d. from a product reference.
pub fn random_coding_oracle(model: &NoisySourceModel, k: usize, d: Rational, m: usize, reference: &[f64]) -> f64 {
    let table = PiTable::new(model, k, d);
    let zw: Vec<f64> =
        blocks(model.n_reproduction(), k).iter().map(|z| z.iter().map(|&b| reference[b]).product()).collect();
    let n = zw.len();
    let mut total = 0.0;
    for idx in 0..n.pow(m as u32) {
        let pick = block_from_index(idx, m, n);
        let w: f64 = pick.iter().map(|&i| zw[i]).product();
        if w == 0.0 {
            continue;
        }
        total += w * table.codebook_error(&pick);
    }
    total
}

/// Smallest excess probability over all codebooks of size `m`.
pub fn optimum_oracle(model: &NoisySourceModel, k: usize, d: Rational, m: usize) -> f64 {
    PiTable::new(model, k, d).optimum(m)
}
