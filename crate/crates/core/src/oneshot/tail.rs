//! Exact laws of block distortion sums.
//!
//! Per-letter distortions are rational, so a k-letter sum takes finitely
//! many rational values and its law can be convolved exactly. Strict
//! threshold events are then decided without rounding.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{ExtRational, Rational};

/// Sorted `(value, probability)` pairs with distinct values.
pub type Law = Vec<(ExtRational, f64)>;

/// Default cap on the number of distinct sums.
pub const GRID_CAP: usize = 1 << 16;

pub(crate) fn grid_exploded(len: usize, cap: usize) -> Error {
    Error::Refused(format!("distortion grid has more than {cap} values ({len})"))
}

/// Law of `U + V` for independent `U` and `V`.
pub fn convolve(a: &[(ExtRational, f64)], b: &[(ExtRational, f64)], cap: usize) -> Result<Law> {
    let mut acc: BTreeMap<ExtRational, f64> = BTreeMap::new();
    for &(u, p) in a {
        for &(v, q) in b {
            *acc.entry(u + v).or_insert(0.0) += p * q;
        }
        if acc.len() > cap {
            return Err(grid_exploded(acc.len(), cap));
        }
    }
    Ok(acc.into_iter().filter(|(_, p)| *p > 0.0).collect())
}

/// Law of the sum of `n` independent copies.
pub fn convolve_power(law: &[(ExtRational, f64)], n: usize, cap: usize) -> Result<Law> {
    let mut out: Law = vec![(ExtRational::Finite(Rational::zero()), 1.0)];
    let mut base: Law = law.to_vec();
    let mut n = n;
    while n > 0 {
        if n & 1 == 1 {
            out = convolve(&out, &base, cap)?;
        }
        n >>= 1;
        if n > 0 {
            base = convolve(&base, &base, cap)?;
        }
    }
    Ok(out)
}

/// `P[T > threshold]`, decided exactly.
pub fn prob_greater(law: &[(ExtRational, f64)], threshold: Rational) -> f64 {
    let t = ExtRational::Finite(threshold);
    law.iter().filter(|(v, _)| *v > t).map(|(_, p)| p).sum::<f64>().min(1.0)
}

/// Laws of every prefix sum of a sequence of independent letters.
///
/// `layers[i]` is the law of the sum of the first `i` letters, so
/// `layers[0]` is a point mass at zero and the last layer is the block law.
#[derive(Clone, Debug)]
pub struct TailDp {
    /// All values reachable by some prefix, sorted.
    pub grid: Vec<ExtRational>,
    pub layers: Vec<Law>,
}

impl TailDp {
    pub fn new(letters: &[Law], cap: usize) -> Result<Self> {
        let mut layers: Vec<Law> = vec![vec![(ExtRational::Finite(Rational::zero()), 1.0)]];
        for law in letters {
            let next = convolve(layers.last().expect("nonempty"), law, cap)?;
            layers.push(next);
        }
        let mut grid: Vec<ExtRational> = layers.iter().flat_map(|l| l.iter().map(|(v, _)| *v)).collect();
        grid.sort();
        grid.dedup();
        Ok(TailDp { grid, layers })
    }

    pub fn len(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Law of the full sum.
    pub fn block_law(&self) -> &Law {
        self.layers.last().expect("nonempty")
    }

    /// Probability that the first `prefix` letters sum to `value`.
    pub fn prob(&self, prefix: usize, value: ExtRational) -> f64 {
        self.layers
            .get(prefix)
            .and_then(|l| l.binary_search_by(|(v, _)| v.cmp(&value)).ok().map(|i| l[i].1))
            .unwrap_or(0.0)
    }

    /// `P[sum > threshold]` for the full block.
    pub fn prob_greater(&self, threshold: Rational) -> f64 {
        prob_greater(self.block_law(), threshold)
    }
}
