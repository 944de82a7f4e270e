//! Types and conditional types of blocks.
//!
//! With product kernels and per-letter distortion every block quantity is
//! invariant under permuting letters. Sums over blocks then become sums over
//! compositions weighted by multinomial coefficients.

use statrs::function::factorial::ln_factorial;

use crate::numerics::ln_binomial;

/// Number of compositions of `n` into `parts` nonnegative parts.
pub fn count_compositions(n: usize, parts: usize) -> f64 {
    if parts == 0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    ln_binomial((n + parts - 1) as u64, (parts - 1) as u64).exp()
}

/// Calls `f` on every composition of `n` into `parts` nonnegative parts.
pub fn for_each_composition(n: usize, parts: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(rest: usize, slot: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if slot + 1 == buf.len() {
            buf[slot] = rest;
            f(buf);
            return;
        }
        for v in (0..=rest).rev() {
            buf[slot] = v;
            go(rest - v, slot + 1, buf, f);
        }
    }
    if parts == 0 {
        if n == 0 {
            f(&[]);
        }
        return;
    }
    let mut buf = vec![0; parts];
    go(n, 0, &mut buf, f);
}

/// All compositions, collected.
pub fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for_each_composition(n, parts, &mut |c| out.push(c.to_vec()));
    out
}

/// `ln (n! / prod c_i!)`.
pub fn ln_multinomial(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    ln_factorial(n as u64) - counts.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>()
}

/// `ln P[type]` for `n` i.i.d. letters with probabilities `p`.
pub fn ln_type_prob(counts: &[usize], p: &[f64]) -> f64 {
    let mut v = ln_multinomial(counts);
    for (&c, &q) in counts.iter().zip(p) {
        if c > 0 {
            if q <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v += c as f64 * q.ln();
        }
    }
    v
}

/// Calls `f` on every conditional type given an x-type: a flat
/// `n_x * n_z` count matrix whose row `a` sums to `x_type[a]`.
pub fn for_each_conditional_type(x_type: &[usize], n_z: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(a: usize, x_type: &[usize], n_z: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if a == x_type.len() {
            f(buf);
            return;
        }
        for_each_composition(x_type[a], n_z, &mut |row| {
            buf[a * n_z..(a + 1) * n_z].copy_from_slice(row);
            go(a + 1, x_type, n_z, buf, f);
        });
    }
    let mut buf = vec![0; x_type.len() * n_z];
    go(0, x_type, n_z, &mut buf, f);
}

/// Number of conditional types given an x-type.
pub fn count_conditional_types(x_type: &[usize], n_z: usize) -> f64 {
    x_type.iter().map(|&n| count_compositions(n, n_z)).product()
}

/// Counts of each symbol in a block.
pub fn type_of(block: &[usize], alphabet: usize) -> Vec<usize> {
    let mut t = vec![0; alphabet];
    for &a in block {
        t[a] += 1;
    }
    t
}

/// Flat pair counts of two aligned blocks.
pub fn pair_type(x: &[usize], z: &[usize], n_x: usize, n_z: usize) -> Vec<usize> {
    let mut t = vec![0; n_x * n_z];
    for (&a, &b) in x.iter().zip(z) {
        t[a * n_z + b] += 1;
    }
    t
}

/// Block with index `idx` in mixed radix, first letter least significant.
pub fn block_from_index(mut idx: usize, k: usize, alphabet: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        out.push(idx % alphabet);
        idx /= alphabet;
    }
    out
}

/// `alphabet^k` if it is at most `cap`.
pub fn block_count(alphabet: usize, k: usize, cap: usize) -> Option<usize> {
    let mut n: usize = 1;
    for _ in 0..k {
        n = n.checked_mul(alphabet)?;
        if n > cap {
            return None;
        }
    }
    Some(n)
}
