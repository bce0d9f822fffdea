//! Code-length primitives, all in bits.
//!
//! * [`rissanen_code_length`]: universal code for positive integers.
//! * [`log2_catalan`]: cost of naming one full binary tree shape.
//! * [`log_multinomial_regret`]: log₂ of the NML normalizer of a
//!   `k`-category multinomial over `n` samples, which is also the regret of
//!   an equal-width histogram with `k` bins.

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::sync::RwLock;

use crate::error::{Error, Result};

/// Constant of Rissanen's universal integer code.
pub const RISSANEN_CONSTANT: f64 = 2.865064;

/// `log₂ c + log₂ n + log₂ log₂ n + …`, keeping only positive terms.
pub fn rissanen_code_length(n: u64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain("universal integer code needs n ≥ 1".into()));
    }
    Ok(rissanen_bits(n))
}

/// Infallible form of [`rissanen_code_length`] for internal callers that
/// already guarantee `n ≥ 1`.
pub(crate) fn rissanen_bits(n: u64) -> f64 {
    debug_assert!(n >= 1);
    let mut bits = RISSANEN_CONSTANT.log2();
    let mut term = (n as f64).log2();
    while term > 0.0 {
        bits += term;
        term = term.log2();
    }
    bits
}

/// log₂ of the Catalan number `(2k)! / ((k+1)! k!)`.
pub fn log2_catalan(k: u64) -> f64 {
    // C_k = prod_{i=2..k} (k + i) / i
    (2..=k).map(|i| ((k + i) as f64 / i as f64).log2()).sum()
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Natural log of R(n, 2) = Σ_a binom(n, a) (a/n)^a ((n−a)/n)^(n−a).
fn ln_binary_regret(n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    let ln_n = nf.ln();
    let mut terms = Vec::with_capacity(n as usize + 1);
    let mut ln_binom = 0.0;
    for a in 0..=n {
        if a > 0 {
            ln_binom += ((n - a + 1) as f64).ln() - (a as f64).ln();
        }
        let af = a as f64;
        let bf = (n - a) as f64;
        // 0^0 = 1
        let mut t = ln_binom;
        if a > 0 {
            t += af * (af.ln() - ln_n);
        }
        if a < n {
            t += bf * (bf.ln() - ln_n);
        }
        terms.push(t);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Memo of log₂ R(n, k). Safe to share between threads.
///
/// For each `n` the table holds a prefix `k = 1, 2, …, K` grown on demand
/// by the recurrence R(n, k) = R(n, k−1) + n/(k−2) · R(n, k−2).
#[derive(Debug, Default)]
pub struct RegretCache {
    // ln R(n, k) stored at index k − 1
    memo: RwLock<HashMap<u64, Vec<f64>>>,
}

impl RegretCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn lookup(&self, n: u64, k: usize) -> Option<f64> {
        let memo = self.memo.read().unwrap_or_else(|e| e.into_inner());
        memo.get(&n).and_then(|row| row.get(k - 1).copied())
    }

    fn ln_regret(&self, n: u64, k: usize) -> f64 {
        if let Some(v) = self.lookup(n, k) {
            return v;
        }
        // Build the base case outside the lock; it is O(n).
        let has_row = {
            let memo = self.memo.read().unwrap_or_else(|e| e.into_inner());
            memo.contains_key(&n)
        };
        let base = if has_row {
            None
        } else {
            Some(ln_binary_regret(n))
        };

        let mut memo = self.memo.write().unwrap_or_else(|e| e.into_inner());
        let row = memo
            .entry(n)
            .or_insert_with(|| vec![0.0, base.expect("base computed for new row")]);
        let ln_n = (n as f64).ln();
        while row.len() < k {
            let next = row.len() + 1; // category count being added, ≥ 3
            let v = log_add_exp(
                row[next - 2],
                ln_n - ((next - 2) as f64).ln() + row[next - 3],
            );
            row.push(v);
        }
        row[k - 1]
    }

    /// Number of distinct sample counts memoized so far.
    pub fn len(&self) -> usize {
        self.memo.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// log₂ R(n, k), the regret of a `k`-bin histogram over `n` samples.
pub fn log_multinomial_regret(n: u64, k: usize, cache: &RegretCache) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("regret needs k ≥ 1 categories".into()));
    }
    Ok(regret_bits(n, k, cache))
}

pub(crate) fn regret_bits(n: u64, k: usize, cache: &RegretCache) -> f64 {
    debug_assert!(k >= 1);
    if n == 0 || k == 1 {
        return 0.0;
    }
    cache.ln_regret(n, k) / LN_2
}

/// Brute-force log₂ R(n, k) by enumerating every composition of `n` into `k`
/// non-negative parts. Independent of the recurrence; meant for checking it.
pub fn regret_oracle(n: u32, k: u32) -> Result<f64> {
    if n > 12 || !(1..=6).contains(&k) {
        return Err(Error::Domain(format!(
            "regret oracle limited to n ≤ 12 and 1 ≤ k ≤ 6, got n = {n}, k = {k}"
        )));
    }
    fn factorial(x: u32) -> f64 {
        (1..=x).map(f64::from).product()
    }
    fn walk(remaining: u32, parts_left: u32, n: u32, parts: &mut Vec<u32>, acc: &mut f64) {
        if parts_left == 1 {
            parts.push(remaining);
            let nf = f64::from(n);
            let mut term = factorial(n);
            for &p in parts.iter() {
                term /= factorial(p);
                if p > 0 {
                    term *= (f64::from(p) / nf).powi(p as i32);
                }
            }
            *acc += term;
            parts.pop();
            return;
        }
        for p in 0..=remaining {
            parts.push(p);
            walk(remaining - p, parts_left - 1, n, parts, acc);
            parts.pop();
        }
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    walk(n, k, n, &mut Vec::new(), &mut total);
    Ok(total.log2())
}
