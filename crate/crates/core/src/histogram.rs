//! Equal-width histograms fitted by maximum likelihood and scored in bits.

use serde::{Deserialize, Serialize};

use crate::codes::{regret_bits, rissanen_bits, RegretCache};
use crate::error::{Error, Result};
use crate::types::{bin_index, Bounds, FittedHistogram};

/// The MDL cost of one leaf holding a histogram with `h` bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafScore {
    pub h: usize,
    pub n: u64,
    pub nll_bits: f64,
    pub regret_bits: f64,
    /// Universal code for `h`.
    pub bin_code_bits: f64,
    pub total_bits: f64,
}

fn check_values(values: &[f64], bounds: Bounds) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !bounds.contains(v) {
            return Err(Error::OutOfBounds {
                value: v,
                lower: bounds.lower,
                upper: bounds.upper,
                location: format!("index {i}"),
            });
        }
    }
    Ok(())
}

fn count_bins(values: &[f64], bounds: Bounds, h: usize) -> Vec<u64> {
    let mut counts = vec![0u64; h];
    for &v in values {
        // values are pre-checked
        let j = bin_index(bounds, h, v).expect("value within bounds");
        counts[j] += 1;
    }
    counts
}

fn nll_bits_of(counts: &[u64], n: u64, width: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let log_nw = (n as f64).log2() + width.log2();
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * (c.log2() - log_nw)
        })
        .sum::<f64>()
}

/// Bins `values` into `h` equal-width bins over `bounds`.
pub fn fit_histogram(values: &[f64], bounds: Bounds, h: usize) -> Result<FittedHistogram> {
    if h < 1 {
        return Err(Error::Domain("histogram needs h ≥ 1".into()));
    }
    check_values(values, bounds)?;
    Ok(FittedHistogram {
        bounds,
        h,
        counts: count_bins(values, bounds, h),
        n: values.len() as u64,
    })
}

/// Negative log₂ of the maximized likelihood of the histogram's own data.
pub fn histogram_nll_bits(hist: &FittedHistogram) -> f64 {
    nll_bits_of(&hist.counts, hist.n, hist.bin_width())
}

fn score_prechecked(values: &[f64], bounds: Bounds, h: usize, cache: &RegretCache) -> LeafScore {
    let n = values.len() as u64;
    let counts = count_bins(values, bounds, h);
    let nll_bits = nll_bits_of(&counts, n, bounds.width() / h as f64);
    let regret_bits = regret_bits(n, h, cache);
    let bin_code_bits = rissanen_bits(h as u64);
    LeafScore {
        h,
        n,
        nll_bits,
        regret_bits,
        bin_code_bits,
        total_bits: nll_bits + regret_bits + bin_code_bits,
    }
}

pub fn leaf_score(
    values: &[f64],
    bounds: Bounds,
    h: usize,
    cache: &RegretCache,
) -> Result<LeafScore> {
    if h < 1 {
        return Err(Error::Domain("histogram needs h ≥ 1".into()));
    }
    check_values(values, bounds)?;
    Ok(score_prechecked(values, bounds, h, cache))
}

/// Finds the bin count with the lowest leaf score.
///
/// Scans `h = 1, g+1, 2g+1, …` until the score stops improving at some
/// `h'`, then searches every `h` in `[max(1, h' − 2g), h']` exhaustively.
/// Ties go to the smaller `h`.
pub fn optimal_histogram(
    values: &[f64],
    bounds: Bounds,
    g: usize,
    cache: &RegretCache,
) -> Result<LeafScore> {
    if g < 1 {
        return Err(Error::InvalidConfig("g must be ≥ 1".into()));
    }
    check_values(values, bounds)?;
    Ok(optimal_prechecked(values, bounds, g, cache))
}

pub(crate) fn optimal_prechecked(
    values: &[f64],
    bounds: Bounds,
    g: usize,
    cache: &RegretCache,
) -> LeafScore {
    let mut h = 1;
    let mut best = f64::INFINITY;
    loop {
        let s = score_prechecked(values, bounds, h, cache).total_bits;
        if s < best {
            best = s;
            h += g;
        } else {
            break;
        }
    }
    let low = h.saturating_sub(2 * g).max(1);
    let mut winner: Option<LeafScore> = None;
    for cand in low..=h {
        let s = score_prechecked(values, bounds, cand, cache);
        if winner.is_none_or(|w| s.total_bits < w.total_bits) {
            winner = Some(s);
        }
    }
    winner.expect("range is non-empty")
}
