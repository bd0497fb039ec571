//! Self-contained statistics: percentile bootstrap, Wilcoxon signed-rank,
//! Holm step-down.
//!
//! Everything here is deterministic given its inputs (and the bootstrap
//! seed); the exact Wilcoxon path enumerates the sign-flip distribution by
//! dynamic programming, so tests can cross-check it against brute force.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate: no nonzero pairs")]
    Degenerate,
    #[error("confidence level must be in (0, 1)")]
    BadLevel,
    #[error("resamples must be at least 1")]
    NoResamples,
}

// ---------------------------------------------------------------------------
// Percentile bootstrap
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub half_width: f64,
    pub level: f64,
    pub resamples: usize,
}

/// Percentile `q` of `sorted` as an order statistic: the smallest element
/// whose empirical CDF reaches `q`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Percentile bootstrap over per-task values: resample tasks with
/// replacement, take the mean of each resample, and read the interval off
/// the resample-mean distribution.
pub fn bootstrap_ci(
    values: &[f64],
    resamples: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapCi, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel);
    }
    let n = values.len();
    let mut rng = SplitMix64::new(seed);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += values[rng.next_below(n as u64) as usize];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("resample means are finite"));
    let alpha = 1.0 - level;
    let lo = percentile(&means, alpha / 2.0);
    let hi = percentile(&means, 1.0 - alpha / 2.0);
    Ok(BootstrapCi {
        mean: values.iter().sum::<f64>() / n as f64,
        lo,
        hi,
        half_width: (hi - lo) / 2.0,
        level,
        resamples,
    })
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs remaining after zero differences are dropped.
    pub n_pairs: usize,
    /// W+: the sum of ranks of positive differences.
    pub statistic: f64,
    pub p_value: f64,
    pub method: String,
}

/// Largest n for which the exact sign-flip distribution is enumerated.
pub const WILCOXON_EXACT_MAX: usize = 25;

/// Midranks of |diffs|, doubled so ties stay integral.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let n = abs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs[a].partial_cmp(&abs[b]).expect("finite diffs"));
    let mut out = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the midrank; doubled sum = (i + j + 2).
        let doubled = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            out[k] = doubled;
        }
        i = j + 1;
    }
    out
}

/// Exact tail probabilities of W+ over all 2^n equiprobable sign
/// assignments, via DP over doubled ranks. Counts stay exact in f64 up to
/// n = 25 (2^25 < 2^53).
fn exact_tails(ranks2: &[u64], observed2: u64) -> (f64, f64) {
    let total: u64 = ranks2.iter().sum();
    let mut dp = vec![0.0f64; total as usize + 1];
    dp[0] = 1.0;
    for &r in ranks2 {
        for w in (r as usize..dp.len()).rev() {
            dp[w] += dp[w - r as usize];
        }
    }
    let all: f64 = 2f64.powi(ranks2.len() as i32);
    let le: f64 = dp[..=observed2 as usize].iter().sum();
    let ge: f64 = dp[observed2 as usize..].iter().sum();
    (le / all, ge / all)
}

/// Standard normal CDF via Abramowitz–Stegun 7.1.26 (|error| < 7.5e-8).
pub fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * x.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x * x).exp();
    let erf = if x < 0.0 { -erf } else { erf };
    0.5 * (1.0 + erf)
}

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped; all-zero input is the degenerate error. Exact enumeration up to
/// [`WILCOXON_EXACT_MAX`] pairs, tie-corrected normal approximation above.
pub fn wilcoxon_signed_rank(
    diffs: &[f64],
    alternative: Alternative,
) -> Result<WilcoxonResult, StatsError> {
    if diffs.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(StatsError::Degenerate);
    }
    let n = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks2 = doubled_ranks(&abs);
    let w_plus2: u64 = nonzero
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let statistic = w_plus2 as f64 / 2.0;

    let (p_value, method) = if n <= WILCOXON_EXACT_MAX {
        let (le, ge) = exact_tails(&ranks2, w_plus2);
        let p = match alternative {
            Alternative::Greater => ge,
            Alternative::Less => le,
            Alternative::TwoSided => (2.0 * le.min(ge)).min(1.0),
        };
        (p, "exact")
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // Tie correction subtracts sum(t^3 - t)/48 over tie groups.
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite diffs"));
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = (statistic - mean) / var.sqrt();
        let p = match alternative {
            Alternative::Greater => 1.0 - normal_cdf(z),
            Alternative::Less => normal_cdf(z),
            Alternative::TwoSided => (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0),
        };
        (p, "normal")
    };
    Ok(WilcoxonResult {
        n_pairs: n,
        statistic,
        p_value,
        method: method.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Holm step-down
// ---------------------------------------------------------------------------

/// Holm step-down adjustment; returns adjusted p-values in input order.
pub fn holm_adjust(pvalues: &[f64]) -> Vec<f64> {
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].partial_cmp(&pvalues[b]).expect("finite p"));
    let mut adjusted = vec![0.0f64; m];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        let scaled = ((m - i) as f64 * pvalues[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    adjusted
}

/// Median with the usual even-length average.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}
