//! Wilcoxon signed-rank test with Bonferroni adjustment.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::EvalError;

/// Largest sample size for which the exact null distribution is used.
pub const EXACT_MAX_N: usize = 25;

/// Minimum number of non-zero differences.
pub const MIN_PAIRS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PMethod {
    /// Exact for `n <= 25`, normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Non-zero differences after dropping ties at zero.
    pub n: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// `min(1, p * m)`.
    pub adjusted_p: f64,
    pub method: PMethod,
}

pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], comparisons: usize) -> Result<WilcoxonResult, EvalError> {
    wilcoxon_signed_rank_with(a, b, comparisons, PMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(
    a: &[f64],
    b: &[f64],
    comparisons: usize,
    method: PMethod,
) -> Result<WilcoxonResult, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch { left: a.len(), right: b.len() });
    }
    if comparisons == 0 {
        return Err(EvalError::NoComparisons);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(EvalError::TooFewPairs { n });
    }
    let (ranks, tie_sizes) = tied_ranks(&diffs);
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let statistic = w_plus.min(w_minus);

    let method = match method {
        PMethod::Auto if n <= EXACT_MAX_N => PMethod::Exact,
        PMethod::Auto => PMethod::Normal,
        m => m,
    };
    let p_value = match method {
        PMethod::Exact => exact_p(&ranks, statistic),
        _ => normal_p(n, &tie_sizes, statistic),
    };
    Ok(WilcoxonResult { n, w_plus, w_minus, statistic, p_value, adjusted_p: bonferroni(p_value, comparisons), method })
}

pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons as f64).min(1.0)
}

/// Ranks of `|d|` with ties averaged, plus the size of every tie group.
fn tied_ranks(diffs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0.0; diffs.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // Positions start+1..=end share their mean rank.
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

/// Exact two-sided p from the null distribution of W+ under random signs.
/// Tie-averaged ranks are half-integers, so the distribution is built over
/// doubled ranks.
fn exact_p(ranks: &[f64], statistic: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let threshold = (statistic * 2.0).round() as usize;
    let tail: u64 = counts[..=threshold].iter().sum();
    let p = 2.0 * tail as f64 / 2f64.powi(ranks.len() as i32);
    p.min(1.0)
}

/// Normal approximation with tie correction on the variance and a 0.5
/// continuity correction.
fn normal_p(n: usize, tie_sizes: &[usize], statistic: f64) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_too_few_pairs() {
        let a = [0.5; 10];
        assert_eq!(wilcoxon_signed_rank(&a, &a, 1), Err(EvalError::TooFewPairs { n: 0 }));
    }

    #[test]
    fn all_positive_differences() {
        // Every sign positive: S = 0, p = 2 / 2^n.
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let b = [0.0; 8];
        let r = wilcoxon_signed_rank(&a, &b, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.w_plus, 36.0);
        assert_eq!(r.p_value, 2.0 / 256.0);
        assert_eq!(r.method, PMethod::Exact);
    }

    #[test]
    fn tie_ranks_are_averaged() {
        let (ranks, ties) = tied_ranks(&[1.0, -1.0, 2.0, 3.0, -3.0, 3.0]);
        assert_eq!(ranks, vec![1.5, 1.5, 3.0, 5.0, 5.0, 5.0]);
        assert_eq!(ties, vec![2, 1, 3]);
    }

    #[test]
    fn bonferroni_scales_and_clamps() {
        assert!((bonferroni(0.02, 3) - 0.06).abs() < 1e-15);
        assert_eq!(bonferroni(0.5, 3), 1.0);
    }

    #[test]
    fn argument_errors() {
        assert_eq!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0], 1), Err(EvalError::LengthMismatch { left: 1, right: 2 }));
        assert_eq!(wilcoxon_signed_rank(&[1.0; 6], &[0.0; 6], 0), Err(EvalError::NoComparisons));
    }
}
