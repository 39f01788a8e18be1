//! Rank-based hypothesis tests and Benjamini-Hochberg FDR control.
//!
//! All p-values are two-sided.

mod fdr;
mod kruskal;
mod mann_whitney;
mod wilcoxon;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

pub use fdr::{bh_fdr, FdrResult, DEFAULT_Q};
pub use kruskal::kruskal_wallis;
pub use mann_whitney::{mann_whitney_u, mann_whitney_u_with, MWU_EXACT_MAX_N};
pub use wilcoxon::{wilcoxon_signed_rank, wilcoxon_signed_rank_with, WILCOXON_EXACT_MAX_N};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    NormalApprox,
    ChiSquared,
}

/// Which null distribution to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodChoice {
    /// Exact below the size limit, asymptotic above it.
    #[default]
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
    /// Observations that entered the test (after zero removal for the
    /// signed-rank test).
    pub n_effective: usize,
    /// Zero differences discarded before ranking.
    #[serde(default)]
    pub zeros_dropped: usize,
}

/// Significance marks on a (typically adjusted) p-value.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Average ranks (1-based) of `values`, returned as doubled ranks so they are
/// integers, together with the sizes of tie blocks larger than one.
pub(crate) fn doubled_ranks(values: &[f64]) -> (Vec<u64>, Vec<u64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j+1, average doubled = (i+1) + (j+1)
        let r2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            ranks[k] = r2;
        }
        if j > i {
            ties.push((j - i + 1) as u64);
        }
        i = j + 1;
    }
    (ranks, ties)
}

pub(crate) fn tie_term(ties: &[u64]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Two-sided normal tail with a 0.5 continuity correction.
pub(crate) fn normal_two_sided(stat: f64, mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((stat - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

/// `min(1, 2 * min(P(X <= x), P(X >= x)))` from a count table indexed by
/// the (integer-scaled) statistic.
pub(crate) fn two_sided_from_counts(counts: &[f64], observed: usize) -> f64 {
    let total: f64 = counts.iter().sum();
    let lower: f64 = counts[..=observed.min(counts.len() - 1)].iter().sum();
    let upper: f64 = counts[observed.min(counts.len())..].iter().sum();
    (2.0 * lower.min(upper) / total).min(1.0)
}
