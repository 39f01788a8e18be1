use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{doubled_ranks, tie_term, Method, TestResult};
use crate::error::{Error, Result};

/// Kruskal-Wallis H with tie correction; p from the chi-squared upper tail
/// with `k - 1` degrees of freedom.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("kruskal_wallis needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::EmptyInput("kruskal_wallis groups must be non-empty"));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let n = pooled.len() as f64;
    let (ranks2, ties) = doubled_ranks(&pooled);
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks2[offset..offset + g.len()].iter().map(|&r| r as f64 / 2.0).sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let correction = 1.0 - tie_term(&ties) / (n * n * n - n);
    let h = if correction <= 0.0 {
        0.0
    } else {
        ((12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0)) / correction).max(0.0)
    };
    let df = (groups.len() - 1) as f64;
    let p = ChiSquared::new(df)
        .map(|d| d.sf(h))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(TestResult {
        statistic: h,
        p_value: p.clamp(0.0, 1.0),
        method: Method::ChiSquared,
        n_effective: pooled.len(),
        zeros_dropped: 0,
    })
}
