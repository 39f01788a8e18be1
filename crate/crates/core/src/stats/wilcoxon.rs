use super::{doubled_ranks, normal_two_sided, tie_term, two_sided_from_counts, Method, MethodChoice, TestResult};
use crate::error::{Error, Result};

/// Largest number of nonzero differences handled by the exact null.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Paired signed-rank test on differences. Zeros are dropped; `W` is the sum
/// of ranks of positive differences, using average ranks for tied `|d|`.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestResult> {
    wilcoxon_signed_rank_with(diffs, MethodChoice::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], choice: MethodChoice) -> Result<TestResult> {
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::InvalidArgument("differences contain NaN".into()));
    }
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let zeros_dropped = diffs.len() - nonzero.len();
    let n = nonzero.len();
    if n == 0 {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks2, ties) = doubled_ranks(&abs);
    let w2: u64 = nonzero
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let statistic = w2 as f64 / 2.0;

    let exact = match choice {
        MethodChoice::Auto => n <= WILCOXON_EXACT_MAX_N,
        MethodChoice::Exact => true,
        MethodChoice::NormalApprox => false,
    };
    let (p_value, method) = if exact {
        (exact_p(&ranks2, w2), Method::Exact)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
        (normal_two_sided(statistic, mean, var), Method::NormalApprox)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method,
        n_effective: n,
        zeros_dropped,
    })
}

/// Null distribution of the doubled statistic over all 2^n sign patterns,
/// built by convolving one rank at a time.
fn exact_p(ranks2: &[u64], w2: u64) -> f64 {
    let max: usize = ranks2.iter().sum::<u64>() as usize;
    let mut counts = vec![0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    two_sided_from_counts(&counts, w2 as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_positive_five() {
        let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.statistic, 15.0);
        assert_eq!(r.method, Method::Exact);
        assert!((r.p_value - 2.0 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn antisymmetric_pair() {
        let r = wilcoxon_signed_rank(&[-1.0, 1.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn zeros_are_dropped() {
        let r = wilcoxon_signed_rank(&[0.0, 1.0, 2.0, 0.0]).unwrap();
        assert_eq!((r.n_effective, r.zeros_dropped), (2, 2));
        assert!(matches!(wilcoxon_signed_rank(&[0.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn large_sample_uses_normal() {
        let d: Vec<f64> = (1..=40).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let r = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!(r.method, Method::NormalApprox);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }
}
