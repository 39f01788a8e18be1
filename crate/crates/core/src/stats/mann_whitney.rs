use super::{doubled_ranks, normal_two_sided, tie_term, two_sided_from_counts, Method, MethodChoice, TestResult};
use crate::error::{Error, Result};

/// Largest combined sample size handled by the exact null (tie-free data only).
pub const MWU_EXACT_MAX_N: usize = 20;

/// Two-sample rank-sum test. The statistic is `U` of sample `a`:
/// `R_a - n_a (n_a + 1) / 2`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    mann_whitney_u_with(a, b, MethodChoice::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], choice: MethodChoice) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("mann_whitney_u needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks2, ties) = doubled_ranks(&pooled);
    let ra2: u64 = ranks2[..na].iter().sum();
    // doubled U = 2 R_a - n_a (n_a + 1)
    let u2 = ra2 - (na * (na + 1)) as u64;
    let statistic = u2 as f64 / 2.0;

    let exact = match choice {
        MethodChoice::Auto => n <= MWU_EXACT_MAX_N && ties.is_empty(),
        MethodChoice::Exact => {
            if !ties.is_empty() {
                return Err(Error::InvalidArgument("exact Mann-Whitney null requires tie-free data".into()));
            }
            true
        }
        MethodChoice::NormalApprox => false,
    };
    let (p_value, method) = if exact {
        (exact_p(na, nb, (u2 / 2) as usize), Method::Exact)
    } else {
        let (fa, fb, fnn) = (na as f64, nb as f64, n as f64);
        let mean = fa * fb / 2.0;
        let var = fa * fb / 12.0 * ((fnn + 1.0) - tie_term(&ties) / (fnn * (fnn - 1.0)));
        (normal_two_sided(statistic, mean, var), Method::NormalApprox)
    };
    Ok(TestResult {
        statistic,
        p_value,
        method,
        n_effective: n,
        zeros_dropped: 0,
    })
}

/// Number of arrangements giving each `U` in `0..=na*nb`, via the recursion
/// `c(m, k, u) = c(m - 1, k, u - k) + c(m, k - 1, u)`.
fn exact_p(na: usize, nb: usize, u: usize) -> f64 {
    let umax = na * nb;
    // table[k][u] for the current m; start with m = 0: only u = 0
    let mut prev: Vec<Vec<f64>> = (0..=nb)
        .map(|_| {
            let mut v = vec![0.0; umax + 1];
            v[0] = 1.0;
            v
        })
        .collect();
    for _m in 1..=na {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; umax + 1]; nb + 1];
        // k = 0: only one arrangement, U = 0
        cur[0][0] = 1.0;
        for k in 1..=nb {
            for uu in 0..=umax {
                let from_a = if uu >= k { prev[k][uu - k] } else { 0.0 };
                cur[k][uu] = from_a + cur[k - 1][uu];
            }
        }
        prev = cur;
    }
    two_sided_from_counts(&prev[nb], u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_pairs() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.method, Method::Exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn identical_multisets() {
        let a = [1.0, 2.0, 3.0, 3.0];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn extreme_ten_ten() {
        let a: Vec<f64> = (1..=10).map(f64::from).collect();
        let b: Vec<f64> = (11..=20).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 2.0 / 184756.0).abs() < 1e-18);
        let swapped = mann_whitney_u(&b, &a).unwrap();
        assert_eq!(swapped.statistic, 100.0);
        assert_eq!(swapped.p_value, r.p_value);
    }

    #[test]
    fn empty_group() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }
}
