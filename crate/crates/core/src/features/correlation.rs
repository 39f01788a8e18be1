use crate::error::{Error, Result};
use crate::stats::doubled_ranks;

/// Pearson product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "pearson needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson input is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Maps values to `(rank - 1) / (n - 1)` with average ranks for ties;
/// a single value maps to 0.5.
pub fn quantile_transform(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 1 {
        return vec![0.5];
    }
    doubled_ranks(values)
        .0
        .into_iter()
        .map(|r2| (r2 as f64 / 2.0 - 1.0) / (n - 1) as f64)
        .collect()
}

/// `result[i][j]` = correlation of covariate `i` with embedding column `j`;
/// `None` where either side is constant.
pub fn correlation_matrix(covariates: &[Vec<f64>], embedding: &[Vec<f64>]) -> Result<Vec<Vec<Option<f64>>>> {
    let k = embedding.first().map_or(0, Vec::len);
    let columns: Vec<Vec<f64>> = (0..k).map(|j| embedding.iter().map(|row| row[j]).collect()).collect();
    covariates
        .iter()
        .map(|cov| {
            columns
                .iter()
                .map(|col| match pearson(cov, col) {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::Degenerate(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect()
        })
        .collect()
}
