use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_Q: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrResult {
    /// Adjusted p-values in input order.
    pub adjusted_p: Vec<f64>,
    pub rejected: Vec<bool>,
    pub q: f64,
}

/// Benjamini-Hochberg step-up procedure at level `q`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<FdrResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0, 1), got {q}")));
    }
    if let Some(bad) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("p-values must lie in [0, 1], got {bad}")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));

    let mut cutoff = 0;
    for (i, &k) in order.iter().enumerate() {
        if p_values[k] <= (i + 1) as f64 * q / m as f64 {
            cutoff = i + 1;
        }
    }

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (i, &k) in order.iter().enumerate().rev() {
        running = running.min((m as f64 * p_values[k] / (i + 1) as f64).min(1.0));
        adjusted[k] = running;
    }
    let mut rejected = vec![false; m];
    for &k in &order[..cutoff] {
        rejected[k] = true;
    }
    Ok(FdrResult {
        adjusted_p: adjusted,
        rejected,
        q,
    })
}
