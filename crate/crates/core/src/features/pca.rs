use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which eigenproblem to solve. `Auto` uses the n x n Gram matrix when there
/// are fewer samples than features and the p x p covariance otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PcaRoute {
    #[default]
    Auto,
    Gram,
    Covariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal principal axes, one row per component.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component (denominator n - 1).
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub n_samples: usize,
}

impl PcaModel {
    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance.iter().map(|v| v / self.total_variance).collect()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }
}

/// Fits `k` principal components to `samples` (one row per sample).
///
/// Components with zero variance are completed to an orthonormal set
/// deterministically; each component's largest-magnitude coordinate is made
/// positive.
pub fn pca_fit(samples: &[Vec<f64>], k: usize, route: PcaRoute) -> Result<PcaModel> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("PCA needs at least two samples, got {n}")));
    }
    let p = samples[0].len();
    if p == 0 || samples.iter().any(|s| s.len() != p) {
        return Err(Error::InvalidArgument("PCA samples must share a nonzero feature length".into()));
    }
    if k == 0 || k > p.min(n - 1) {
        return Err(Error::InvalidArgument(format!(
            "n_components must be in 1..={}, got {k}",
            p.min(n - 1)
        )));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("PCA input contains non-finite values".into()));
    }

    let mut mean = vec![0.0; p];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, p, |i, j| samples[i][j] - mean[j]);
    let ss = x.iter().map(|v| v * v).sum::<f64>();
    if ss == 0.0 {
        return Err(Error::Degenerate("all samples are identical (zero variance)".into()));
    }
    let dof = (n - 1) as f64;

    let use_gram = match route {
        PcaRoute::Auto => n <= p,
        PcaRoute::Gram => true,
        PcaRoute::Covariance => false,
    };
    let (eigvals, vectors) = if use_gram {
        let eig = SymmetricEigen::new(&x * x.transpose());
        let order = descending(&eig.eigenvalues);
        let lmax = eig.eigenvalues[order[0]].max(0.0);
        let mut vals = Vec::with_capacity(k);
        let mut vecs: Vec<Option<DVector<f64>>> = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let l = eig.eigenvalues[i];
            if l > lmax * 1e-12 && l > 0.0 {
                let v = x.transpose() * eig.eigenvectors.column(i) / l.sqrt();
                vecs.push(Some(v));
                vals.push(l);
            } else {
                vecs.push(None);
                vals.push(0.0);
            }
        }
        (vals, vecs)
    } else {
        let eig = SymmetricEigen::new(x.transpose() * &x);
        let order = descending(&eig.eigenvalues);
        let lmax = eig.eigenvalues[order[0]].max(0.0);
        let mut vals = Vec::with_capacity(k);
        let mut vecs = Vec::with_capacity(k);
        for &i in order.iter().take(k) {
            let l = eig.eigenvalues[i];
            if l > lmax * 1e-12 && l > 0.0 {
                vecs.push(Some(eig.eigenvectors.column(i).into_owned()));
                vals.push(l);
            } else {
                vecs.push(None);
                vals.push(0.0);
            }
        }
        (vals, vecs)
    };

    let components = orthonormalize(vectors, p);
    Ok(PcaModel {
        mean,
        components,
        explained_variance: eigvals.iter().map(|l| l / dof).collect(),
        total_variance: ss / dof,
        n_samples: n,
    })
}

fn descending(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Modified Gram-Schmidt over the computed axes; missing axes are filled from
/// the standard basis.
fn orthonormalize(vectors: Vec<Option<DVector<f64>>>, p: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    let mut next_unit = 0;
    for v in vectors {
        let mut v = match v {
            Some(v) => reject(v, &basis),
            None => DVector::zeros(p),
        };
        while v.norm() < 1e-6 {
            let mut e = DVector::zeros(p);
            e[next_unit] = 1.0;
            next_unit += 1;
            v = reject(e, &basis);
        }
        v /= v.norm();
        let lead = v.iter().enumerate().fold((0, 0.0f64), |best, (i, x)| {
            if x.abs() > best.1.abs() { (i, *x) } else { best }
        });
        if lead.1 < 0.0 {
            v.neg_mut();
        }
        basis.push(v);
    }
    basis.into_iter().map(|v| v.iter().copied().collect()).collect()
}

fn reject(mut v: DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    for b in basis {
        let d = b.dot(&v);
        v.axpy(-d, b, 1.0);
    }
    v
}

/// Projects samples onto the fitted components.
pub fn pca_project(model: &PcaModel, samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|s| {
            if s.len() != model.n_features() {
                return Err(Error::InvalidArgument(format!(
                    "sample has {} features, model expects {}",
                    s.len(),
                    model.n_features()
                )));
            }
            Ok(model
                .components
                .iter()
                .map(|c| c.iter().zip(s).zip(&model.mean).map(|((c, x), m)| c * (x - m)).sum())
                .collect())
        })
        .collect()
}
