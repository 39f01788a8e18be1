use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evaluate::{TOOL_NAME, VERSION};
use super::output::{csv_writer, finish};
use crate::error::{Error, Result};
use crate::features::{
    load_feature_tensor, pca_fit, pca_project, quantile_transform, reduce_tensor, FeatureVector, PcaModel, PcaRoute,
};
use crate::format::{fmt6, fmt6_opt};

const META_COLUMNS: [&str; 5] = ["scan_id", "split", "site", "modality", "field_strength"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
        }
    }
}

/// Named numeric covariate columns aligned with the scan list; `None` marks
/// a missing value.
pub type Covariates = Vec<(String, Vec<Option<f64>>)>;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanMeta {
    pub scan_id: String,
    pub split: Partition,
    pub site: String,
    pub modality: String,
    pub field_strength: String,
}

/// Scan metadata CSV: `scan_id,split,site,modality,field_strength` followed
/// by any numeric covariate columns (empty cells are missing values).
pub fn read_scan_metadata(path: impl AsRef<Path>) -> Result<(Vec<ScanMeta>, Covariates)> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::schema(path, 0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::schema(path, 1, e.to_string()))?.clone();
    let mut pos = [0usize; 5];
    for (k, col) in META_COLUMNS.iter().enumerate() {
        pos[k] = headers
            .iter()
            .position(|h| h == *col)
            .ok_or_else(|| Error::schema(path, 1, format!("missing column {col:?}")))?;
    }
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !META_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let mut covariates: Covariates = cov_cols.iter().map(|(_, h)| (h.clone(), Vec::new())).collect();
    let mut scans = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::schema(path, row, e.to_string()))?;
        let split = match &rec[pos[1]] {
            "train" => Partition::Train,
            "test" => Partition::Test,
            other => return Err(Error::schema(path, row, format!("split must be train or test, got {other:?}"))),
        };
        let scan_id = rec[pos[0]].to_string();
        if !seen.insert(scan_id.clone()) {
            return Err(Error::schema(path, row, format!("duplicate scan_id {scan_id:?}")));
        }
        for ((ci, name), (_, col)) in cov_cols.iter().zip(covariates.iter_mut()) {
            let cell = &rec[*ci];
            col.push(if cell.is_empty() {
                None
            } else {
                Some(
                    cell.parse()
                        .map_err(|_| Error::schema(path, row, format!("{name}: {cell:?} is not a number")))?,
                )
            });
        }
        scans.push(ScanMeta {
            scan_id,
            split,
            site: rec[pos[2]].to_string(),
            modality: rec[pos[3]].to_string(),
            field_strength: rec[pos[4]].to_string(),
        });
    }
    if scans.is_empty() {
        return Err(Error::schema(path, 0, "metadata has no rows"));
    }
    Ok((scans, covariates))
}

#[derive(Debug, Clone)]
pub struct ExplainOptions {
    pub n_components: usize,
    pub route: PcaRoute,
    /// Covariates mapped through the rank quantile transform before
    /// correlation.
    pub quantile: Vec<String>,
    pub jobs: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            n_components: 3,
            route: PcaRoute::Auto,
            quantile: Vec::new(),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub covariate: String,
    pub quantile_transformed: bool,
    /// Scans with a defined covariate value.
    pub n: usize,
    /// Pearson r per component; `None` if either side is constant.
    pub r: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainReport {
    pub tool: String,
    pub version: String,
    pub n_components: usize,
    pub route: PcaRoute,
    pub preprocessing: String,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub total_variance: f64,
    pub correlations: Vec<CorrelationRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub meta: ScanMeta,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExplainResult {
    pub model: PcaModel,
    pub embedding: Vec<EmbeddingRow>,
    pub report: ExplainReport,
}

/// Loads `<features_dir>/<scan_id>.json` for every scan and reduces it.
pub fn load_feature_vectors(features_dir: &Path, scans: &[ScanMeta], jobs: usize) -> Result<Vec<FeatureVector>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let vectors: Vec<FeatureVector> = pool.install(|| {
        scans
            .par_iter()
            .map(|s| {
                let t = load_feature_tensor(features_dir.join(format!("{}.json", s.scan_id)))?;
                if t.scan_id != s.scan_id {
                    return Err(Error::InvalidArgument(format!(
                        "descriptor for {} names scan {}",
                        s.scan_id, t.scan_id
                    )));
                }
                Ok(reduce_tensor(&t))
            })
            .collect::<Result<_>>()
    })?;
    if let Some(bad) = vectors.iter().find(|v| v.values.len() != vectors[0].values.len()) {
        return Err(Error::InvalidArgument(format!(
            "feature length of {} is {}, expected {}",
            bad.scan_id,
            bad.values.len(),
            vectors[0].values.len()
        )));
    }
    Ok(vectors)
}

/// Fits PCA on the training scans, embeds every scan and correlates the
/// embedding with the covariates (each aligned with `scans`).
pub fn explain(
    scans: &[ScanMeta],
    vectors: &[FeatureVector],
    covariates: &[(String, Vec<Option<f64>>)],
    opts: &ExplainOptions,
) -> Result<ExplainResult> {
    if vectors.len() != scans.len() || covariates.iter().any(|c| c.1.len() != scans.len()) {
        return Err(Error::InvalidArgument("scan, feature and covariate counts differ".into()));
    }
    if let Some(q) = opts.quantile.iter().find(|q| !covariates.iter().any(|c| &c.0 == *q)) {
        return Err(Error::InvalidArgument(format!("quantile covariate {q:?} not found")));
    }
    let train: Vec<Vec<f64>> = scans
        .iter()
        .zip(vectors)
        .filter(|(s, _)| s.split == Partition::Train)
        .map(|(_, v)| v.values.clone())
        .collect();
    let model = pca_fit(&train, opts.n_components, opts.route)?;
    let all: Vec<Vec<f64>> = vectors.iter().map(|v| v.values.clone()).collect();
    let coords = pca_project(&model, &all)?;

    let mut correlations = Vec::new();
    for (name, values) in covariates {
        let idx: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
        let mut x: Vec<f64> = idx.iter().map(|&i| values[i].unwrap()).collect();
        let qt = opts.quantile.contains(name);
        if qt && !x.is_empty() {
            x = quantile_transform(&x);
        }
        let r = (0..opts.n_components)
            .map(|k| {
                let y: Vec<f64> = idx.iter().map(|&i| coords[i][k]).collect();
                crate::features::pearson(&x, &y).ok()
            })
            .collect();
        correlations.push(CorrelationRow {
            covariate: name.clone(),
            quantile_transformed: qt,
            n: idx.len(),
            r,
        });
    }

    let route = match opts.route {
        PcaRoute::Auto if train.len() <= model.n_features() => PcaRoute::Gram,
        PcaRoute::Auto => PcaRoute::Covariance,
        r => r,
    };
    let report = ExplainReport {
        tool: TOOL_NAME.into(),
        version: VERSION.into(),
        n_components: opts.n_components,
        route,
        preprocessing: "mean-centered, unscaled".into(),
        n_train: train.len(),
        n_test: scans.len() - train.len(),
        n_features: model.n_features(),
        explained_variance_ratio: model.explained_variance_ratio(),
        explained_variance: model.explained_variance.clone(),
        total_variance: model.total_variance,
        correlations,
    };
    let embedding = scans
        .iter()
        .cloned()
        .zip(coords)
        .map(|(meta, coords)| EmbeddingRow { meta, coords })
        .collect();
    Ok(ExplainResult {
        model,
        embedding,
        report,
    })
}

pub fn write_embedding_csv(path: &Path, rows: &[EmbeddingRow], k: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["scan_id".to_string()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    header.extend(["split", "site", "modality", "field_strength"].map(String::from));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.meta.scan_id.clone()];
        rec.extend(r.coords.iter().map(|&v| fmt6(v)));
        rec.push(r.meta.split.as_str().into());
        rec.push(r.meta.site.clone());
        rec.push(r.meta.modality.clone());
        rec.push(r.meta.field_strength.clone());
        w.write_record(&rec)?;
    }
    finish(w, path)
}

pub fn write_correlations_csv(path: &Path, rows: &[CorrelationRow], k: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["covariate".to_string(), "quantile_transformed".into(), "n".into()];
    header.extend((1..=k).map(|i| format!("pc{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.covariate.clone(), r.quantile_transformed.to_string(), r.n.to_string()];
        rec.extend(r.r.iter().map(|&v| fmt6_opt(v)));
        w.write_record(&rec)?;
    }
    finish(w, path)
}
