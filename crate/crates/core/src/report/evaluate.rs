use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_analysis::{
    typed_error_table, untyped_error_table, volume_histogram, volume_summary, HistogramBin, PhenotypeAtlas,
    TypedErrorTable, VolumeSummaryRow,
};
use crate::labeling::{component_volumes_ml, label_components, Connectivity};
use crate::lesion_metrics::{detection_metrics, match_lesions, summarize, DetectionMetrics, Metric, ScanMetrics, Summary};
use crate::volume::{load_mask, validate_pair, DEFAULT_THRESHOLD};
use crate::voxel_metrics::{confusion_counts, dsc, ndsc, reference_fraction, ConfusionCounts};

pub const TOOL_NAME: &str = "lesioneval";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_BINS_PER_DECADE: usize = 4;

/// Reference foreground fraction for nDSC: the cohort mean, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NdscR {
    #[default]
    Auto,
    Fixed(f64),
}

impl FromStr for NdscR {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(NdscR::Auto);
        }
        let r: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("--ndsc-r expects a number or \"auto\", got {s:?}")))?;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidArgument(format!("--ndsc-r must lie in (0, 1), got {r}")));
        }
        Ok(NdscR::Fixed(r))
    }
}

impl fmt::Display for NdscR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NdscR::Auto => f.write_str("auto"),
            NdscR::Fixed(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub connectivity: Connectivity,
    pub ndsc_r: NdscR,
    pub threshold: f64,
    /// Worker threads; 0 uses one per core.
    pub jobs: usize,
    pub bins_per_decade: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            connectivity: Connectivity::default(),
            ndsc_r: NdscR::Auto,
            threshold: DEFAULT_THRESHOLD,
            jobs: 0,
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
        }
    }
}

/// One row of the pairs manifest, with paths resolved against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub scan_id: String,
    pub gt_path: PathBuf,
    pub pred_path: PathBuf,
    pub site: String,
    pub modality: String,
    pub field_strength: String,
    pub disease: String,
    #[serde(default)]
    pub atlas_manifest: Option<PathBuf>,
}

pub fn read_pairs_manifest(path: impl AsRef<Path>) -> Result<Vec<PairRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::schema(path, 0, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| Error::schema(path, 1, e.to_string()))?.clone();
    for col in ["scan_id", "gt_path", "pred_path", "site", "modality", "field_strength", "disease"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::schema(path, 1, format!("missing column {col:?}")));
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<PairRecord>().enumerate() {
        let row = i + 2;
        let mut r = rec.map_err(|e| Error::schema(path, row, e.to_string()))?;
        if r.scan_id.is_empty() {
            return Err(Error::schema(path, row, "empty scan_id"));
        }
        if !seen.insert(r.scan_id.clone()) {
            return Err(Error::schema(path, row, format!("duplicate scan_id {:?}", r.scan_id)));
        }
        r.gt_path = base.join(&r.gt_path);
        r.pred_path = base.join(&r.pred_path);
        r.atlas_manifest = r
            .atlas_manifest
            .filter(|p| !p.as_os_str().is_empty())
            .map(|p| base.join(p));
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::schema(path, 0, "manifest has no rows"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub scan_id: String,
    pub site: String,
    pub modality: String,
    pub field_strength: String,
    pub disease: String,
    pub gt_empty: bool,
    pub ndsc: f64,
    pub dsc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: Option<f64>,
    pub tpl: usize,
    pub fpl: usize,
    pub fnl: usize,
    pub gt_lesions: usize,
    pub pred_lesions: usize,
    pub gt_volume_ml: f64,
    pub pred_volume_ml: f64,
    pub counts: ConfusionCounts,
    pub warnings: Vec<String>,
}

impl ScanRow {
    pub fn metrics(&self) -> ScanMetrics {
        ScanMetrics {
            ndsc: self.ndsc,
            dsc: self.dsc,
            gt_empty: self.gt_empty,
            detection: DetectionMetrics {
                f1: self.f1,
                precision: self.precision,
                recall: self.recall,
                tpl_count: self.tpl,
                fpl_count: self.fpl,
                fnl_count: self.fnl,
            },
        }
    }

    fn group_value(&self, axis: usize) -> &str {
        match axis {
            0 => &self.site,
            1 => &self.modality,
            2 => &self.field_strength,
            _ => &self.disease,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFailure {
    pub scan_id: String,
    pub error: String,
}

/// Wildcard for a grouping column that is pooled over.
pub const ALL: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub site: String,
    pub modality: String,
    pub field_strength: String,
    pub disease: String,
    pub metric: Metric,
    #[serde(flatten)]
    pub summary: Summary,
}

impl AggregateRow {
    pub fn is_overall(&self) -> bool {
        [&self.site, &self.modality, &self.field_strength, &self.disease]
            .iter()
            .all(|v| v.as_str() == ALL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub ndsc_reference: String,
    pub lesion_matching: String,
    pub lesion_free_scans: String,
    pub aggregation: String,
    pub typed_errors: String,
    pub float_format: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            ndsc_reference: "r is the mean ground-truth foreground fraction over evaluated scans unless fixed; \
                             kappa = h(1/r - 1) with h the scan's own positive/negative voxel ratio"
                .into(),
            lesion_matching: "a predicted component with at least one voxel of ground-truth overlap is a TPL".into(),
            lesion_free_scans: "recall and FNL count undefined; precision = F1 = 1 without predicted lesions, 0 otherwise"
                .into(),
            aggregation: "mean, SE = sd(n-1)/sqrt(n), 90% CI = mean +- 1.6449 SE; undefined values excluded and counted"
                .into(),
            typed_errors: "class with the largest voxel overlap, ties broken by atlas priority; no overlap is unclassified"
                .into(),
            float_format: "6 significant digits (printf %.6g)".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub ndsc_r: f64,
    pub ndsc_r_mode: String,
    pub connectivity: u8,
    pub threshold: f64,
    pub scans_ok: usize,
    pub scans_failed: usize,
    pub conventions: Conventions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metadata: RunMetadata,
    pub scans: Vec<ScanRow>,
    pub failures: Vec<ScanFailure>,
    pub aggregates: Vec<AggregateRow>,
    pub typed_errors: TypedErrorTable,
    pub volume_summary: Vec<VolumeSummaryRow>,
    pub histogram: Vec<HistogramBin>,
}

impl EvaluationReport {
    /// Overall (fully pooled) summary of one metric.
    pub fn overall(&self, metric: Metric) -> Option<&Summary> {
        self.aggregates
            .iter()
            .find(|a| a.metric == metric && a.is_overall())
            .map(|a| &a.summary)
    }
}

struct ScanPartial {
    counts: ConfusionCounts,
    detection: DetectionMetrics,
    gt_empty: bool,
    gt_lesions: usize,
    pred_lesions: usize,
    gt_volume_ml: f64,
    pred_volume_ml: f64,
    table: TypedErrorTable,
    warnings: Vec<String>,
}

fn evaluate_pair(pair: &PairRecord, opts: &EvaluateOptions) -> Result<ScanPartial> {
    let gt = load_mask(&pair.gt_path, opts.threshold)?;
    let pred = load_mask(&pair.pred_path, opts.threshold)?;
    let validation = validate_pair(&gt, &pred)?;
    let counts = confusion_counts(&gt, &pred)?;
    let gl = label_components(&gt, opts.connectivity);
    let pl = label_components(&pred, opts.connectivity);
    let m = match_lesions(&gl, &pl)?;
    let detection = detection_metrics(&m, m.gt_empty());
    let table = match &pair.atlas_manifest {
        Some(p) => typed_error_table(&m, &gl, &pl, &PhenotypeAtlas::from_manifest(p, opts.threshold)?)?,
        None => untyped_error_table(&m),
    };
    Ok(ScanPartial {
        counts,
        detection,
        gt_empty: m.gt_empty(),
        gt_lesions: gl.component_count(),
        pred_lesions: pl.component_count(),
        gt_volume_ml: component_volumes_ml(&gl).values().sum(),
        pred_volume_ml: component_volumes_ml(&pl).values().sum(),
        table,
        warnings: validation.warnings,
    })
}

/// Aggregation keys: overall, per disease, and per site x modality x field
/// strength x disease.
fn aggregate_rows(scans: &[ScanRow]) -> Result<Vec<AggregateRow>> {
    let mut groups: BTreeMap<(u8, [String; 4]), Vec<usize>> = BTreeMap::new();
    for (i, s) in scans.iter().enumerate() {
        let full: [String; 4] = std::array::from_fn(|a| s.group_value(a).to_string());
        let disease_only = [ALL.into(), ALL.into(), ALL.into(), s.disease.clone()];
        let overall = [ALL.into(), ALL.into(), ALL.into(), ALL.into()];
        groups.entry((0, overall)).or_default().push(i);
        groups.entry((1, disease_only)).or_default().push(i);
        groups.entry((2, full)).or_default().push(i);
    }
    let mut out = Vec::new();
    for ((_, key), members) in groups {
        let metrics: Vec<ScanMetrics> = members.iter().map(|&i| scans[i].metrics()).collect();
        for metric in Metric::ALL {
            let col: Vec<Option<f64>> = metrics.iter().map(|s| metric.value(s)).collect();
            let [site, modality, field_strength, disease] = key.clone();
            out.push(AggregateRow {
                site,
                modality,
                field_strength,
                disease,
                metric,
                summary: summarize(&col)?,
            });
        }
    }
    Ok(out)
}

/// Runs the full per-pair pipeline and aggregates the successful scans.
///
/// Scans that fail are listed in `failures`; output order always follows
/// the manifest, whatever the number of workers.
pub fn evaluate(pairs: &[PairRecord], opts: &EvaluateOptions) -> Result<EvaluationReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no scan pairs to evaluate"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<ScanPartial>> = pool.install(|| pairs.par_iter().map(|p| evaluate_pair(p, opts)).collect());

    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (pair, res) in pairs.iter().zip(results) {
        match res {
            Ok(partial) => ok.push((pair, partial)),
            Err(e) => {
                log::warn!("{}: {e}", pair.scan_id);
                failures.push(ScanFailure {
                    scan_id: pair.scan_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::AllPairsFailed(pairs.len()));
    }

    let r = match opts.ndsc_r {
        NdscR::Fixed(r) => r,
        NdscR::Auto => reference_fraction(&ok.iter().map(|(_, p)| p.counts.gt_fraction()).collect::<Vec<_>>())?,
    };

    let mut scans = Vec::with_capacity(ok.len());
    let mut tables = Vec::with_capacity(ok.len());
    for (pair, p) in ok {
        scans.push(ScanRow {
            scan_id: pair.scan_id.clone(),
            site: pair.site.clone(),
            modality: pair.modality.clone(),
            field_strength: pair.field_strength.clone(),
            disease: pair.disease.clone(),
            gt_empty: p.gt_empty,
            ndsc: ndsc(&p.counts, r)?,
            dsc: dsc(&p.counts),
            f1: p.detection.f1,
            precision: p.detection.precision,
            recall: p.detection.recall,
            tpl: p.detection.tpl_count,
            fpl: p.detection.fpl_count,
            fnl: p.detection.fnl_count,
            gt_lesions: p.gt_lesions,
            pred_lesions: p.pred_lesions,
            gt_volume_ml: p.gt_volume_ml,
            pred_volume_ml: p.pred_volume_ml,
            counts: p.counts,
            warnings: p.warnings,
        });
        tables.push(p.table);
    }

    let typed_errors = TypedErrorTable::merge(&tables);
    Ok(EvaluationReport {
        metadata: RunMetadata {
            tool: TOOL_NAME.into(),
            version: VERSION.into(),
            ndsc_r: r,
            ndsc_r_mode: match opts.ndsc_r {
                NdscR::Auto => "auto".into(),
                NdscR::Fixed(_) => "fixed".into(),
            },
            connectivity: opts.connectivity.as_u8(),
            threshold: opts.threshold,
            scans_ok: scans.len(),
            scans_failed: failures.len(),
            conventions: Conventions::default(),
        },
        aggregates: aggregate_rows(&scans)?,
        volume_summary: volume_summary(&typed_errors),
        histogram: volume_histogram(&typed_errors, opts.bins_per_decade),
        typed_errors,
        scans,
        failures,
    })
}
