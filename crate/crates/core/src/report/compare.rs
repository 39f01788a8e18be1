use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::output::{csv_writer, finish};
use crate::error::{Error, Result};
use crate::format::fmt6;
use crate::stats::{
    bh_fdr, kruskal_wallis, mann_whitney_u_with, stars, wilcoxon_signed_rank_with, Method, MethodChoice, TestResult,
};

pub const DEFAULT_METRICS: [&str; 5] = ["ndsc", "dsc", "f1", "recall", "precision"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareTest {
    /// Paired by scan_id, contender minus baseline.
    Wilcoxon,
    MannWhitney,
    Kruskal,
}

impl CompareTest {
    pub fn as_str(self) -> &'static str {
        match self {
            CompareTest::Wilcoxon => "wilcoxon",
            CompareTest::MannWhitney => "mann-whitney",
            CompareTest::Kruskal => "kruskal",
        }
    }
}

impl fmt::Display for CompareTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CompareTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wilcoxon" => Ok(CompareTest::Wilcoxon),
            "mann-whitney" => Ok(CompareTest::MannWhitney),
            "kruskal" => Ok(CompareTest::Kruskal),
            _ => Err(Error::InvalidArgument(format!(
                "unknown test {s:?}, expected wilcoxon, mann-whitney or kruskal"
            ))),
        }
    }
}

/// Which p-values are adjusted together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdrFamily {
    /// Every comparison in the run forms one family.
    #[default]
    All,
    /// One family per metric.
    Metric,
    /// No adjustment.
    None,
}

impl FromStr for FdrFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FdrFamily::All),
            "metric" => Ok(FdrFamily::Metric),
            "none" => Ok(FdrFamily::None),
            _ => Err(Error::InvalidArgument(format!(
                "unknown FDR family {s:?}, expected all, metric or none"
            ))),
        }
    }
}

/// Per-scan values of one model, read from a `per_scan.csv`.
#[derive(Debug, Clone)]
pub struct MetricTable {
    pub name: String,
    pub path: PathBuf,
    pub scan_ids: Vec<String>,
    columns: BTreeMap<String, Vec<String>>,
}

impl MetricTable {
    pub fn read(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::schema(path, 0, e.to_string()))?;
        let headers = rdr.headers().map_err(|e| Error::schema(path, 1, e.to_string()))?.clone();
        let id_col = headers
            .iter()
            .position(|h| h == "scan_id")
            .ok_or_else(|| Error::schema(path, 1, "missing column \"scan_id\""))?;
        let mut columns: BTreeMap<String, Vec<String>> = headers.iter().map(|h| (h.to_string(), Vec::new())).collect();
        let mut scan_ids = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::schema(path, i + 2, e.to_string()))?;
            let id = rec[id_col].to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::schema(path, i + 2, format!("duplicate scan_id {id:?}")));
            }
            for (h, v) in headers.iter().zip(rec.iter()) {
                columns.get_mut(h).expect("header column").push(v.to_string());
            }
            scan_ids.push(id);
        }
        Ok(MetricTable {
            name: name.into(),
            path: path.to_path_buf(),
            scan_ids,
            columns,
        })
    }

    /// Numeric column; empty cells are undefined values.
    pub fn numeric(&self, column: &str) -> Result<Vec<Option<f64>>> {
        let cells = self
            .columns
            .get(column)
            .ok_or_else(|| Error::schema(&self.path, 1, format!("missing column {column:?}")))?;
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if c.is_empty() {
                    return Ok(None);
                }
                c.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::schema(&self.path, i + 2, format!("{column}: {c:?} is not a number")))
            })
            .collect()
    }

    pub fn text(&self, column: &str) -> Result<&[String]> {
        self.columns
            .get(column)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::schema(&self.path, 1, format!("missing column {column:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub test: CompareTest,
    pub metrics: Vec<String>,
    /// Column defining groups for the unpaired tests; without it the
    /// models themselves are the groups.
    pub group_by: Option<String>,
    pub fdr_family: FdrFamily,
    pub q: f64,
    pub method: MethodChoice,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            test: CompareTest::Wilcoxon,
            metrics: DEFAULT_METRICS.iter().map(|m| m.to_string()).collect(),
            group_by: None,
            fdr_family: FdrFamily::All,
            q: crate::stats::DEFAULT_Q,
            method: MethodChoice::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub test: CompareTest,
    pub metric: String,
    pub baseline: String,
    pub contender: String,
    pub n: usize,
    pub statistic: f64,
    /// `None` when the samples carry no rank information (all differences
    /// zero or all values tied); such rows get p = 1.
    pub method: Option<Method>,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub stars: String,
}

struct Pending {
    metric: String,
    baseline: String,
    contender: String,
    n: usize,
    result: Option<TestResult>,
}

fn run(test: impl FnOnce() -> Result<TestResult>) -> Result<Option<TestResult>> {
    match test() {
        Ok(r) => Ok(Some(r)),
        Err(Error::Degenerate(msg)) => {
            log::info!("no rank information ({msg}); reporting p = 1");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn defined(values: &[Option<f64>]) -> Vec<f64> {
    values.iter().flatten().copied().collect()
}

/// Named samples of one metric: one per model, or one per level of the
/// group-by column within each model.
fn unpaired_groups(models: &[MetricTable], metric: &str, group_by: Option<&str>) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out = Vec::new();
    for m in models {
        let values = m.numeric(metric)?;
        match group_by {
            None => out.push((m.name.clone(), defined(&values))),
            Some(col) => {
                let levels = m.text(col)?;
                let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                for (lvl, v) in levels.iter().zip(&values) {
                    let e = by.entry(lvl.as_str()).or_default();
                    if let Some(v) = v {
                        e.push(*v);
                    }
                }
                for (lvl, vals) in by {
                    let name = if models.len() > 1 {
                        format!("{}:{lvl}", m.name)
                    } else {
                        lvl.to_string()
                    };
                    out.push((name, vals));
                }
            }
        }
    }
    Ok(out)
}

fn paired(base: &MetricTable, other: &MetricTable, metric: &str) -> Result<Vec<f64>> {
    let b = base.numeric(metric)?;
    let o = other.numeric(metric)?;
    let lookup: BTreeMap<&str, Option<f64>> = other.scan_ids.iter().map(String::as_str).zip(o).collect();
    let mut diffs = Vec::new();
    for (id, bv) in base.scan_ids.iter().zip(b) {
        if let (Some(bv), Some(Some(ov))) = (bv, lookup.get(id.as_str())) {
            diffs.push(ov - bv);
        }
    }
    Ok(diffs)
}

/// Runs the requested test for every metric and adjusts the p-values.
///
/// The first model is the baseline for paired and between-model tests.
pub fn compare(models: &[MetricTable], opts: &CompareOptions) -> Result<Vec<ComparisonRow>> {
    if models.is_empty() {
        return Err(Error::EmptyInput("compare needs at least one model"));
    }
    let mut pending = Vec::new();
    for metric in &opts.metrics {
        match opts.test {
            CompareTest::Wilcoxon => {
                if models.len() < 2 {
                    return Err(Error::InvalidArgument("wilcoxon needs a baseline and at least one contender".into()));
                }
                for other in &models[1..] {
                    let diffs = paired(&models[0], other, metric)?;
                    if diffs.is_empty() {
                        log::warn!("{metric}: no scans paired between {} and {}", models[0].name, other.name);
                        continue;
                    }
                    pending.push(Pending {
                        metric: metric.clone(),
                        baseline: models[0].name.clone(),
                        contender: other.name.clone(),
                        n: diffs.len(),
                        result: run(|| wilcoxon_signed_rank_with(&diffs, opts.method))?,
                    });
                }
            }
            CompareTest::MannWhitney => {
                let groups = unpaired_groups(models, metric, opts.group_by.as_deref())?;
                let pairs: Vec<(usize, usize)> = if opts.group_by.is_some() {
                    (0..groups.len()).flat_map(|i| (i + 1..groups.len()).map(move |j| (i, j))).collect()
                } else {
                    (1..groups.len()).map(|j| (0, j)).collect()
                };
                if pairs.is_empty() {
                    return Err(Error::InvalidArgument("mann-whitney needs at least two groups".into()));
                }
                for (i, j) in pairs {
                    let (a, b) = (&groups[i], &groups[j]);
                    if a.1.is_empty() || b.1.is_empty() {
                        log::warn!("{metric}: {} or {} has no defined values", a.0, b.0);
                        continue;
                    }
                    pending.push(Pending {
                        metric: metric.clone(),
                        baseline: a.0.clone(),
                        contender: b.0.clone(),
                        n: a.1.len() + b.1.len(),
                        result: run(|| mann_whitney_u_with(&a.1, &b.1, opts.method))?,
                    });
                }
            }
            CompareTest::Kruskal => {
                let groups: Vec<(String, Vec<f64>)> = unpaired_groups(models, metric, opts.group_by.as_deref())?
                    .into_iter()
                    .filter(|g| !g.1.is_empty())
                    .collect();
                if groups.len() < 2 {
                    return Err(Error::InvalidArgument("kruskal needs at least two non-empty groups".into()));
                }
                let samples: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
                pending.push(Pending {
                    metric: metric.clone(),
                    baseline: groups[0].0.clone(),
                    contender: groups[1..].iter().map(|g| g.0.as_str()).collect::<Vec<_>>().join(";"),
                    n: samples.iter().map(Vec::len).sum(),
                    result: run(|| kruskal_wallis(&samples))?,
                });
            }
        }
    }

    let raw: Vec<f64> = pending.iter().map(|p| p.result.map_or(1.0, |r| r.p_value)).collect();
    let mut adjusted = raw.clone();
    match opts.fdr_family {
        FdrFamily::None => {}
        FdrFamily::All => {
            if !raw.is_empty() {
                adjusted = bh_fdr(&raw, opts.q)?.adjusted_p;
            }
        }
        FdrFamily::Metric => {
            for metric in &opts.metrics {
                let idx: Vec<usize> = (0..pending.len()).filter(|&i| &pending[i].metric == metric).collect();
                if idx.is_empty() {
                    continue;
                }
                let family: Vec<f64> = idx.iter().map(|&i| raw[i]).collect();
                for (&i, p) in idx.iter().zip(bh_fdr(&family, opts.q)?.adjusted_p) {
                    adjusted[i] = p;
                }
            }
        }
    }

    Ok(pending
        .into_iter()
        .zip(raw)
        .zip(adjusted)
        .map(|((p, raw_p), adjusted_p)| ComparisonRow {
            test: opts.test,
            metric: p.metric,
            baseline: p.baseline,
            contender: p.contender,
            n: p.n,
            statistic: p.result.map_or(0.0, |r| r.statistic),
            method: p.result.map(|r| r.method),
            raw_p,
            adjusted_p,
            stars: stars(adjusted_p).to_string(),
        })
        .collect())
}

fn method_name(m: Option<Method>) -> &'static str {
    match m {
        Some(Method::Exact) => "exact",
        Some(Method::NormalApprox) => "normal-approx",
        Some(Method::ChiSquared) => "chi-squared",
        None => "none",
    }
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "metric",
        "baseline",
        "contender",
        "test",
        "method",
        "n",
        "statistic",
        "raw_p",
        "adjusted_p",
        "stars",
    ])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.baseline.clone(),
            r.contender.clone(),
            r.test.as_str().to_string(),
            method_name(r.method).to_string(),
            r.n.to_string(),
            fmt6(r.statistic),
            fmt6(r.raw_p),
            fmt6(r.adjusted_p),
            r.stars.clone(),
        ])?;
    }
    finish(w, path)
}
