use std::fs;
use std::path::{Path, PathBuf};

use super::evaluate::EvaluationReport;
use super::json::write_report_json;
use crate::error::{Error, Result};
use crate::format::{fmt6, fmt6_opt};

pub const REPORT_JSON: &str = "report.json";
pub const PER_SCAN_CSV: &str = "per_scan.csv";
pub const AGGREGATES_CSV: &str = "aggregates.csv";
pub const TYPED_ERRORS_CSV: &str = "typed_errors.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

pub(crate) fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_per_scan(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "scan_id",
        "site",
        "modality",
        "field_strength",
        "disease",
        "gt_empty",
        "ndsc",
        "dsc",
        "f1",
        "precision",
        "recall",
        "tpl",
        "fpl",
        "fnl",
        "gt_lesions",
        "pred_lesions",
        "gt_volume_ml",
        "pred_volume_ml",
        "tp",
        "fp",
        "fn",
        "tn",
        "ndsc_r",
        "connectivity",
    ])?;
    let r = fmt6(report.metadata.ndsc_r);
    let conn = report.metadata.connectivity.to_string();
    for s in &report.scans {
        w.write_record([
            s.scan_id.clone(),
            s.site.clone(),
            s.modality.clone(),
            s.field_strength.clone(),
            s.disease.clone(),
            s.gt_empty.to_string(),
            fmt6(s.ndsc),
            fmt6(s.dsc),
            fmt6(s.f1),
            fmt6(s.precision),
            fmt6_opt(s.recall),
            s.tpl.to_string(),
            s.fpl.to_string(),
            s.fnl.to_string(),
            s.gt_lesions.to_string(),
            s.pred_lesions.to_string(),
            fmt6(s.gt_volume_ml),
            fmt6(s.pred_volume_ml),
            s.counts.tp.to_string(),
            s.counts.fp.to_string(),
            s.counts.fn_.to_string(),
            s.counts.tn.to_string(),
            r.clone(),
            conn.clone(),
        ])?;
    }
    finish(w, path)
}

fn write_aggregates(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "site",
        "modality",
        "field_strength",
        "disease",
        "metric",
        "n",
        "excluded",
        "mean",
        "se",
        "ci90_low",
        "ci90_high",
        "ndsc_r",
        "connectivity",
    ])?;
    let r = fmt6(report.metadata.ndsc_r);
    let conn = report.metadata.connectivity.to_string();
    for a in &report.aggregates {
        let s = &a.summary;
        w.write_record([
            a.site.clone(),
            a.modality.clone(),
            a.field_strength.clone(),
            a.disease.clone(),
            a.metric.name().to_string(),
            s.n.to_string(),
            s.excluded.to_string(),
            fmt6_opt(s.mean),
            fmt6_opt(s.se),
            fmt6_opt(s.ci90_low),
            fmt6_opt(s.ci90_high),
            r.clone(),
            conn.clone(),
        ])?;
    }
    finish(w, path)
}

fn write_typed_errors(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["category", "class", "count", "percent", "median_ml", "q1_ml", "q3_ml"])?;
    let t = &report.typed_errors;
    for row in &t.rows {
        let summary = report
            .volume_summary
            .iter()
            .find(|v| v.category == row.category && v.class == row.class);
        w.write_record([
            row.category.as_str().to_string(),
            row.class.clone(),
            row.count.to_string(),
            fmt6(t.percent(row.category, &row.class)),
            fmt6_opt(summary.and_then(|s| s.median_ml())),
            fmt6_opt(summary.and_then(|s| s.q1_ml())),
            fmt6_opt(summary.and_then(|s| s.q3_ml())),
        ])?;
    }
    finish(w, path)
}

fn write_histogram(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["category", "low_mm3", "high_mm3", "count"])?;
    for b in &report.histogram {
        w.write_record([
            b.category.as_str().to_string(),
            fmt6(b.low_mm3),
            fmt6(b.high_mm3),
            b.count.to_string(),
        ])?;
    }
    finish(w, path)
}

/// Writes the JSON report and its CSV companions into `dir`.
pub fn write_evaluation(dir: &Path, report: &EvaluationReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = [REPORT_JSON, PER_SCAN_CSV, AGGREGATES_CSV, TYPED_ERRORS_CSV, HISTOGRAM_CSV]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_report_json(&paths[0], report)?;
    write_per_scan(&paths[1], report)?;
    write_aggregates(&paths[2], report)?;
    write_typed_errors(&paths[3], report)?;
    write_histogram(&paths[4], report)?;
    Ok(paths)
}

pub fn read_evaluation(path: &Path) -> Result<EvaluationReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
