//! Lesion-level detection scoring on connected components.
//!
//! A predicted component is a true-positive lesion (TPL) when it shares at
//! least one voxel with any ground-truth component and a false positive (FPL)
//! otherwise. A ground-truth component touched by no prediction is a false
//! negative (FNL).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelMap;

/// Normal quantile used for the two-sided 90% interval on the mean.
pub const Z_90: f64 = 1.6449;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtOverlap {
    pub gt_label: u32,
    pub voxels: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruePositiveLesion {
    pub pred_label: u32,
    /// Ground-truth components touched, ascending by label.
    pub overlaps: Vec<GtOverlap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionMatchResult {
    pub tpl: Vec<TruePositiveLesion>,
    pub fpl: Vec<u32>,
    pub fnl: Vec<u32>,
    /// Voxel counts per component, index `label - 1`.
    pub gt_sizes: Vec<u64>,
    pub pred_sizes: Vec<u64>,
    pub voxel_volume_mm3: f64,
}

impl LesionMatchResult {
    pub fn gt_component_count(&self) -> usize {
        self.gt_sizes.len()
    }

    pub fn pred_component_count(&self) -> usize {
        self.pred_sizes.len()
    }

    pub fn gt_empty(&self) -> bool {
        self.gt_sizes.is_empty()
    }

    pub fn pred_volume_mm3(&self, label: u32) -> f64 {
        self.pred_sizes[label as usize - 1] as f64 * self.voxel_volume_mm3
    }

    pub fn gt_volume_mm3(&self, label: u32) -> f64 {
        self.gt_sizes[label as usize - 1] as f64 * self.voxel_volume_mm3
    }

    pub fn tpl_labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.tpl.iter().map(|t| t.pred_label)
    }
}

/// Partitions predicted components into TPL/FPL and finds untouched
/// ground-truth components (FNL).
pub fn match_lesions(gt: &LabelMap, pred: &LabelMap) -> Result<LesionMatchResult> {
    if !gt.header().same_geometry(pred.header()) {
        return Err(Error::DimensionMismatch {
            left: gt.header().dims,
            right: pred.header().dims,
        });
    }
    let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
    let mut last = (0u32, 0u32);
    let mut run = 0u64;
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        if g == 0 || p == 0 {
            continue;
        }
        if (p, g) == last {
            run += 1;
        } else {
            if run > 0 {
                *pairs.entry(last).or_default() += run;
            }
            last = (p, g);
            run = 1;
        }
    }
    if run > 0 {
        *pairs.entry(last).or_default() += run;
    }

    let mut pairs: Vec<((u32, u32), u64)> = pairs.into_iter().collect();
    pairs.sort_unstable();

    let gt_sizes: Vec<u64> = gt.component_sizes().into_values().collect();
    let pred_sizes: Vec<u64> = pred.component_sizes().into_values().collect();

    let mut gt_hit = vec![false; gt_sizes.len()];
    let mut overlaps: Vec<Vec<GtOverlap>> = vec![Vec::new(); pred_sizes.len()];
    for ((p, g), voxels) in pairs {
        gt_hit[g as usize - 1] = true;
        overlaps[p as usize - 1].push(GtOverlap { gt_label: g, voxels });
    }

    let mut tpl = Vec::new();
    let mut fpl = Vec::new();
    for (i, ov) in overlaps.into_iter().enumerate() {
        let pred_label = i as u32 + 1;
        if ov.is_empty() {
            fpl.push(pred_label);
        } else {
            tpl.push(TruePositiveLesion {
                pred_label,
                overlaps: ov,
            });
        }
    }
    let fnl = (1..)
        .zip(gt_hit)
        .filter_map(|(l, hit)| (!hit).then_some(l))
        .collect();

    Ok(LesionMatchResult {
        tpl,
        fpl,
        fnl,
        gt_sizes,
        pred_sizes,
        voxel_volume_mm3: gt.header().voxel_volume_mm3(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub f1: f64,
    pub precision: f64,
    /// Undefined on scans without ground-truth lesions.
    pub recall: Option<f64>,
    pub tpl_count: usize,
    pub fpl_count: usize,
    pub fnl_count: usize,
}

/// F1, precision and recall for one scan.
///
/// Lesion-free ground truth: recall is undefined and precision = F1 = 1 when
/// nothing was predicted, 0 otherwise. An empty prediction against nonempty
/// ground truth scores 0 on all three.
pub fn detection_metrics(m: &LesionMatchResult, gt_empty: bool) -> DetectionMetrics {
    let tpl = m.tpl.len();
    let fpl = m.fpl.len();
    let fnl = m.fnl.len();
    let (f1, precision, recall) = if gt_empty {
        let v = if fpl == 0 { 1.0 } else { 0.0 };
        (v, v, None)
    } else if tpl + fpl == 0 {
        (0.0, 0.0, Some(0.0))
    } else {
        let (t, p, n) = (tpl as f64, fpl as f64, fnl as f64);
        (2.0 * t / (2.0 * t + p + n), t / (t + p), Some(t / (t + n)))
    };
    DetectionMetrics {
        f1,
        precision,
        recall,
        tpl_count: tpl,
        fpl_count: fpl,
        fnl_count: fnl,
    }
}

/// Per-scan quantities that enter the aggregate tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanMetrics {
    pub ndsc: f64,
    pub dsc: f64,
    pub detection: DetectionMetrics,
    pub gt_empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ndsc,
    Dsc,
    F1,
    Recall,
    Precision,
    FplCount,
    FnlCount,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Ndsc,
        Metric::Dsc,
        Metric::F1,
        Metric::Recall,
        Metric::Precision,
        Metric::FplCount,
        Metric::FnlCount,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ndsc => "ndsc",
            Metric::Dsc => "dsc",
            Metric::F1 => "f1",
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::FplCount => "fpl_count",
            Metric::FnlCount => "fnl_count",
        }
    }

    pub fn from_name(s: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Value for one scan; `None` where the metric is undefined. FNL counts
    /// are undefined on lesion-free scans, like recall.
    pub fn value(self, s: &ScanMetrics) -> Option<f64> {
        match self {
            Metric::Ndsc => Some(s.ndsc),
            Metric::Dsc => Some(s.dsc),
            Metric::F1 => Some(s.detection.f1),
            Metric::Recall => s.detection.recall,
            Metric::Precision => Some(s.detection.precision),
            Metric::FplCount => Some(s.detection.fpl_count as f64),
            Metric::FnlCount => (!s.gt_empty).then_some(s.detection.fnl_count as f64),
        }
    }
}

/// Mean, standard error and normal-approximation 90% interval of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Number of defined values averaged.
    pub n: usize,
    /// Values skipped because they were undefined.
    pub excluded: usize,
    /// `None` when every value was undefined.
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub ci90_low: Option<f64>,
    pub ci90_high: Option<f64>,
    /// Set when fewer than two values were defined (SE reported as 0).
    pub degenerate_n: bool,
}

/// Summarizes a metric column, skipping undefined entries.
pub fn summarize(values: &[Option<f64>]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one scan"));
    }
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let n = defined.len();
    let excluded = values.len() - n;
    if n == 0 {
        return Ok(Summary {
            n,
            excluded,
            mean: None,
            se: None,
            ci90_low: None,
            ci90_high: None,
            degenerate_n: true,
        });
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    let se = if n < 2 {
        0.0
    } else {
        let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    };
    Ok(Summary {
        n,
        excluded,
        mean: Some(mean),
        se: Some(se),
        ci90_low: Some(mean - Z_90 * se),
        ci90_high: Some(mean + Z_90 * se),
        degenerate_n: n < 2,
    })
}

/// One summary per metric over a set of scans.
pub fn aggregate(per_scan: &[ScanMetrics]) -> Result<Vec<(Metric, Summary)>> {
    if per_scan.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one scan"));
    }
    Metric::ALL
        .into_iter()
        .map(|m| {
            let col: Vec<Option<f64>> = per_scan.iter().map(|s| m.value(s)).collect();
            summarize(&col).map(|s| (m, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{label_components, Connectivity};
    use crate::volume::{MaskVolume, VolumeHeader};

    fn labels(dims: [usize; 3], on: &[[usize; 3]]) -> LabelMap {
        let h = VolumeHeader::new(dims, [1.0; 3]).unwrap();
        let m = MaskVolume::from_fn(h, |x, y, z| on.contains(&[x, y, z]));
        label_components(&m, Connectivity::TwentySix)
    }

    fn result(tpl: usize, fpl: usize, fnl: usize) -> LesionMatchResult {
        LesionMatchResult {
            tpl: (1..=tpl as u32)
                .map(|p| TruePositiveLesion {
                    pred_label: p,
                    overlaps: vec![GtOverlap { gt_label: p, voxels: 1 }],
                })
                .collect(),
            fpl: (tpl as u32 + 1..=(tpl + fpl) as u32).collect(),
            fnl: (tpl as u32 + 1..=(tpl + fnl) as u32).collect(),
            gt_sizes: vec![1; tpl + fnl],
            pred_sizes: vec![1; tpl + fpl],
            voxel_volume_mm3: 1.0,
        }
    }

    #[test]
    fn single_voxel_overlap_is_tpl() {
        let gt = labels([8, 8, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0]]);
        let pred = labels([8, 8, 1], &[[2, 0, 0], [3, 0, 0], [4, 0, 0]]);
        let m = match_lesions(&gt, &pred).unwrap();
        assert_eq!(m.tpl.len(), 1);
        assert_eq!(m.tpl[0].overlaps, vec![GtOverlap { gt_label: 1, voxels: 1 }]);
        assert!(m.fpl.is_empty() && m.fnl.is_empty());
    }

    #[test]
    fn fpl_and_fnl() {
        let gt = labels([8, 8, 1], &[[0, 0, 0]]);
        let pred = labels([8, 8, 1], &[[5, 5, 0]]);
        let m = match_lesions(&gt, &pred).unwrap();
        assert!(m.tpl.is_empty());
        assert_eq!(m.fpl, vec![1]);
        assert_eq!(m.fnl, vec![1]);
    }

    #[test]
    fn one_prediction_covering_two_lesions() {
        let gt = labels([8, 1, 1], &[[0, 0, 0], [4, 0, 0]]);
        let pred = labels([8, 1, 1], &[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [4, 0, 0]]);
        let m = match_lesions(&gt, &pred).unwrap();
        assert_eq!(m.tpl.len(), 1);
        assert_eq!(m.tpl[0].overlaps.len(), 2);
        assert!(m.fnl.is_empty());
    }

    #[test]
    fn reflexive() {
        let gt = labels([8, 8, 1], &[[0, 0, 0], [5, 5, 0], [7, 0, 0]]);
        let m = match_lesions(&gt, &gt).unwrap();
        assert_eq!(m.tpl.len(), 3);
        assert!(m.fpl.is_empty() && m.fnl.is_empty());
    }

    #[test]
    fn grid_mismatch() {
        let a = labels([8, 8, 1], &[]);
        let b = labels([8, 8, 2], &[]);
        assert!(match_lesions(&a, &b).is_err());
    }

    #[test]
    fn detection_formulas() {
        let d = detection_metrics(&result(3, 1, 2), false);
        assert!((d.precision - 0.75).abs() < 1e-15);
        assert!((d.recall.unwrap() - 0.6).abs() < 1e-15);
        assert!((d.f1 - 6.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn detection_degenerate() {
        let d = detection_metrics(&result(0, 0, 0), true);
        assert_eq!((d.precision, d.f1, d.recall), (1.0, 1.0, None));
        let d = detection_metrics(&result(0, 2, 0), true);
        assert_eq!((d.precision, d.f1, d.recall), (0.0, 0.0, None));
        let d = detection_metrics(&result(0, 0, 4), false);
        assert_eq!((d.precision, d.f1, d.recall), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn summaries() {
        let s = summarize(&[Some(0.5), Some(0.7)]).unwrap();
        assert!((s.mean.unwrap() - 0.6).abs() < 1e-15);
        assert!((s.se.unwrap() - 0.1).abs() < 1e-12);
        assert!((s.ci90_high.unwrap() - (0.6 + 0.16449)).abs() < 1e-12);

        let s = summarize(&[Some(0.4)]).unwrap();
        assert_eq!((s.mean, s.se, s.degenerate_n), (Some(0.4), Some(0.0), true));

        let s = summarize(&[Some(0.5), None, Some(0.7)]).unwrap();
        assert!((s.mean.unwrap() - 0.6).abs() < 1e-15);
        assert_eq!((s.n, s.excluded), (2, 1));

        assert!(summarize(&[]).is_err());
        assert!(aggregate(&[]).is_err());
    }
}
