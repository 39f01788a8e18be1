//! Typing of detection errors by overlap with phenotype or tissue masks.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::LabelMap;
use crate::lesion_metrics::LesionMatchResult;
use crate::quantile::{quantile_sorted, sorted_copy};
use crate::volume::{load_mask, MaskVolume, VolumeHeader};

pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    #[serde(rename = "TPL")]
    Tpl,
    #[serde(rename = "FPL")]
    Fpl,
    #[serde(rename = "FNL")]
    Fnl,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 3] = [ErrorCategory::Tpl, ErrorCategory::Fpl, ErrorCategory::Fnl];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Tpl => "TPL",
            ErrorCategory::Fpl => "FPL",
            ErrorCategory::Fnl => "FNL",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named class masks on the evaluation grid, with an explicit priority used
/// to break overlap ties (earlier wins).
#[derive(Debug, Clone)]
pub struct PhenotypeAtlas {
    classes: BTreeMap<String, MaskVolume>,
    priority: Vec<String>,
}

impl PhenotypeAtlas {
    pub fn new(classes: Vec<(String, MaskVolume)>, priority: Vec<String>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut header: Option<VolumeHeader> = None;
        for (name, mask) in classes {
            if name == UNCLASSIFIED {
                return Err(Error::InvalidArgument(format!("{UNCLASSIFIED:?} is reserved")));
            }
            match &header {
                None => header = Some(mask.header().clone()),
                Some(h) if !h.same_geometry(mask.header()) => {
                    return Err(Error::DimensionMismatch {
                        left: h.dims,
                        right: mask.dims(),
                    })
                }
                Some(_) => {}
            }
            if map.insert(name.clone(), mask).is_some() {
                return Err(Error::InvalidArgument(format!("atlas class {name:?} given twice")));
            }
        }
        let unique: HashSet<&String> = priority.iter().collect();
        if unique.len() != priority.len()
            || priority.len() != map.len()
            || !priority.iter().all(|p| map.contains_key(p))
        {
            return Err(Error::InvalidArgument(
                "priority order must list every atlas class exactly once".into(),
            ));
        }
        Ok(PhenotypeAtlas {
            classes: map,
            priority,
        })
    }

    /// Reads `class,path,priority_rank` rows; lower rank is higher priority.
    /// Relative paths resolve against the manifest's directory.
    pub fn from_manifest(path: impl AsRef<Path>, threshold: f64) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            class: String,
            path: String,
            priority_rank: i64,
        }
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::schema(path, 0, e.to_string()))?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec.map_err(|e| Error::schema(path, i + 2, e.to_string()))?;
            rows.push(row);
        }
        rows.sort_by_key(|r| r.priority_rank);
        if rows.windows(2).any(|w| w[0].priority_rank == w[1].priority_rank) {
            return Err(Error::schema(path, 0, "priority_rank values must be distinct"));
        }
        let priority = rows.iter().map(|r| r.class.clone()).collect();
        let classes = rows
            .into_iter()
            .map(|r| Ok((r.class, load_mask(base.join(&r.path), threshold)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(classes, priority)
    }

    pub fn header(&self) -> Option<&VolumeHeader> {
        self.classes.values().next().map(|m| m.header())
    }

    pub fn priority(&self) -> &[String] {
        &self.priority
    }
}

/// Assigns a component (voxel indices on `grid`) to the atlas class it
/// overlaps most; ties go to the higher-priority class and no overlap at all
/// gives [`UNCLASSIFIED`].
pub fn classify_component(voxels: &[usize], grid: &VolumeHeader, atlas: &PhenotypeAtlas) -> Result<String> {
    if let Some(h) = atlas.header() {
        if !h.same_geometry(grid) {
            return Err(Error::DimensionMismatch {
                left: grid.dims,
                right: h.dims,
            });
        }
    }
    let mut best: Option<(&str, usize)> = None;
    for name in &atlas.priority {
        let mask = atlas.classes[name].voxels();
        let overlap = voxels.iter().filter(|&&i| mask[i] != 0).count();
        if overlap > 0 && best.is_none_or(|(_, b)| overlap > b) {
            best = Some((name, overlap));
        }
    }
    Ok(best.map_or(UNCLASSIFIED, |(n, _)| n).to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedErrorRow {
    pub category: ErrorCategory,
    pub class: String,
    pub count: usize,
    pub volumes_mm3: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TypedErrorTable {
    /// Sorted by category, then class name; only populated pairs appear.
    pub rows: Vec<TypedErrorRow>,
}

impl TypedErrorTable {
    pub fn category_total(&self, cat: ErrorCategory) -> usize {
        self.rows.iter().filter(|r| r.category == cat).map(|r| r.count).sum()
    }

    pub fn count(&self, cat: ErrorCategory, class: &str) -> usize {
        self.rows
            .iter()
            .find(|r| r.category == cat && r.class == class)
            .map_or(0, |r| r.count)
    }

    /// Share of `cat` components that fell into `class`, in percent.
    pub fn percent(&self, cat: ErrorCategory, class: &str) -> f64 {
        let total = self.category_total(cat);
        if total == 0 {
            0.0
        } else {
            100.0 * self.count(cat, class) as f64 / total as f64
        }
    }

    fn from_entries(entries: BTreeMap<(ErrorCategory, String), Vec<f64>>) -> Self {
        TypedErrorTable {
            rows: entries
                .into_iter()
                .map(|((category, class), volumes_mm3)| TypedErrorRow {
                    category,
                    class,
                    count: volumes_mm3.len(),
                    volumes_mm3,
                })
                .collect(),
        }
    }

    /// Pools several per-scan tables into one.
    pub fn merge<'a>(tables: impl IntoIterator<Item = &'a TypedErrorTable>) -> Self {
        let mut entries: BTreeMap<(ErrorCategory, String), Vec<f64>> = BTreeMap::new();
        for t in tables {
            for r in &t.rows {
                entries
                    .entry((r.category, r.class.clone()))
                    .or_default()
                    .extend_from_slice(&r.volumes_mm3);
            }
        }
        Self::from_entries(entries)
    }
}

/// Classifies every TPL, FPL and FNL component of one scan.
pub fn typed_error_table(
    m: &LesionMatchResult,
    gt: &LabelMap,
    pred: &LabelMap,
    atlas: &PhenotypeAtlas,
) -> Result<TypedErrorTable> {
    let mut entries: BTreeMap<(ErrorCategory, String), Vec<f64>> = BTreeMap::new();
    if m.tpl.is_empty() && m.fpl.is_empty() && m.fnl.is_empty() {
        return Ok(TypedErrorTable::default());
    }
    let pred_vox = pred.component_voxels();
    let gt_vox = gt.component_voxels();
    let mut add = |cat, voxels: &[usize], header: &VolumeHeader| -> Result<()> {
        let class = classify_component(voxels, header, atlas)?;
        entries
            .entry((cat, class))
            .or_default()
            .push(voxels.len() as f64 * header.voxel_volume_mm3());
        Ok(())
    };
    for l in m.tpl_labels() {
        add(ErrorCategory::Tpl, &pred_vox[l as usize - 1], pred.header())?;
    }
    for &l in &m.fpl {
        add(ErrorCategory::Fpl, &pred_vox[l as usize - 1], pred.header())?;
    }
    for &l in &m.fnl {
        add(ErrorCategory::Fnl, &gt_vox[l as usize - 1], gt.header())?;
    }
    Ok(TypedErrorTable::from_entries(entries))
}

/// Error table for a scan without an atlas: every component is unclassified.
pub fn untyped_error_table(m: &LesionMatchResult) -> TypedErrorTable {
    let mut entries: BTreeMap<(ErrorCategory, String), Vec<f64>> = BTreeMap::new();
    let mut add = |cat, v: f64| entries.entry((cat, UNCLASSIFIED.to_string())).or_default().push(v);
    for l in m.tpl_labels() {
        add(ErrorCategory::Tpl, m.pred_volume_mm3(l));
    }
    for &l in &m.fpl {
        add(ErrorCategory::Fpl, m.pred_volume_mm3(l));
    }
    for &l in &m.fnl {
        add(ErrorCategory::Fnl, m.gt_volume_mm3(l));
    }
    TypedErrorTable::from_entries(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSummaryRow {
    pub category: ErrorCategory,
    /// Atlas class, or `"all"` for the whole category.
    pub class: String,
    pub count: usize,
    pub median_mm3: Option<f64>,
    pub q1_mm3: Option<f64>,
    pub q3_mm3: Option<f64>,
}

impl VolumeSummaryRow {
    pub fn median_ml(&self) -> Option<f64> {
        self.median_mm3.map(|v| v / 1000.0)
    }

    pub fn q1_ml(&self) -> Option<f64> {
        self.q1_mm3.map(|v| v / 1000.0)
    }

    pub fn q3_ml(&self) -> Option<f64> {
        self.q3_mm3.map(|v| v / 1000.0)
    }
}

fn summary_row(category: ErrorCategory, class: String, volumes: &[f64]) -> VolumeSummaryRow {
    if volumes.is_empty() {
        return VolumeSummaryRow {
            category,
            class,
            count: 0,
            median_mm3: None,
            q1_mm3: None,
            q3_mm3: None,
        };
    }
    let s = sorted_copy(volumes);
    VolumeSummaryRow {
        category,
        class,
        count: s.len(),
        median_mm3: Some(quantile_sorted(&s, 0.5)),
        q1_mm3: Some(quantile_sorted(&s, 0.25)),
        q3_mm3: Some(quantile_sorted(&s, 0.75)),
    }
}

/// Median and quartiles of component volume per category x class, plus one
/// `"all"` row per category that has components.
pub fn volume_summary(table: &TypedErrorTable) -> Vec<VolumeSummaryRow> {
    let mut out = Vec::new();
    for cat in ErrorCategory::ALL {
        let rows: Vec<&TypedErrorRow> = table.rows.iter().filter(|r| r.category == cat).collect();
        let all: Vec<f64> = rows.iter().flat_map(|r| r.volumes_mm3.iter().copied()).collect();
        if all.is_empty() {
            continue;
        }
        out.push(summary_row(cat, "all".into(), &all));
        for r in rows {
            out.push(summary_row(cat, r.class.clone(), &r.volumes_mm3));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub category: ErrorCategory,
    pub low_mm3: f64,
    pub high_mm3: f64,
    pub count: usize,
}

/// Counts of component volumes per category on log-spaced bins covering
/// whole decades, `bins_per_decade` bins per decade.
pub fn volume_histogram(table: &TypedErrorTable, bins_per_decade: usize) -> Vec<HistogramBin> {
    let all: Vec<f64> = table
        .rows
        .iter()
        .flat_map(|r| r.volumes_mm3.iter().copied())
        .filter(|v| *v > 0.0)
        .collect();
    if all.is_empty() || bins_per_decade == 0 {
        return Vec::new();
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min).log10().floor() as i32;
    let mut hi = all.iter().copied().fold(0.0, f64::max).log10().ceil() as i32;
    if hi <= lo {
        hi = lo + 1;
    }
    let nbins = (hi - lo) as usize * bins_per_decade;
    let edge = |k: usize| 10f64.powf(lo as f64 + k as f64 / bins_per_decade as f64);
    let bin_of = |v: f64| {
        let t = (v.log10() - lo as f64) * bins_per_decade as f64;
        (t.floor().max(0.0) as usize).min(nbins - 1)
    };
    let mut out = Vec::new();
    for cat in ErrorCategory::ALL {
        let mut counts = vec![0usize; nbins];
        for r in table.rows.iter().filter(|r| r.category == cat) {
            for &v in r.volumes_mm3.iter().filter(|v| **v > 0.0) {
                counts[bin_of(v)] += 1;
            }
        }
        if counts.iter().all(|&c| c == 0) {
            continue;
        }
        for (k, count) in counts.into_iter().enumerate() {
            out.push(HistogramBin {
                category: cat,
                low_mm3: edge(k),
                high_mm3: edge(k + 1),
                count,
            });
        }
    }
    out
}
