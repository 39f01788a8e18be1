//! Synthetic box phantoms with analytically known confusion and lesion counts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{write_mask, MaskVolume, VolumeHeader};

pub const PHANTOM_DIMS: [usize; 3] = [32, 32, 32];

/// Axis-aligned block of voxels `[origin, origin + size)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub origin: [usize; 3],
    pub size: [usize; 3],
}

impl BoxRegion {
    pub const fn new(origin: [usize; 3], size: [usize; 3]) -> Self {
        BoxRegion { origin, size }
    }

    pub fn volume(&self) -> u64 {
        self.size.iter().map(|&s| s as u64).product()
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] < self.origin[a] + self.size[a])
    }

    pub fn intersection(&self, other: &BoxRegion) -> u64 {
        (0..3)
            .map(|a| {
                let lo = self.origin[a].max(other.origin[a]);
                let hi = (self.origin[a] + self.size[a]).min(other.origin[a] + other.size[a]);
                hi.saturating_sub(lo) as u64
            })
            .product()
    }

    /// True when some voxel of `self` is 26-adjacent to or inside `other`.
    fn touches(&self, other: &BoxRegion) -> bool {
        (0..3).all(|a| {
            self.origin[a] <= other.origin[a] + other.size[a] && other.origin[a] <= self.origin[a] + self.size[a]
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomScan {
    pub scan_id: String,
    pub site: String,
    pub modality: String,
    pub field_strength: String,
    pub disease: String,
    pub gt: Vec<BoxRegion>,
    pub pred: Vec<BoxRegion>,
}

/// Counts implied by the box layout, independent of any labeling code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomExpectation {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub tpl: usize,
    pub fpl: usize,
    pub fnl: usize,
    pub gt_lesions: usize,
    pub pred_lesions: usize,
}

fn scan(
    id: &str,
    site: &str,
    modality: &str,
    field: &str,
    disease: &str,
    gt: &[BoxRegion],
    pred: &[BoxRegion],
) -> PhantomScan {
    PhantomScan {
        scan_id: id.into(),
        site: site.into(),
        modality: modality.into(),
        field_strength: field.into(),
        disease: disease.into(),
        gt: gt.to_vec(),
        pred: pred.to_vec(),
    }
}

/// The shipped five-scan suite: partial detection with a one-voxel overlap,
/// a perfect prediction, a missed scan, and two lesion-free mimic scans.
pub fn phantom_suite() -> Vec<PhantomScan> {
    let b = BoxRegion::new;
    vec![
        scan(
            "s01",
            "A",
            "MPRAGE",
            "3T",
            "MS",
            &[b([2, 2, 2], [4, 4, 4]), b([10, 10, 10], [3, 3, 3]), b([20, 20, 20], [2, 2, 2])],
            &[b([3, 2, 2], [4, 4, 4]), b([26, 26, 26], [3, 3, 3]), b([21, 21, 21], [2, 2, 2])],
        ),
        scan(
            "s02",
            "A",
            "MP2RAGE",
            "3T",
            "MS",
            &[b([5, 5, 5], [5, 5, 5]), b([20, 5, 20], [2, 3, 4])],
            &[b([5, 5, 5], [5, 5, 5]), b([20, 5, 20], [2, 3, 4])],
        ),
        scan(
            "s03",
            "B",
            "MPRAGE",
            "7T",
            "MS",
            &[b([8, 8, 8], [3, 3, 3]), b([18, 18, 4], [4, 2, 2])],
            &[],
        ),
        scan("s04", "B", "MP2RAGE", "7T", "MS-mimic", &[], &[b([12, 12, 12], [2, 2, 2])]),
        scan("s05", "C", "MPRAGE", "3T", "MS-mimic", &[], &[]),
    ]
}

fn check_separated(boxes: &[BoxRegion]) -> Result<()> {
    for (i, a) in boxes.iter().enumerate() {
        if (0..3).any(|k| a.size[k] == 0 || a.origin[k] + a.size[k] > PHANTOM_DIMS[k]) {
            return Err(Error::InvalidArgument(format!("box {a:?} is empty or outside the grid")));
        }
        if boxes[i + 1..].iter().any(|b| a.touches(b)) {
            return Err(Error::InvalidArgument(format!("box {a:?} touches another box of the same mask")));
        }
    }
    Ok(())
}

/// Expected counts for a scan whose boxes within each mask are pairwise
/// non-adjacent (so each box is one component at any connectivity).
pub fn expected_counts(s: &PhantomScan) -> Result<PhantomExpectation> {
    check_separated(&s.gt)?;
    check_separated(&s.pred)?;
    let gt_vol: u64 = s.gt.iter().map(BoxRegion::volume).sum();
    let pred_vol: u64 = s.pred.iter().map(BoxRegion::volume).sum();
    let tp: u64 = s.gt.iter().flat_map(|g| s.pred.iter().map(move |p| g.intersection(p))).sum();
    let total: u64 = PHANTOM_DIMS.iter().map(|&d| d as u64).product();
    let tpl = s.pred.iter().filter(|p| s.gt.iter().any(|g| g.intersection(p) > 0)).count();
    let fnl = s.gt.iter().filter(|g| s.pred.iter().all(|p| g.intersection(p) == 0)).count();
    Ok(PhantomExpectation {
        tp,
        fp: pred_vol - tp,
        fn_: gt_vol - tp,
        tn: total - gt_vol - pred_vol + tp,
        tpl,
        fpl: s.pred.len() - tpl,
        fnl,
        gt_lesions: s.gt.len(),
        pred_lesions: s.pred.len(),
    })
}

pub fn phantom_header() -> VolumeHeader {
    VolumeHeader::new(PHANTOM_DIMS, [1.0; 3]).expect("valid phantom grid")
}

pub fn render(boxes: &[BoxRegion]) -> MaskVolume {
    MaskVolume::from_fn(phantom_header(), |x, y, z| boxes.iter().any(|b| b.contains([x, y, z])))
}

/// Two-class atlas: "cortex" below z = 12, "wm" from z = 16 up, nothing in
/// between.
pub fn phantom_atlas() -> Vec<(String, MaskVolume)> {
    let h = phantom_header();
    vec![
        ("cortex".into(), MaskVolume::from_fn(h.clone(), |_, _, z| z < 12)),
        ("wm".into(), MaskVolume::from_fn(h, |_, _, z| z >= 16)),
    ]
}

#[derive(Serialize)]
struct ExpectedRow<'a> {
    scan_id: &'a str,
    #[serde(flatten)]
    counts: PhantomExpectation,
}

/// Writes masks, atlas, `pairs.csv` and `expected.json` into `dir`.
pub fn write_suite(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let suite = phantom_suite();

    let mut atlas_csv = csv::Writer::from_path(dir.join("atlas.csv"))?;
    atlas_csv.write_record(["class", "path", "priority_rank"])?;
    for (rank, (class, mask)) in phantom_atlas().iter().enumerate() {
        let file = format!("atlas_{class}.nii.gz");
        write_mask(dir.join(&file), mask)?;
        atlas_csv.write_record([class.as_str(), &file, &(rank + 1).to_string()])?;
    }
    atlas_csv.flush().map_err(|e| Error::io(dir.join("atlas.csv"), e))?;

    let mut pairs = csv::Writer::from_path(dir.join("pairs.csv"))?;
    pairs.write_record([
        "scan_id",
        "gt_path",
        "pred_path",
        "site",
        "modality",
        "field_strength",
        "disease",
        "atlas_manifest",
    ])?;
    let mut expected = Vec::new();
    for s in &suite {
        let gt = format!("{}_gt.nii.gz", s.scan_id);
        let pred = format!("{}_pred.nii.gz", s.scan_id);
        write_mask(dir.join(&gt), &render(&s.gt))?;
        write_mask(dir.join(&pred), &render(&s.pred))?;
        pairs.write_record([
            s.scan_id.as_str(),
            &gt,
            &pred,
            &s.site,
            &s.modality,
            &s.field_strength,
            &s.disease,
            "atlas.csv",
        ])?;
        expected.push(ExpectedRow {
            scan_id: &s.scan_id,
            counts: expected_counts(s)?,
        });
    }
    pairs.flush().map_err(|e| Error::io(dir.join("pairs.csv"), e))?;

    let mut json = serde_json::to_string_pretty(&expected)?;
    json.push('\n');
    let p = dir.join("expected.json");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))
}
