//! Voxel-level overlap: confusion counts, Dice and normalized Dice.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{validate_pair, MaskVolume};

/// Clamp margin applied to the reference fraction so that kappa stays finite.
pub const REFERENCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn gt_positive(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn pred_positive(&self) -> u64 {
        self.tp + self.fp
    }

    /// Ground-truth foreground fraction of the grid.
    pub fn gt_fraction(&self) -> f64 {
        self.gt_positive() as f64 / self.total() as f64
    }

    /// Ground-truth positive/negative ratio `h`.
    pub fn class_ratio(&self) -> f64 {
        let neg = self.fp + self.tn;
        if neg == 0 {
            f64::INFINITY
        } else {
            self.gt_positive() as f64 / neg as f64
        }
    }

    /// Counts with the roles of ground truth and prediction exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tn,
        }
    }
}

/// Class-load correction for one scan: `kappa = h * (1/r - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdscParams {
    pub r: f64,
    pub h: f64,
    pub kappa: f64,
}

impl NdscParams {
    pub fn new(r: f64, h: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "reference fraction r must lie in (0, 1), got {r}"
            )));
        }
        if h.is_nan() || h < 0.0 {
            return Err(Error::InvalidArgument(format!("class ratio h must be >= 0, got {h}")));
        }
        Ok(NdscParams {
            r,
            h,
            kappa: h * (1.0 / r - 1.0),
        })
    }
}

/// Voxelwise confusion counts of `pred` against `gt`.
pub fn confusion_counts(gt: &MaskVolume, pred: &MaskVolume) -> Result<ConfusionCounts> {
    validate_pair(gt, pred)?;
    // histogram over the 2-bit code gt*2 + pred
    let mut hist = [0u64; 4];
    for (&g, &p) in gt.voxels().iter().zip(pred.voxels()) {
        hist[((g << 1) | p) as usize] += 1;
    }
    Ok(ConfusionCounts {
        tn: hist[0],
        fp: hist[1],
        fn_: hist[2],
        tp: hist[3],
    })
}

/// `2TP / (2TP + FP + FN)`; 1.0 when both masks are empty.
pub fn dsc(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// Mean ground-truth foreground fraction, clamped into `(eps, 1 - eps)`.
pub fn reference_fraction(gt_fractions: &[f64]) -> Result<f64> {
    if gt_fractions.is_empty() {
        return Err(Error::EmptyInput("reference_fraction needs at least one scan"));
    }
    if let Some(bad) = gt_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidArgument(format!(
            "foreground fractions must lie in [0, 1], got {bad}"
        )));
    }
    let mean = gt_fractions.iter().sum::<f64>() / gt_fractions.len() as f64;
    let clamped = mean.clamp(REFERENCE_EPS, 1.0 - REFERENCE_EPS);
    if clamped != mean {
        log::warn!("reference fraction {mean} clamped to {clamped}");
    }
    Ok(clamped)
}

/// Normalized Dice `2TP / (2TP + kappa*FP + FN)` with `kappa` built from the
/// scan's own ground-truth class ratio.
pub fn ndsc(c: &ConfusionCounts, r: f64) -> Result<f64> {
    let params = NdscParams::new(r, if c.fp + c.tn == 0 { 0.0 } else { c.class_ratio() })?;
    if c.gt_positive() == 0 {
        return Ok(if c.fp == 0 { 1.0 } else { 0.0 });
    }
    let tp2 = 2.0 * c.tp as f64;
    // fp == 0 whenever the ground truth fills the grid, so skip kappa there
    let weighted_fp = if c.fp == 0 { 0.0 } else { params.kappa * c.fp as f64 };
    let denom = tp2 + weighted_fp + c.fn_ as f64;
    Ok(if denom == 0.0 { 1.0 } else { tp2 / denom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeHeader;
    use proptest::prelude::*;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn confusion_examples() {
        let h = VolumeHeader::new([4, 4, 4], [1.0; 3]).unwrap();
        let gt = MaskVolume::from_fn(h.clone(), |x, y, z| y == 0 && z == 0 && x <= 1);
        let pred = MaskVolume::from_fn(h.clone(), |x, y, z| y == 0 && z == 0 && (x == 1 || x == 2));
        assert_eq!(confusion_counts(&gt, &pred).unwrap(), counts(1, 1, 1, 61));

        let c = confusion_counts(&gt, &gt).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 0, 0));

        let empty = MaskVolume::zeros(h.clone());
        let c = confusion_counts(&gt, &empty).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 2));

        let other = MaskVolume::zeros(VolumeHeader::new([4, 4, 5], [1.0; 3]).unwrap());
        assert!(confusion_counts(&gt, &other).is_err());
    }

    #[test]
    fn dsc_examples() {
        assert!((dsc(&counts(3, 1, 2, 0)) - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(dsc(&counts(5, 0, 0, 10)), 1.0);
        assert_eq!(dsc(&counts(0, 4, 0, 10)), 0.0);
        assert_eq!(dsc(&counts(0, 0, 0, 10)), 1.0);
    }

    #[test]
    fn reference_fraction_examples() {
        assert!((reference_fraction(&[0.001, 0.003]).unwrap() - 0.002).abs() < 1e-15);
        assert_eq!(reference_fraction(&[0.5]).unwrap(), 0.5);
        assert_eq!(reference_fraction(&[0.0, 0.0]).unwrap(), REFERENCE_EPS);
        assert!(reference_fraction(&[]).is_err());
        assert!(reference_fraction(&[1.5]).is_err());
    }

    #[test]
    fn ndsc_examples() {
        for r in [0.001, 0.2, 0.9] {
            assert_eq!(ndsc(&counts(7, 0, 0, 100), r).unwrap(), 1.0);
        }
        // 1000-voxel grid, 10 gt positives, tp=10, fp=10, fn=0, r=0.001
        let c = counts(10, 10, 0, 980);
        let kappa: f64 = (10.0 / 990.0) * 999.0;
        assert!((kappa - 10.0909).abs() < 1e-4);
        let v = ndsc(&c, 0.001).unwrap();
        assert!((v - 20.0 / (20.0 + kappa * 10.0)).abs() < 1e-15);
        assert!((v - 0.1654).abs() < 1e-4);

        assert!(ndsc(&c, 0.0).is_err());
        assert!(ndsc(&c, 1.0).is_err());
    }

    #[test]
    fn ndsc_degenerate_gt_empty() {
        assert_eq!(ndsc(&counts(0, 0, 0, 50), 0.1).unwrap(), 1.0);
        assert_eq!(ndsc(&counts(0, 3, 0, 47), 0.1).unwrap(), 0.0);
    }

    #[test]
    fn ndsc_equals_dsc_when_kappa_is_one() {
        // r = 0.2 -> h must be 0.25: 20 gt positives over 80 negatives
        let c = counts(12, 5, 8, 75);
        assert!((c.class_ratio() - 0.25).abs() < 1e-15);
        assert!((ndsc(&c, 0.2).unwrap() - dsc(&c)).abs() < 1e-12);
    }

    #[test]
    fn ndsc_params_identity() {
        let p = NdscParams::new(0.2, 0.25).unwrap();
        assert!((p.kappa - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn metrics_bounded(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..100000, r in 0.0001f64..0.9999) {
            let c = counts(tp, fp, fn_, tn);
            let d = dsc(&c);
            prop_assert!((0.0..=1.0).contains(&d));
            let n = ndsc(&c, r).unwrap();
            prop_assert!((0.0..=1.0).contains(&n));
            prop_assert_eq!(dsc(&c.swapped()), d);
        }

        #[test]
        fn ndsc_monotone(tp in 1u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 1000u64..50000, r in 0.001f64..0.5) {
            // hold the ground truth (tp+fn, fp+tn) fixed while moving one count
            let base = ndsc(&counts(tp, fp, fn_, tn), r).unwrap();
            let more_fp = ndsc(&counts(tp, fp + 1, fn_, tn - 1), r).unwrap();
            prop_assert!(more_fp <= base + 1e-15);
            let more_fn = ndsc(&counts(tp - 1, fp, fn_ + 1, tn), r).unwrap();
            prop_assert!(more_fn <= base + 1e-15);
        }
    }
}
