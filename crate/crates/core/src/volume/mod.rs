//! Binary mask volumes and their voxel geometry.
//!
//! Voxels are stored densely with the first axis varying fastest, the same
//! layout NIfTI uses on disk, so index `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`.

mod nifti;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use nifti::{read_nifti, write_label_map, write_mask, NiftiDatatype, RawVolume};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing voxel spacings of two volumes.
pub const SPACING_RTOL: f64 = 1e-4;

/// Default binarization threshold: `value > 0.5` is foreground.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    /// Millimetres per voxel along each axis.
    pub spacing: [f64; 3],
    pub datatype_code: i16,
    pub affine_present: bool,
    /// Rows of the sform matrix when present; read for diagnostics only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affine: Option<[[f64; 4]; 3]>,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let header = VolumeHeader {
            dims,
            spacing,
            datatype_code: NiftiDatatype::Uint8.code(),
            affine_present: false,
            affine: None,
        };
        header.check()?;
        Ok(header)
    }

    pub fn check(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all dims must be >= 1, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "all spacings must be positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn same_geometry(&self, other: &VolumeHeader) -> bool {
        validate_headers(self, other).is_ok()
    }
}

/// Volume of one voxel in millilitres (mm³ / 1000).
pub fn voxel_volume_ml(header: &VolumeHeader) -> f64 {
    header.voxel_volume_mm3() / 1000.0
}

/// A dense 3D binary grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    header: VolumeHeader,
    voxels: Vec<u8>,
}

impl MaskVolume {
    pub fn zeros(header: VolumeHeader) -> Self {
        let n = header.voxel_count();
        MaskVolume {
            header,
            voxels: vec![0; n],
        }
    }

    /// Builds a mask from raw voxel values; anything nonzero becomes 1.
    pub fn from_voxels(header: VolumeHeader, mut voxels: Vec<u8>) -> Result<Self> {
        header.check()?;
        if voxels.len() != header.voxel_count() {
            return Err(Error::InvalidArgument(format!(
                "voxel buffer has {} entries, dims {:?} need {}",
                voxels.len(),
                header.dims,
                header.voxel_count()
            )));
        }
        for v in voxels.iter_mut() {
            *v = u8::from(*v != 0);
        }
        Ok(MaskVolume { header, voxels })
    }

    pub fn from_fn(header: VolumeHeader, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = header.dims;
        let mut voxels = Vec::with_capacity(header.voxel_count());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    voxels.push(u8::from(f(x, y, z)));
                }
            }
        }
        MaskVolume { header, voxels }
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn dims(&self) -> [usize; 3] {
        self.header.dims
    }

    /// Voxel values, each 0 or 1.
    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let [nx, ny, _] = self.header.dims;
        x + nx * (y + ny * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.voxels[self.index(x, y, z)] != 0
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = self.index(x, y, z);
        self.voxels[i] = u8::from(on);
    }

    pub fn positive_count(&self) -> u64 {
        self.voxels.iter().map(|&v| v as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        !self.voxels.iter().any(|&v| v != 0)
    }

    /// Fraction of voxels that are foreground.
    pub fn positive_fraction(&self) -> f64 {
        self.positive_count() as f64 / self.voxels.len() as f64
    }
}

/// Loads a NIfTI-1 file (plain or gzip) and binarizes it with `value > threshold`.
pub fn load_mask(path: impl AsRef<Path>, threshold: f64) -> Result<MaskVolume> {
    let raw = read_nifti(path.as_ref())?;
    Ok(raw.binarize(threshold))
}

/// Outcome of a successful geometry check; orientation differences are
/// reported here rather than failing the pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairValidation {
    pub warnings: Vec<String>,
}

fn validate_headers(gt: &VolumeHeader, pred: &VolumeHeader) -> Result<PairValidation> {
    if gt.dims != pred.dims {
        return Err(Error::DimensionMismatch {
            left: gt.dims,
            right: pred.dims,
        });
    }
    let spacing_ok = gt
        .spacing
        .iter()
        .zip(pred.spacing.iter())
        .all(|(&a, &b)| (a - b).abs() <= SPACING_RTOL * a.abs().max(b.abs()));
    if !spacing_ok {
        return Err(Error::SpacingMismatch {
            left: gt.spacing,
            right: pred.spacing,
        });
    }
    let mut warnings = Vec::new();
    if let (Some(a), Some(b)) = (&gt.affine, &pred.affine) {
        let differs = a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .any(|(p, q)| (p - q).abs() > 1e-3 * (1.0 + p.abs().max(q.abs())));
        if differs {
            warnings.push("affine orientation differs between ground truth and prediction".into());
        }
    } else if gt.affine_present != pred.affine_present {
        warnings.push("only one of the pair carries an affine".into());
    }
    Ok(PairValidation { warnings })
}

/// Checks that two volumes share a voxel grid: identical dims and spacing
/// equal within a relative tolerance of 1e-4.
pub fn validate_pair(gt: &MaskVolume, pred: &MaskVolume) -> Result<PairValidation> {
    let v = validate_headers(&gt.header, &pred.header)?;
    for w in &v.warnings {
        log::warn!("{w}");
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dims: [usize; 3], spacing: [f64; 3]) -> VolumeHeader {
        VolumeHeader::new(dims, spacing).unwrap()
    }

    #[test]
    fn voxel_volume_in_ml() {
        let cases = [
            ([1.0, 1.0, 1.2], 0.0012),
            ([1.0, 1.0, 1.0], 0.001),
            ([0.5, 0.5, 0.5], 0.000125),
        ];
        for (spacing, expected) in cases {
            let ml = voxel_volume_ml(&header([2, 2, 2], spacing));
            assert!((ml - expected).abs() < 1e-15, "{spacing:?} -> {ml}");
        }
    }

    #[test]
    fn header_rejects_zero_dim_and_bad_spacing() {
        assert!(VolumeHeader::new([0, 1, 1], [1.0; 3]).is_err());
        assert!(VolumeHeader::new([1, 1, 1], [1.0, 0.0, 1.0]).is_err());
        assert!(VolumeHeader::new([1, 1, 1], [1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn validate_pair_cases() {
        let a = MaskVolume::zeros(header([4, 4, 4], [1.0; 3]));
        assert!(validate_pair(&a, &a.clone()).is_ok());

        let big = MaskVolume::zeros(header([256, 256, 256], [1.0; 3]));
        let short = MaskVolume::zeros(header([256, 256, 192], [1.0; 3]));
        assert!(matches!(
            validate_pair(&big, &short),
            Err(Error::DimensionMismatch { .. })
        ));

        let b = MaskVolume::zeros(header([4, 4, 4], [1.0, 1.0, 1.2]));
        assert!(matches!(
            validate_pair(&a, &b),
            Err(Error::SpacingMismatch { .. })
        ));

        let nearly = MaskVolume::zeros(header([4, 4, 4], [1.0, 1.0, 1.00005]));
        assert!(validate_pair(&a, &nearly).is_ok());
    }

    #[test]
    fn from_voxels_binarizes_and_checks_length() {
        let h = header([2, 1, 1], [1.0; 3]);
        let m = MaskVolume::from_voxels(h.clone(), vec![0, 7]).unwrap();
        assert_eq!(m.voxels(), &[0, 1]);
        assert!(MaskVolume::from_voxels(h, vec![1]).is_err());
    }

    #[test]
    fn index_is_x_fastest() {
        let h = header([3, 4, 5], [1.0; 3]);
        let m = MaskVolume::from_fn(h, |x, y, z| (x, y, z) == (2, 1, 3));
        assert_eq!(m.positive_count(), 1);
        assert_eq!(m.voxels()[2 + 3 * (1 + 4 * 3)], 1);
        assert!(m.get(2, 1, 3));
    }
}
