//! C ABI over the lesioneval core.
//!
//! Masks and label maps are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`LeStatus`]; on failure `le_last_error_message` describes the error for
//! the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lesioneval::labeling::{label_components, Connectivity, LabelMap};
use lesioneval::lesion_metrics::{detection_metrics, match_lesions};
use lesioneval::stats::{bh_fdr, mann_whitney_u, wilcoxon_signed_rank, Method, TestResult};
use lesioneval::volume::{load_mask, MaskVolume, VolumeHeader};
use lesioneval::voxel_metrics::{confusion_counts, dsc, ndsc, ConfusionCounts};
use lesioneval::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    DimensionMismatch = 5,
    Degenerate = 6,
    Internal = 7,
}

pub struct LeMask {
    inner: MaskVolume,
}

pub struct LeLabelMap {
    inner: LabelMap,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LeConfusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LeDetection {
    pub f1: f64,
    pub precision: f64,
    /// NaN when `recall_defined` is 0 (lesion-free ground truth).
    pub recall: f64,
    pub recall_defined: u8,
    pub tpl: usize,
    pub fpl: usize,
    pub fnl: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeMethod {
    Exact = 0,
    NormalApprox = 1,
    ChiSquared = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: LeMethod,
    pub n_effective: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LeStatus {
    match e {
        Error::Io { .. } => LeStatus::Io,
        Error::Parse { .. } | Error::Schema { .. } | Error::Csv(_) | Error::Json(_) => LeStatus::Parse,
        Error::DimensionMismatch { .. } | Error::SpacingMismatch { .. } => LeStatus::DimensionMismatch,
        Error::Degenerate(_) => LeStatus::Degenerate,
        _ => LeStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (LeStatus, String)>) -> LeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            LeStatus::Internal
        }
    }
}

fn lift(e: Error) -> (LeStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LeStatus, String) {
    (LeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (LeStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

fn test_result(r: TestResult) -> LeTestResult {
    LeTestResult {
        statistic: r.statistic,
        p_value: r.p_value,
        method: match r.method {
            Method::Exact => LeMethod::Exact,
            Method::NormalApprox => LeMethod::NormalApprox,
            Method::ChiSquared => LeMethod::ChiSquared,
        },
        n_effective: r.n_effective,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn le_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn le_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a NIfTI-1 file (optionally gzipped) and binarizes it with
/// `value > threshold`.
#[no_mangle]
pub unsafe extern "C" fn le_mask_load(path: *const c_char, threshold: f64, out: *mut *mut LeMask) -> LeStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| (LeStatus::InvalidArgument, "path is not UTF-8".to_string()))?;
        let mask = load_mask(path, threshold).map_err(lift)?;
        *out = Box::into_raw(Box::new(LeMask { inner: mask }));
        Ok(())
    })
}

/// Copies `nx * ny * nz` voxels (x fastest; nonzero is foreground) into a
/// new mask.
#[no_mangle]
pub unsafe extern "C" fn le_mask_from_buffer(
    voxels: *const u8,
    nx: usize,
    ny: usize,
    nz: usize,
    spacing: *const f64,
    out: *mut *mut LeMask,
) -> LeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spacing = slice(spacing, 3, "spacing")?;
        let n = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or((LeStatus::InvalidArgument, "grid size overflows".to_string()))?;
        let data = slice(voxels, n, "voxels")?.to_vec();
        let header = VolumeHeader::new([nx, ny, nz], [spacing[0], spacing[1], spacing[2]]).map_err(lift)?;
        let mask = MaskVolume::from_voxels(header, data).map_err(lift)?;
        *out = Box::into_raw(Box::new(LeMask { inner: mask }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn le_mask_free(mask: *mut LeMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// Writes the grid dimensions into `dims[0..3]`.
#[no_mangle]
pub unsafe extern "C" fn le_mask_dims(mask: *const LeMask, dims: *mut usize) -> LeStatus {
    guard(|| {
        let m = mask.as_ref().ok_or_else(|| null("mask"))?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let d = m.inner.dims();
        std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&d);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn le_mask_positive_count(mask: *const LeMask, out: *mut u64) -> LeStatus {
    guard(|| {
        let m = mask.as_ref().ok_or_else(|| null("mask"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.inner.positive_count();
        Ok(())
    })
}

/// Labels connected components; `connectivity` is 6, 18 or 26.
#[no_mangle]
pub unsafe extern "C" fn le_label_components(
    mask: *const LeMask,
    connectivity: u8,
    out: *mut *mut LeLabelMap,
) -> LeStatus {
    guard(|| {
        let m = mask.as_ref().ok_or_else(|| null("mask"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let conn = match connectivity {
            6 => Connectivity::Six,
            18 => Connectivity::Eighteen,
            26 => Connectivity::TwentySix,
            c => return Err((LeStatus::InvalidArgument, format!("connectivity must be 6, 18 or 26, got {c}"))),
        };
        *out = Box::into_raw(Box::new(LeLabelMap {
            inner: label_components(&m.inner, conn),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn le_label_map_free(labels: *mut LeLabelMap) {
    if !labels.is_null() {
        drop(Box::from_raw(labels));
    }
}

#[no_mangle]
pub unsafe extern "C" fn le_label_map_count(labels: *const LeLabelMap, out: *mut usize) -> LeStatus {
    guard(|| {
        let l = labels.as_ref().ok_or_else(|| null("labels"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = l.inner.component_count();
        Ok(())
    })
}

/// Borrows the label array (0 = background, components 1..=count in raster
/// order of first voxel). Valid while the label map lives.
#[no_mangle]
pub unsafe extern "C" fn le_label_map_labels(
    labels: *const LeLabelMap,
    out: *mut *const u32,
    len: *mut usize,
) -> LeStatus {
    guard(|| {
        let l = labels.as_ref().ok_or_else(|| null("labels"))?;
        if out.is_null() || len.is_null() {
            return Err(null("out"));
        }
        *out = l.inner.labels().as_ptr();
        *len = l.inner.labels().len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn le_confusion_counts(
    gt: *const LeMask,
    pred: *const LeMask,
    out: *mut LeConfusion,
) -> LeStatus {
    guard(|| {
        let g = gt.as_ref().ok_or_else(|| null("gt"))?;
        let p = pred.as_ref().ok_or_else(|| null("pred"))?;
        let c = confusion_counts(&g.inner, &p.inner).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = LeConfusion {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
        };
        Ok(())
    })
}

fn counts(c: &LeConfusion) -> ConfusionCounts {
    ConfusionCounts {
        tp: c.tp,
        fp: c.fp,
        fn_: c.fn_,
        tn: c.tn,
    }
}

#[no_mangle]
pub unsafe extern "C" fn le_dsc(c: *const LeConfusion, out: *mut f64) -> LeStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("counts"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = dsc(&counts(c));
        Ok(())
    })
}

/// Normalized Dice with reference foreground fraction `r` in (0, 1).
#[no_mangle]
pub unsafe extern "C" fn le_ndsc(c: *const LeConfusion, r: f64, out: *mut f64) -> LeStatus {
    guard(|| {
        let c = c.as_ref().ok_or_else(|| null("counts"))?;
        let v = ndsc(&counts(c), r).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// Lesion-level detection scores from two label maps on the same grid.
#[no_mangle]
pub unsafe extern "C" fn le_detection(
    gt: *const LeLabelMap,
    pred: *const LeLabelMap,
    out: *mut LeDetection,
) -> LeStatus {
    guard(|| {
        let g = gt.as_ref().ok_or_else(|| null("gt"))?;
        let p = pred.as_ref().ok_or_else(|| null("pred"))?;
        let m = match_lesions(&g.inner, &p.inner).map_err(lift)?;
        let d = detection_metrics(&m, m.gt_empty());
        *out.as_mut().ok_or_else(|| null("out"))? = LeDetection {
            f1: d.f1,
            precision: d.precision,
            recall: d.recall.unwrap_or(f64::NAN),
            recall_defined: d.recall.is_some() as u8,
            tpl: d.tpl_count,
            fpl: d.fpl_count,
            fnl: d.fnl_count,
        };
        Ok(())
    })
}

/// Two-sided Wilcoxon signed-rank test on paired differences.
#[no_mangle]
pub unsafe extern "C" fn le_wilcoxon(diffs: *const f64, n: usize, out: *mut LeTestResult) -> LeStatus {
    guard(|| {
        let d = slice(diffs, n, "diffs")?;
        let r = wilcoxon_signed_rank(d).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = test_result(r);
        Ok(())
    })
}

/// Two-sided Mann-Whitney U test; the statistic is U of the first sample.
#[no_mangle]
pub unsafe extern "C" fn le_mann_whitney(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    out: *mut LeTestResult,
) -> LeStatus {
    guard(|| {
        let a = slice(a, na, "a")?;
        let b = slice(b, nb, "b")?;
        let r = mann_whitney_u(a, b).map_err(lift)?;
        *out.as_mut().ok_or_else(|| null("out"))? = test_result(r);
        Ok(())
    })
}

/// Benjamini-Hochberg adjusted p-values written to `adjusted[0..n]`.
#[no_mangle]
pub unsafe extern "C" fn le_bh_fdr(p: *const f64, n: usize, q: f64, adjusted: *mut f64) -> LeStatus {
    guard(|| {
        let p = slice(p, n, "p")?;
        let r = bh_fdr(p, q).map_err(lift)?;
        if n > 0 {
            if adjusted.is_null() {
                return Err(null("adjusted"));
            }
            std::slice::from_raw_parts_mut(adjusted, n).copy_from_slice(&r.adjusted_p);
        }
        Ok(())
    })
}
