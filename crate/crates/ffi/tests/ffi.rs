use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use lesioneval_ffi::*;

unsafe fn mask(dims: [usize; 3], on: &[usize]) -> *mut LeMask {
    let mut v = vec![0u8; dims.iter().product()];
    for &i in on {
        v[i] = 1;
    }
    let mut out = ptr::null_mut();
    let st = le_mask_from_buffer(v.as_ptr(), dims[0], dims[1], dims[2], [1.0; 3].as_ptr(), &mut out);
    assert_eq!(st, LeStatus::Ok);
    out
}

unsafe fn last_error() -> String {
    CStr::from_ptr(le_last_error_message()).to_string_lossy().into_owned()
}

#[test]
fn label_and_score_roundtrip() {
    unsafe {
        // 4x1x1 line: gt {0,1} {3}, pred {1}
        let gt = mask([4, 1, 1], &[0, 1, 3]);
        let pred = mask([4, 1, 1], &[1]);
        let mut dims = [0usize; 3];
        assert_eq!(le_mask_dims(gt, dims.as_mut_ptr()), LeStatus::Ok);
        assert_eq!(dims, [4, 1, 1]);

        let mut c = LeConfusion::default();
        assert_eq!(le_confusion_counts(gt, pred, &mut c), LeStatus::Ok);
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 0, 2, 1));
        let mut d = 0.0;
        assert_eq!(le_dsc(&c, &mut d), LeStatus::Ok);
        assert!((d - 0.5).abs() < 1e-15);

        let (mut gl, mut pl) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(le_label_components(gt, 26, &mut gl), LeStatus::Ok);
        assert_eq!(le_label_components(pred, 6, &mut pl), LeStatus::Ok);
        let mut n = 0;
        assert_eq!(le_label_map_count(gl, &mut n), LeStatus::Ok);
        assert_eq!(n, 2);
        let (mut labels, mut len) = (ptr::null(), 0);
        assert_eq!(le_label_map_labels(gl, &mut labels, &mut len), LeStatus::Ok);
        assert_eq!(std::slice::from_raw_parts(labels, len), &[1, 1, 0, 2]);

        let mut det = LeDetection::default();
        assert_eq!(le_detection(gl, pl, &mut det), LeStatus::Ok);
        assert_eq!((det.tpl, det.fpl, det.fnl), (1, 0, 1));
        assert_eq!(det.recall_defined, 1);
        assert!((det.f1 - 2.0 / 3.0).abs() < 1e-15);

        le_label_map_free(gl);
        le_label_map_free(pl);
        le_mask_free(gt);
        le_mask_free(pred);
    }
}

#[test]
fn lesion_free_recall_undefined() {
    unsafe {
        let gt = mask([3, 3, 1], &[]);
        let pred = mask([3, 3, 1], &[]);
        let (mut gl, mut pl) = (ptr::null_mut(), ptr::null_mut());
        le_label_components(gt, 26, &mut gl);
        le_label_components(pred, 26, &mut pl);
        let mut det = LeDetection::default();
        assert_eq!(le_detection(gl, pl, &mut det), LeStatus::Ok);
        assert_eq!(det.recall_defined, 0);
        assert!(det.recall.is_nan());
        assert_eq!((det.f1, det.precision), (1.0, 1.0));
        le_label_map_free(gl);
        le_label_map_free(pl);
        le_mask_free(gt);
        le_mask_free(pred);
    }
}

#[test]
fn error_codes_and_messages() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(le_mask_load(ptr::null(), 0.5, &mut out), LeStatus::NullPointer);
        let missing = CString::new("/nonexistent/mask.nii.gz").unwrap();
        assert_eq!(le_mask_load(missing.as_ptr(), 0.5, &mut out), LeStatus::Io);
        assert!(last_error().contains("/nonexistent/mask.nii.gz"));

        let a = mask([2, 2, 2], &[0]);
        let b = mask([2, 2, 1], &[0]);
        let mut c = LeConfusion::default();
        assert_eq!(le_confusion_counts(a, b, &mut c), LeStatus::DimensionMismatch);
        let mut l = ptr::null_mut();
        assert_eq!(le_label_components(a, 7, &mut l), LeStatus::InvalidArgument);
        assert!(last_error().contains("connectivity"));
        le_mask_free(a);
        le_mask_free(b);

        let mut r = 0.0;
        assert_eq!(le_ndsc(&LeConfusion { tp: 1, fp: 0, fn_: 0, tn: 1 }, 1.5, &mut r), LeStatus::InvalidArgument);

        let zeros = [0.0; 3];
        let mut t = LeTestResult {
            statistic: 0.0,
            p_value: 0.0,
            method: LeMethod::Exact,
            n_effective: 0,
        };
        assert_eq!(le_wilcoxon(zeros.as_ptr(), 3, &mut t), LeStatus::Degenerate);
    }
}

#[test]
fn stats_entry_points() {
    unsafe {
        let diffs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut t = LeTestResult {
            statistic: 0.0,
            p_value: 0.0,
            method: LeMethod::ChiSquared,
            n_effective: 0,
        };
        assert_eq!(le_wilcoxon(diffs.as_ptr(), 5, &mut t), LeStatus::Ok);
        assert_eq!(t.method, LeMethod::Exact);
        assert!((t.p_value - 2.0 / 32.0).abs() < 1e-15);

        let (a, b) = ([1.0, 2.0], [3.0, 4.0]);
        assert_eq!(le_mann_whitney(a.as_ptr(), 2, b.as_ptr(), 2, &mut t), LeStatus::Ok);
        assert!((t.p_value - 1.0 / 3.0).abs() < 1e-15);

        let p = [0.01, 0.04, 0.03, 0.2];
        let mut adj = [0.0; 4];
        assert_eq!(le_bh_fdr(p.as_ptr(), 4, 0.05, adj.as_mut_ptr()), LeStatus::Ok);
        let third = 4.0 * 0.04 / 3.0;
        assert_eq!(adj, [0.04, third, third, 0.2]);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(le_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/lesioneval.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["le_mask_load", "le_label_components", "le_detection", "le_bh_fdr", "LE_STATUS_OK"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, "#include \"lesioneval.h\"\nint main(void) { return LE_STATUS_OK; }\n").unwrap();
    match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(status) => assert!(status.success(), "header does not compile"),
        Err(e) => eprintln!("no C compiler available ({e}); header compile check skipped"),
    }
}
