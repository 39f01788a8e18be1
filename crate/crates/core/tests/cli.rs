mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lesioneval::volume::{write_mask, MaskVolume, VolumeHeader};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lesioneval"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn csv_rows(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().map(String::from).zip(r.iter().map(String::from)).collect()
        })
        .collect()
}

fn validate(schema: &str, instance_path: &Path) {
    let schema: Value = serde_json::from_str(&fs::read_to_string(root().join("schemas").join(schema)).unwrap()).unwrap();
    let instance: Value = serde_json::from_str(&fs::read_to_string(instance_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{} violates {schema:?}: {errors:#?}", instance_path.display());
}

fn pairs_csv(dir: &Path, rows: &[(&str, &str, &str)]) -> PathBuf {
    let mut text = String::from("scan_id,gt_path,pred_path,site,modality,field_strength,disease\n");
    for (id, gt, pred) in rows {
        text.push_str(&format!("{id},{gt},{pred},A,MPRAGE,3T,MS\n"));
    }
    let path = dir.join("pairs.csv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn identical_masks_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rows = Vec::new();
    for i in 0..4 {
        let m = common::random_mask(&mut rng, [10, 9, 8]);
        write_mask(dir.path().join(format!("m{i}.nii.gz")), &m).unwrap();
        rows.push(format!("m{i}.nii.gz"));
    }
    let ids = ["a", "b", "c", "d"];
    let rows_spec: Vec<(&str, &str, &str)> = (0..4).map(|i| (ids[i], rows[i].as_str(), rows[i].as_str())).collect();
    let pairs = pairs_csv(dir.path(), &rows_spec);
    let out = dir.path().join("out");
    let o = run(&["evaluate", "--pairs", pairs.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for row in csv_rows(&out.join("per_scan.csv")) {
        assert_eq!(row["dsc"], "1");
        assert_eq!(row["fpl"], "0");
        assert_eq!(row["fnl"], "0");
    }
    validate("report.schema.json", &out.join("report.json"));
}

#[test]
fn mismatched_grid_fails_only_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let small = MaskVolume::zeros(VolumeHeader::new([8, 8, 8], [1.0; 3]).unwrap());
    let other = MaskVolume::zeros(VolumeHeader::new([8, 8, 6], [1.0; 3]).unwrap());
    write_mask(dir.path().join("a.nii"), &small).unwrap();
    write_mask(dir.path().join("b.nii"), &other).unwrap();
    let pairs = pairs_csv(dir.path(), &[("ok", "a.nii", "a.nii"), ("bad", "a.nii", "b.nii")]);
    let out = dir.path().join("out");
    let o = run(&["evaluate", "--pairs", pairs.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad"));
    let rows = csv_rows(&out.join("per_scan.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["scan_id"], "ok");
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"][0]["scan_id"], "bad");
    validate("report.schema.json", &out.join("report.json"));

    let pairs = pairs_csv(dir.path(), &[("bad", "a.nii", "b.nii")]);
    let o = run(&["evaluate", "--pairs", pairs.to_str().unwrap()], &dir.path().join("out2"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn manifest_errors_name_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    fs::write(
        &path,
        "scan_id,gt_path,pred_path,site,modality,field_strength,disease\na,x.nii,x.nii,A,M,3T,MS\na,y.nii,y.nii,A,M,3T,MS\n",
    )
    .unwrap();
    let o = run(&["evaluate", "--pairs", path.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("row 3"), "{err}");
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (mean, sd / n.sqrt())
}

#[test]
fn phantom_aggregates_match_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let pairs = root().join("fixtures/phantoms/pairs.csv");
    let o = run(&["evaluate", "--pairs", pairs.to_str().unwrap()], &out);
    assert!(o.status.success());

    let expected: Value =
        serde_json::from_str(&fs::read_to_string(root().join("fixtures/phantoms/expected.json")).unwrap()).unwrap();
    let (mut dsc, mut f1, mut precision, mut recall) = (vec![], vec![], vec![], vec![]);
    for e in expected.as_array().unwrap() {
        let g = |k: &str| e[k].as_f64().unwrap();
        let (tp, fp, fn_) = (g("tp"), g("fp"), g("fn"));
        let (tpl, fpl, fnl) = (g("tpl"), g("fpl"), g("fnl"));
        dsc.push(if tp + fp + fn_ == 0.0 { 1.0 } else { 2.0 * tp / (2.0 * tp + fp + fn_) });
        if g("gt_lesions") == 0.0 {
            let v = if fpl == 0.0 { 1.0 } else { 0.0 };
            f1.push(v);
            precision.push(v);
        } else if tpl + fpl == 0.0 {
            f1.push(0.0);
            precision.push(0.0);
            recall.push(0.0);
        } else {
            f1.push(2.0 * tpl / (2.0 * tpl + fpl + fnl));
            precision.push(tpl / (tpl + fpl));
            recall.push(tpl / (tpl + fnl));
        }
    }
    assert_eq!(recall.len(), 3);
    let rows = csv_rows(&out.join("aggregates.csv"));
    for (metric, values) in [("dsc", &dsc), ("f1", &f1), ("precision", &precision), ("recall", &recall)] {
        let row = rows
            .iter()
            .find(|r| r["site"] == "*" && r["disease"] == "*" && r["metric"] == metric)
            .unwrap();
        let (mean, se) = mean_se(values);
        let got_mean: f64 = row["mean"].parse().unwrap();
        let got_se: f64 = row["se"].parse().unwrap();
        assert!((got_mean - mean).abs() <= 1e-5 * mean.abs(), "{metric} mean {got_mean} vs {mean}");
        assert!((got_se - se).abs() <= 1e-5 * se.abs(), "{metric} se {got_se} vs {se}");
        assert_eq!(row["n"], values.len().to_string());
        assert_eq!(row["excluded"], (5 - values.len()).to_string());
    }
}

#[test]
fn split_reruns_are_identical_and_valid() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.csv");
    let mut text = String::from("subject_id,site,modality,field_strength,timepoint,lesion_count,total_lesion_volume_ml,path\n");
    for s in 0..30 {
        for t in 0..(1 + s % 3) {
            text.push_str(&format!("p{s},{},MPRAGE,3T,{t},{},{},\n", ["A", "B"][s % 2], s % 7, 0.1 * (s % 5) as f64));
        }
    }
    fs::write(&manifest, text).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["split", "--manifest", manifest.to_str().unwrap(), "--seed", "7"], out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(a.join("split.json")).unwrap(), fs::read(b.join("split.json")).unwrap());
    validate("split.schema.json", &a.join("split.json"));
}

#[test]
fn compare_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("ev");
    let pairs = root().join("fixtures/phantoms/pairs.csv");
    assert!(run(&["evaluate", "--pairs", pairs.to_str().unwrap()], &ev).status.success());
    let per_scan = ev.join("per_scan.csv");
    let a = format!("a={}", per_scan.display());
    let b = format!("b={}", per_scan.display());
    for test in [vec!["--test", "wilcoxon"], vec!["--test", "mann-whitney"]] {
        let out = dir.path().join(test[1]);
        let mut args = vec!["compare", "--model", &a, "--model", &b];
        args.extend(&test);
        let o = run(&args, &out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let rows = csv_rows(&out.join("comparison.csv"));
        assert_eq!(rows.len(), 5);
        for r in rows {
            assert_eq!(r["raw_p"], "1", "{r:?}");
            assert_eq!(r["adjusted_p"], "1");
            assert_eq!(r["stars"], "");
        }
    }
}

#[test]
fn explain_rank_one_features() {
    let dir = tempfile::tempdir().unwrap();
    let feats = dir.path().join("features");
    fs::create_dir(&feats).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let direction: Vec<f32> = (0..24).map(|_| common::gaussian(&mut rng) as f32).collect();
    let mut meta = String::from("scan_id,split,site,modality,field_strength,load\n");
    for i in 0..16 {
        let t = i as f32 - 7.5;
        let mut payload = Vec::new();
        for _fold in 0..2 {
            for v in &direction {
                let noise = 1e-3 * common::gaussian(&mut rng) as f32;
                payload.extend((t * v + noise).to_le_bytes());
            }
        }
        fs::write(feats.join(format!("s{i}.f32")), payload).unwrap();
        fs::write(
            feats.join(format!("s{i}.json")),
            format!(r#"{{"scan_id":"s{i}","axes":["fold","channel","width"],"shape":[2,4,6]}}"#),
        )
        .unwrap();
        let split = if i % 4 == 3 { "test" } else { "train" };
        meta.push_str(&format!("s{i},{split},A,MPRAGE,3T,{t}\n"));
    }
    let metadata = dir.path().join("meta.csv");
    fs::write(&metadata, meta).unwrap();
    let out = dir.path().join("out");
    let o = run(
        &["explain", "--features", feats.to_str().unwrap(), "--metadata", metadata.to_str().unwrap()],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    validate("explain.schema.json", &out.join("explain.json"));
    let rep: Value = serde_json::from_str(&fs::read_to_string(out.join("explain.json")).unwrap()).unwrap();
    let ratio = rep["explained_variance_ratio"][0].as_f64().unwrap();
    assert!(ratio >= 0.999, "pc1 explains {ratio}");
    let r = rep["correlations"][0]["r"][0].as_f64().unwrap();
    assert!(r.abs() > 0.999, "load vs pc1: {r}");
    let emb = csv_rows(&out.join("embedding.csv"));
    assert_eq!(emb.len(), 16);
    assert_eq!(emb.iter().filter(|r| r["split"] == "test").count(), 4);
}

#[test]
fn report_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("report.json");
    let a = format!("baseline={}", input.display());
    let b = format!("rerun={}", input.display());
    let o = run(&["report", "--input", &a, "--input", &b], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["radar.svg", "histogram_baseline.svg", "histogram_rerun.svg"] {
        let got = fs::read_to_string(dir.path().join(name)).unwrap();
        let want = fs::read_to_string(fixture("golden").join(name)).unwrap();
        assert!(got == want, "{name} differs from the golden copy");
    }
}

#[test]
fn shipped_phantoms_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["phantom"], dir.path()).status.success());
    let shipped = root().join("fixtures/phantoms");
    let mut names: Vec<String> = fs::read_dir(&shipped)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut fresh: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    fresh.sort();
    assert_eq!(names, fresh);
    for n in names {
        assert!(
            fs::read(shipped.join(&n)).unwrap() == fs::read(dir.path().join(&n)).unwrap(),
            "{n} differs from a fresh phantom run"
        );
    }
}
