use std::collections::{BTreeMap, BTreeSet};

use lesioneval::report::to_report_json;
use lesioneval::split::{stratified_group_split, verify_split, ScanRecord};
use lesioneval::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn manifest(seed: u64) -> Vec<ScanRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let sites = rng.random_range(1..4);
    for site in 0..sites {
        for s in 0..rng.random_range(1..30) {
            let base = rng.random_range(0..20u64);
            for t in 0..rng.random_range(1..4) {
                out.push(ScanRecord {
                    subject_id: format!("sub{s}"),
                    site: ["A", "B", "C"][site].into(),
                    modality: if rng.random_bool(0.5) { "MPRAGE" } else { "MP2RAGE" }.into(),
                    field_strength: if site == 1 { "7T" } else { "3T" }.into(),
                    timepoint: t,
                    lesion_count: base + rng.random_range(0..3),
                    total_lesion_volume_ml: base as f64 * rng.random_range(0.05..0.2),
                    path: String::new(),
                });
            }
        }
    }
    out
}

fn groups(side: &[ScanRecord]) -> BTreeSet<(String, String)> {
    side.iter().map(|r| (r.site.clone(), r.subject_id.clone())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_contract(seed in any::<u64>(), split_seed in any::<u64>(), ratio in 0.5f64..0.9) {
        let records = manifest(seed);
        let res = stratified_group_split(&records, ratio, split_seed).unwrap();

        // partition of the input
        prop_assert_eq!(res.train.len() + res.test.len(), records.len());
        let key = |r: &ScanRecord| (r.site.clone(), r.subject_id.clone(), r.timepoint);
        let all: BTreeSet<_> = records.iter().map(key).collect();
        let got: BTreeSet<_> = res.train.iter().chain(&res.test).map(key).collect();
        prop_assert_eq!(all, got);

        // group atomicity
        prop_assert!(groups(&res.train).is_disjoint(&groups(&res.test)));

        // stratum balance
        let train_groups = groups(&res.train);
        let mut per_stratum: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        for (g, stratum) in &res.strata_assignment {
            let (subject, site) = g.split_once('@').unwrap();
            let e = per_stratum.entry(stratum.as_str()).or_default();
            e.0 += 1;
            e.1 += usize::from(train_groups.contains(&(site.to_string(), subject.to_string())));
        }
        for (id, (n, t)) in per_stratum {
            prop_assert!(((t as f64 / n as f64) - ratio).abs() <= 1.0 / n as f64 + 1e-12, "{}: {}/{}", id, t, n);
        }

        // permutation invariance and seed determinism
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let again = stratified_group_split(&shuffled, ratio, split_seed).unwrap();
        prop_assert_eq!(to_report_json(&res).unwrap(), to_report_json(&again).unwrap());
    }
}

#[test]
fn seeds_change_the_draw() {
    let records = manifest(3);
    let draws: BTreeSet<Vec<String>> = (0..8)
        .map(|s| {
            stratified_group_split(&records, 0.8, s)
                .unwrap()
                .train
                .iter()
                .map(|r| format!("{}@{}", r.subject_id, r.site))
                .collect()
        })
        .collect();
    assert!(draws.len() > 1);
}

#[test]
fn ten_single_scan_groups() {
    let records: Vec<ScanRecord> = (0..10)
        .map(|i| ScanRecord {
            subject_id: format!("s{i}"),
            site: "A".into(),
            modality: "MPRAGE".into(),
            field_strength: "3T".into(),
            timepoint: 0,
            lesion_count: 3,
            total_lesion_volume_ml: 1.0,
            path: String::new(),
        })
        .collect();
    let res = stratified_group_split(&records, 0.8, 7).unwrap();
    assert_eq!((res.train.len(), res.test.len()), (8, 2));
}

#[test]
fn moved_timepoint_is_an_integrity_error() {
    let records = manifest(9);
    let mut res = stratified_group_split(&records, 0.8, 1).unwrap();
    assert_eq!(res.report.integrity_violations, 0);
    let multi = groups(&res.train)
        .into_iter()
        .find(|g| res.train.iter().filter(|r| (r.site.clone(), r.subject_id.clone()) == *g).count() > 1)
        .expect("some training subject has several visits");
    let pos = res
        .train
        .iter()
        .position(|r| (r.site.clone(), r.subject_id.clone()) == multi)
        .unwrap();
    let moved = res.train.remove(pos);
    res.test.push(moved);
    assert!(matches!(verify_split(&res), Err(Error::SplitIntegrity { .. })));
}
