//! Stratified, subject-grouped train/test splitting.
//!
//! Scans are grouped by `(subject_id, site)`. Each group gets the mean lesion
//! count and mean total lesion volume of its scans; both are cut into
//! quantile bins and combined with the site into a stratum. Strata holding a
//! single group are folded into the nearest stratum of the same site. Inside
//! every stratum the groups are shuffled by a ChaCha8 stream seeded with
//! `SHA-256(seed as u64 LE || stratum id)` and the first `quota` groups go to
//! training.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::sig6;
use crate::quantile::{describe, quantile_sorted, sorted_copy, Describe};

pub const DEFAULT_BINS: usize = 5;
pub const DEFAULT_RATIO: f64 = 0.8;
pub const PRNG_CONTRACT: &str =
    "ChaCha8Rng (rand_chacha 0.9) seeded with SHA-256(seed as u64 little-endian || stratum id UTF-8); \
     groups sorted by (site, subject_id) then shuffled with rand 0.9 SliceRandom::shuffle";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub subject_id: String,
    pub site: String,
    pub modality: String,
    pub field_strength: String,
    pub timepoint: i64,
    pub lesion_count: u64,
    pub total_lesion_volume_ml: f64,
    #[serde(default)]
    pub path: String,
}

impl ScanRecord {
    pub fn group_key(&self) -> GroupKey {
        GroupKey {
            site: self.site.clone(),
            subject_id: self.subject_id.clone(),
        }
    }

    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        (&self.site, &self.subject_id, self.timepoint, &self.modality, &self.field_strength, &self.path).cmp(&(
            &other.site,
            &other.subject_id,
            other.timepoint,
            &other.modality,
            &other.field_strength,
            &other.path,
        ))
    }
}

/// Reads the split manifest CSV; errors name the offending row.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ScanRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::schema(path, 0, e.to_string()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ScanRecord>().enumerate() {
        let row = i + 2;
        let r = rec.map_err(|e| Error::schema(path, row, e.to_string()))?;
        if r.subject_id.is_empty() || r.site.is_empty() {
            return Err(Error::schema(path, row, "subject_id and site must be non-empty"));
        }
        if !(r.total_lesion_volume_ml.is_finite() && r.total_lesion_volume_ml >= 0.0) {
            return Err(Error::schema(path, row, "total_lesion_volume_ml must be a non-negative number"));
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub site: String,
    pub subject_id: String,
}

impl GroupKey {
    pub fn id(&self) -> String {
        format!("{}@{}", self.subject_id, self.site)
    }
}

/// One subject-site unit with its scans (indices into the canonical record list).
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub key: GroupKey,
    pub scans: Vec<usize>,
    pub lesion_count: f64,
    pub total_lesion_volume_ml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBins {
    pub bins: Vec<usize>,
    /// Distinct interior edges actually used.
    pub edges: Vec<f64>,
    /// Bins that received at least one value.
    pub effective_bins: usize,
}

/// Assigns each value to one of `k` quantile bins. Edges sit at the
/// linear-interpolation quantiles `j / k`; a value equal to an edge goes to
/// the lower bin and duplicate edges collapse.
pub fn quantile_bins(values: &[f64], k: usize) -> Result<QuantileBins> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile_bins needs at least one value"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("bin count must be >= 1".into()));
    }
    let sorted = sorted_copy(values);
    let mut edges: Vec<f64> = (1..k).map(|j| quantile_sorted(&sorted, j as f64 / k as f64)).collect();
    edges.dedup();
    let bins: Vec<usize> = values
        .iter()
        .map(|&v| edges.iter().filter(|&&e| v > e).count())
        .collect();
    let effective_bins = bins.iter().collect::<BTreeSet<_>>().len();
    Ok(QuantileBins {
        bins,
        edges,
        effective_bins,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub site: String,
    pub count_bin: usize,
    pub volume_bin: usize,
}

impl StratumKey {
    pub fn id(&self) -> String {
        format!("{}|c{}|v{}", self.site, self.count_bin, self.volume_bin)
    }

    fn distance2(&self, other: &StratumKey) -> usize {
        let dc = self.count_bin.abs_diff(other.count_bin);
        let dv = self.volume_bin.abs_diff(other.volume_bin);
        dc * dc + dv * dv
    }
}

/// Composite (site, count bin, volume bin) stratum of each group.
pub fn build_strata(groups: &[Group], count_bins: &[usize], volume_bins: &[usize]) -> Vec<StratumKey> {
    groups
        .iter()
        .zip(count_bins.iter().zip(volume_bins))
        .map(|(g, (&c, &v))| StratumKey {
            site: g.key.site.clone(),
            count_bin: c,
            volume_bin: v,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub from: String,
    pub into: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedStrata {
    pub strata: BTreeMap<StratumKey, Vec<usize>>,
    pub merges: Vec<MergeRecord>,
    /// Singletons that could not merge because their site has one group.
    pub flagged: Vec<StratumKey>,
}

/// Folds every single-group stratum into the same-site stratum closest in
/// (count bin, volume bin) space; ties go to the lexicographically lower bins.
pub fn merge_singletons(strata: BTreeMap<StratumKey, Vec<usize>>) -> MergedStrata {
    let mut strata = strata;
    let mut merges = Vec::new();
    let mut flagged = Vec::new();
    let singletons: Vec<StratumKey> = strata
        .iter()
        .filter(|(_, g)| g.len() == 1)
        .map(|(k, _)| k.clone())
        .collect();
    for key in singletons {
        // may already have absorbed another singleton
        if strata.get(&key).is_none_or(|g| g.len() != 1) {
            continue;
        }
        let target = strata
            .keys()
            .filter(|k| k.site == key.site && **k != key)
            .min_by_key(|k| (k.distance2(&key), k.count_bin, k.volume_bin))
            .cloned();
        match target {
            Some(t) => {
                let moved = strata.remove(&key).unwrap_or_default();
                strata.get_mut(&t).expect("target exists").extend(moved);
                merges.push(MergeRecord {
                    from: key.id(),
                    into: t.id(),
                });
            }
            None => {
                log::warn!("stratum {} is the only group of its site; left unmerged", key.id());
                flagged.push(key);
            }
        }
    }
    MergedStrata {
        strata,
        merges,
        flagged,
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Per-stratum train quotas: `round(ratio * size)`, then adjusted one group at
/// a time until the total equals `round(ratio * total groups)`. Adjustments
/// only undo a stratum's own rounding, so each stratum stays within one
/// group of its exact share.
fn quotas(sizes: &[usize], ratio: f64) -> Vec<usize> {
    let mut q: Vec<usize> = sizes.iter().map(|&n| round_half_up(ratio * n as f64)).collect();
    let total: usize = sizes.iter().sum();
    let target = round_half_up(ratio * total as f64);
    let err = |q: &[usize], i: usize| q[i] as f64 - ratio * sizes[i] as f64;
    loop {
        let sum: usize = q.iter().sum();
        if sum > target {
            let i = (0..q.len())
                .filter(|&i| q[i] > 0)
                .max_by(|&a, &b| err(&q, a).total_cmp(&err(&q, b)).then(b.cmp(&a)))
                .expect("some stratum has a positive quota");
            q[i] -= 1;
        } else if sum < target {
            let i = (0..q.len())
                .filter(|&i| q[i] < sizes[i])
                .min_by(|&a, &b| err(&q, a).total_cmp(&err(&q, b)).then(a.cmp(&b)))
                .expect("some stratum has room");
            q[i] += 1;
        } else {
            return q;
        }
    }
}

fn stratum_rng(seed: u64, stratum_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stratum_id.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub id: String,
    pub groups: usize,
    pub train_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionStats {
    pub scans: usize,
    pub subject_site_groups: usize,
    pub site_pct: BTreeMap<String, f64>,
    pub modality_pct: BTreeMap<String, f64>,
    pub field_strength_pct: BTreeMap<String, f64>,
    pub lesion_count: Option<Describe>,
    pub total_lesion_volume_ml: Option<Describe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: PartitionStats,
    pub test: PartitionStats,
    pub integrity_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    pub ratio: f64,
    pub bins: usize,
    pub prng: String,
    pub train: Vec<ScanRecord>,
    pub test: Vec<ScanRecord>,
    /// Group id (`subject@site`) -> merged stratum id.
    pub strata_assignment: BTreeMap<String, String>,
    pub strata: Vec<StratumSummary>,
    pub merges: Vec<MergeRecord>,
    pub flagged_strata: Vec<String>,
    pub report: SplitReport,
}

/// Groups canonical-ordered records by subject-site.
pub fn group_records(records: &[ScanRecord]) -> Vec<Group> {
    let mut by_key: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_key.entry(r.group_key()).or_default().push(i);
    }
    by_key
        .into_iter()
        .map(|(key, scans)| {
            let n = scans.len() as f64;
            let lesion_count = scans.iter().map(|&i| records[i].lesion_count as f64).sum::<f64>() / n;
            let total_lesion_volume_ml = scans.iter().map(|&i| records[i].total_lesion_volume_ml).sum::<f64>() / n;
            Group {
                key,
                scans,
                lesion_count,
                total_lesion_volume_ml,
            }
        })
        .collect()
}

/// Stratified group split with `bins` quantile bins per lesion covariate.
pub fn stratified_group_split(records: &[ScanRecord], ratio: f64, seed: u64) -> Result<SplitResult> {
    stratified_group_split_with_bins(records, ratio, seed, DEFAULT_BINS)
}

pub fn stratified_group_split_with_bins(
    records: &[ScanRecord],
    ratio: f64,
    seed: u64,
    bins: usize,
) -> Result<SplitResult> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("ratio must lie in (0, 1), got {ratio}")));
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("split needs at least one scan record"));
    }
    let mut records = records.to_vec();
    records.sort_by(|a, b| a.canonical_cmp(b));

    let groups = group_records(&records);
    let counts: Vec<f64> = groups.iter().map(|g| g.lesion_count).collect();
    let volumes: Vec<f64> = groups.iter().map(|g| g.total_lesion_volume_ml).collect();
    let cb = quantile_bins(&counts, bins)?;
    let vb = quantile_bins(&volumes, bins)?;
    let keys = build_strata(&groups, &cb.bins, &vb.bins);

    let mut raw: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (gi, key) in keys.into_iter().enumerate() {
        raw.entry(key).or_default().push(gi);
    }
    let merged = merge_singletons(raw);

    let sizes: Vec<usize> = merged.strata.values().map(Vec::len).collect();
    let quota = quotas(&sizes, ratio);

    let mut in_train = vec![false; groups.len()];
    let mut strata_assignment = BTreeMap::new();
    let mut summaries = Vec::new();
    for ((key, members), &q) in merged.strata.iter().zip(&quota) {
        let id = key.id();
        // `members` is ascending, i.e. sorted by (site, subject_id)
        let mut order = members.clone();
        order.shuffle(&mut stratum_rng(seed, &id));
        for &gi in &order[..q] {
            in_train[gi] = true;
        }
        for &gi in members {
            strata_assignment.insert(groups[gi].key.id(), id.clone());
        }
        summaries.push(StratumSummary {
            id,
            groups: members.len(),
            train_groups: q,
        });
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let dest = if in_train[gi] { &mut train } else { &mut test };
        dest.extend(g.scans.iter().map(|&i| records[i].clone()));
    }
    train.sort_by(|a, b| a.canonical_cmp(b));
    test.sort_by(|a, b| a.canonical_cmp(b));

    let mut result = SplitResult {
        seed,
        ratio,
        bins,
        prng: PRNG_CONTRACT.into(),
        train,
        test,
        strata_assignment,
        strata: summaries,
        merges: merged.merges,
        flagged_strata: merged.flagged.iter().map(StratumKey::id).collect(),
        report: SplitReport {
            train: partition_stats(&[]),
            test: partition_stats(&[]),
            integrity_violations: 0,
        },
    };
    result.report = verify_split(&result)?;
    Ok(result)
}

fn percentages(records: &[ScanRecord], field: impl Fn(&ScanRecord) -> &str) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(field(r).to_string()).or_default() += 1;
    }
    let n = records.len() as f64;
    counts
        .into_iter()
        .map(|(k, c)| (k, sig6(100.0 * c as f64 / n)))
        .collect()
}

fn round_describe(d: Option<Describe>) -> Option<Describe> {
    d.map(|d| Describe {
        n: d.n,
        mean: sig6(d.mean),
        std: sig6(d.std),
        min: sig6(d.min),
        q1: sig6(d.q1),
        median: sig6(d.median),
        q3: sig6(d.q3),
        max: sig6(d.max),
    })
}

fn partition_stats(records: &[ScanRecord]) -> PartitionStats {
    let groups: BTreeSet<GroupKey> = records.iter().map(ScanRecord::group_key).collect();
    let counts: Vec<f64> = records.iter().map(|r| r.lesion_count as f64).collect();
    let vols: Vec<f64> = records.iter().map(|r| r.total_lesion_volume_ml).collect();
    PartitionStats {
        scans: records.len(),
        subject_site_groups: groups.len(),
        site_pct: percentages(records, |r| &r.site),
        modality_pct: percentages(records, |r| &r.modality),
        field_strength_pct: percentages(records, |r| &r.field_strength),
        lesion_count: round_describe(describe(&counts)),
        total_lesion_volume_ml: round_describe(describe(&vols)),
    }
}

/// Distribution report for a split; fails if any subject-site group has
/// scans on both sides.
pub fn verify_split(result: &SplitResult) -> Result<SplitReport> {
    let train_groups: BTreeSet<GroupKey> = result.train.iter().map(ScanRecord::group_key).collect();
    if let Some(r) = result.test.iter().find(|r| train_groups.contains(&r.group_key())) {
        return Err(Error::SplitIntegrity {
            subject_id: r.subject_id.clone(),
            site: r.site.clone(),
        });
    }
    Ok(SplitReport {
        train: partition_stats(&result.train),
        test: partition_stats(&result.test),
        integrity_violations: 0,
    })
}
