//! Brute-force reference implementations shared by the integration and
//! acceptance tests. Deliberately naive: no code is shared with the library.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use lesioneval::volume::{MaskVolume, VolumeHeader};
use rand::Rng;

pub fn header(dims: [usize; 3]) -> VolumeHeader {
    VolumeHeader::new(dims, [1.0, 1.0, 1.0]).unwrap()
}

/// Random mask mixing salt noise with a few solid boxes.
pub fn random_mask(rng: &mut impl Rng, dims: [usize; 3]) -> MaskVolume {
    let density = rng.random_range(0.0..0.45);
    let n = dims[0] * dims[1] * dims[2];
    let mut v: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(density))).collect();
    for _ in 0..rng.random_range(0..4) {
        let lo: Vec<usize> = dims.iter().map(|&d| rng.random_range(0..d)).collect();
        let hi: Vec<usize> = (0..3).map(|a| (lo[a] + rng.random_range(1..5)).min(dims[a])).collect();
        let on = rng.random_bool(0.7);
        for z in lo[2]..hi[2] {
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    v[x + dims[0] * (y + dims[1] * z)] = u8::from(on);
                }
            }
        }
    }
    MaskVolume::from_voxels(header(dims), v).unwrap()
}

pub fn random_dims(rng: &mut impl Rng, max: usize) -> [usize; 3] {
    [rng.random_range(1..=max), rng.random_range(1..=max), rng.random_range(1..=max)]
}

/// Labels by BFS from each unlabeled foreground voxel in raster order, so
/// label k is the component whose first voxel comes k-th.
pub fn flood_fill(mask: &MaskVolume, connectivity: u8) -> Vec<u32> {
    let [nx, ny, nz] = mask.dims();
    let v = mask.voxels();
    let max_steps = match connectivity {
        6 => 1,
        18 => 2,
        26 => 3,
        c => panic!("connectivity {c}"),
    };
    let mut labels = vec![0u32; v.len()];
    let mut next = 0u32;
    for seed in 0..v.len() {
        if v[seed] == 0 || labels[seed] != 0 {
            continue;
        }
        next += 1;
        labels[seed] = next;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            let (x, y, z) = ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let steps = dx.abs() + dy.abs() + dz.abs();
                        if steps == 0 || steps > max_steps {
                            continue;
                        }
                        let (a, b, c) = (x + dx, y + dy, z + dz);
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            continue;
                        }
                        let j = a as usize + nx * (b as usize + ny * c as usize);
                        if v[j] != 0 && labels[j] == 0 {
                            labels[j] = next;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
    }
    labels
}

/// Lesion matching by definition over explicit voxel sets.
#[derive(Debug, PartialEq)]
pub struct OracleMatch {
    pub tpl: BTreeSet<u32>,
    pub fpl: BTreeSet<u32>,
    pub fnl: BTreeSet<u32>,
    /// (pred label, gt label) -> shared voxels.
    pub overlaps: BTreeMap<(u32, u32), u64>,
}

pub fn oracle_match(gt_labels: &[u32], pred_labels: &[u32]) -> OracleMatch {
    let components = |labels: &[u32]| -> BTreeMap<u32, Vec<usize>> {
        let mut m: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                m.entry(l).or_default().push(i);
            }
        }
        m
    };
    let gt = components(gt_labels);
    let pred = components(pred_labels);
    let mut out = OracleMatch {
        tpl: BTreeSet::new(),
        fpl: BTreeSet::new(),
        fnl: BTreeSet::new(),
        overlaps: BTreeMap::new(),
    };
    for (&p, voxels) in &pred {
        if voxels.iter().any(|&i| gt_labels[i] != 0) {
            out.tpl.insert(p);
        } else {
            out.fpl.insert(p);
        }
        for (&g, gv) in &gt {
            let shared = voxels.iter().filter(|i| gv.binary_search(i).is_ok()).count() as u64;
            if shared > 0 {
                out.overlaps.insert((p, g), shared);
            }
        }
    }
    for (&g, voxels) in &gt {
        if !voxels.iter().any(|&i| pred_labels[i] != 0) {
            out.fnl.insert(g);
        }
    }
    out
}

/// Average ranks, doubled so ties stay integral.
pub fn doubled_average_ranks(values: &[f64]) -> Vec<u64> {
    values
        .iter()
        .map(|&v| {
            let below = values.iter().filter(|&&w| w < v).count() as u64;
            let equal = values.iter().filter(|&&w| w == v).count() as u64;
            // ranks below+1 ..= below+equal, mean doubled
            2 * below + equal + 1
        })
        .collect()
}

fn two_sided(lower: u64, upper: u64, total: u64) -> f64 {
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

/// Signed-rank p-value by visiting all 2^n sign patterns in Gray-code order.
pub fn wilcoxon_enumerated(diffs: &[f64]) -> f64 {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|&d| d != 0.0).collect();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let r = doubled_average_ranks(&abs);
    let observed: u64 = nonzero.iter().zip(&r).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let n = r.len();
    let total = 1u64 << n;
    let (mut lower, mut upper) = (0u64, 0u64);
    let mut w = 0u64;
    let mut signs = vec![false; n];
    for step in 0..total {
        if step > 0 {
            let bit = step.trailing_zeros() as usize;
            signs[bit] = !signs[bit];
            if signs[bit] {
                w += r[bit];
            } else {
                w -= r[bit];
            }
        }
        lower += u64::from(w <= observed);
        upper += u64::from(w >= observed);
    }
    two_sided(lower, upper, total)
}

/// Rank-sum p-value over every choice of which pooled ranks belong to `a`.
pub fn mann_whitney_enumerated(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = doubled_average_ranks(&pooled);
    let observed: u64 = r[..a.len()].iter().sum();
    let mut tally = [0u64; 3];
    fn visit(r: &[u64], start: usize, left: usize, sum: u64, observed: u64, tally: &mut [u64; 3]) {
        if left == 0 {
            tally[0] += u64::from(sum <= observed);
            tally[1] += u64::from(sum >= observed);
            tally[2] += 1;
            return;
        }
        for i in start..=r.len() - left {
            visit(r, i + 1, left - 1, sum + r[i], observed, tally);
        }
    }
    visit(&r, 0, a.len(), 0, observed, &mut tally);
    two_sided(tally[0], tally[1], tally[2])
}

/// BH adjusted p-values straight from the definition
/// `min_{j >= i} min(1, m p_(j) / j)`, plus the step-up rejection set.
pub fn bh_by_definition(p: &[f64], q: f64) -> (Vec<f64>, Vec<bool>) {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut adjusted = vec![0.0; m];
    for i in 0..m {
        let v = (i..m)
            .map(|j| (m as f64 * sorted[j].0 / (j + 1) as f64).min(1.0))
            .fold(f64::INFINITY, f64::min);
        adjusted[sorted[i].1] = v;
    }
    let k = (1..=m).filter(|&j| sorted[j - 1].0 <= j as f64 * q / m as f64).max().unwrap_or(0);
    let threshold = if k == 0 { -1.0 } else { sorted[k - 1].0 };
    let rejected = p.iter().map(|&x| k > 0 && x <= threshold).collect();
    (adjusted, rejected)
}

/// Standard normal draw (Box-Muller).
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
