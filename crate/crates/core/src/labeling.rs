//! Connected-component labeling of 3D masks.
//!
//! Single raster pass over the grid with union-find on provisional labels,
//! followed by a relabeling pass. Unions always keep the smaller provisional
//! label as root, so roots are met in raster order and final label `k` is
//! the component whose first voxel (x fastest, then y, then z) comes k-th.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{voxel_volume_ml, MaskVolume, VolumeHeader};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors.
    #[serde(rename = "6")]
    Six,
    /// Face and edge neighbors.
    #[serde(rename = "18")]
    Eighteen,
    /// Face, edge and corner neighbors.
    #[default]
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    pub const ALL: [Connectivity; 3] = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix];

    pub fn as_u8(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    /// Largest `|dx|+|dy|+|dz|` admitted as a neighbor.
    fn max_manhattan(self) -> i32 {
        match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        }
    }

    /// All neighbor offsets of this connectivity.
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let mut out = Vec::new();
        for dz in -1i32..=1 {
            for dy in -1i32..=1 {
                for dx in -1i32..=1 {
                    let m = dx.abs() + dy.abs() + dz.abs();
                    if m != 0 && m <= self.max_manhattan() {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Offsets pointing to voxels already visited in raster order.
    fn backward_offsets(self) -> Vec<[i32; 3]> {
        self.offsets()
            .into_iter()
            .filter(|&[dx, dy, dz]| dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0))))
            .collect()
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "6" => Ok(Connectivity::Six),
            "18" => Ok(Connectivity::Eighteen),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidArgument(format!(
                "connectivity must be 6, 18 or 26, got {other:?}"
            ))),
        }
    }
}

/// Integer-labeled connected components over a voxel grid; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    header: VolumeHeader,
    labels: Vec<u32>,
    /// `sizes[k - 1]` is the voxel count of label `k`.
    sizes: Vec<u64>,
    connectivity: Connectivity,
}

impl LabelMap {
    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn component_size(&self, label: u32) -> u64 {
        self.sizes[label as usize - 1]
    }

    pub fn component_sizes(&self) -> BTreeMap<u32, u64> {
        (1..).zip(self.sizes.iter().copied()).collect()
    }

    /// Voxel indices of every component, grouped by label (`result[k - 1]`),
    /// each list in ascending index order.
    pub fn component_voxels(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .sizes
            .iter()
            .map(|&n| Vec::with_capacity(n as usize))
            .collect();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != 0 {
                out[l as usize - 1].push(i);
            }
        }
        out
    }

    pub fn component_volumes_mm3(&self) -> BTreeMap<u32, f64> {
        let v = self.header.voxel_volume_mm3();
        (1..).zip(self.sizes.iter().map(|&n| n as f64 * v)).collect()
    }
}

/// Volume of each component in millilitres.
pub fn component_volumes_ml(labels: &LabelMap) -> BTreeMap<u32, f64> {
    let v = voxel_volume_ml(&labels.header);
    (1..).zip(labels.sizes.iter().map(|&n| n as f64 * v)).collect()
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        // slot 0 is background and never used
        UnionFind { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Joins two sets and returns the (smaller) root.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Labels the connected components of `mask` under `connectivity`.
pub fn label_components(mask: &MaskVolume, connectivity: Connectivity) -> LabelMap {
    let [nx, ny, nz] = mask.dims();
    let src = mask.voxels();
    let mut labels = vec![0u32; src.len()];
    let mut uf = UnionFind::new();

    let stride_y = nx as isize;
    let stride_z = (nx * ny) as isize;
    let neighbors: Vec<([i32; 3], isize)> = connectivity
        .backward_offsets()
        .into_iter()
        .map(|o| (o, o[0] as isize + o[1] as isize * stride_y + o[2] as isize * stride_z))
        .collect();

    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            for x in 0..nx {
                let i = row + x;
                if src[i] == 0 {
                    continue;
                }
                let mut current = 0u32;
                for &([dx, dy, dz], delta) in &neighbors {
                    if (dx < 0 && x == 0)
                        || (dx > 0 && x + 1 == nx)
                        || (dy < 0 && y == 0)
                        || (dy > 0 && y + 1 == ny)
                        || (dz < 0 && z == 0)
                    {
                        continue;
                    }
                    let n = labels[(i as isize + delta) as usize];
                    if n == 0 {
                        continue;
                    }
                    current = if current == 0 {
                        n
                    } else if current != n {
                        uf.union(current, n)
                    } else {
                        current
                    };
                }
                labels[i] = if current == 0 { uf.make() } else { current };
            }
        }
    }

    // Provisional ids grow in raster order and unions keep the minimum as
    // root, so visiting provisional ids in order numbers roots by first voxel.
    let provisional = uf.parent.len();
    let mut final_id = vec![0u32; provisional];
    let mut next = 0u32;
    for p in 1..provisional as u32 {
        let root = uf.find(p);
        if root == p {
            next += 1;
            final_id[p as usize] = next;
        } else {
            final_id[p as usize] = final_id[root as usize];
        }
    }

    let mut sizes = vec![0u64; next as usize];
    for l in labels.iter_mut() {
        if *l != 0 {
            *l = final_id[*l as usize];
            sizes[*l as usize - 1] += 1;
        }
    }

    LabelMap {
        header: mask.header().clone(),
        labels,
        sizes,
        connectivity,
    }
}
