//! Binary 3D morphology on [`BinaryMask`]s.
//!
//! Foreground objects are 26-connected; background (holes) is 6-connected.
//! Erosion and dilation use the 6-neighbor cross as structuring element and
//! treat everything outside the grid as background.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Dims, Spacing, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// Face neighbors only.
    Six,
    /// Faces, edges and corners.
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for di in -1isize..=1 {
            for dj in -1isize..=1 {
                for dk in -1isize..=1 {
                    let manhattan = di.abs() + dj.abs() + dk.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([di, dj, dk]);
                    }
                }
            }
        }
        out
    }
}

/// Per-component statistics gathered during labeling.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: u32,
    pub voxel_count: usize,
    pub volume_mm3: f64,
    index_sum: [u64; 3],
    pub min_index: [usize; 3],
    pub max_index: [usize; 3],
}

impl Component {
    /// Mean of member voxel centers, in mm.
    pub fn centroid_mm(&self, spacing: Spacing) -> [f64; 3] {
        let s = spacing.as_array();
        let n = self.voxel_count as f64;
        [
            self.index_sum[0] as f64 / n * s[0],
            self.index_sum[1] as f64 / n * s[1],
            self.index_sum[2] as f64 / n * s[2],
        ]
    }

    /// Inclusive per-axis extent in mm.
    pub fn bounding_box_mm(&self, spacing: Spacing) -> [f64; 3] {
        let s = spacing.as_array();
        [0, 1, 2].map(|ax| (self.max_index[ax] - self.min_index[ax] + 1) as f64 * s[ax])
    }
}

/// Dense component ids `1..=K` (0 is background), assigned in first-encounter
/// order of a row-major scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    labels: Volume<u32>,
    components: Vec<Component>,
}

impl ComponentLabeling {
    pub fn labels(&self) -> &Volume<u32> {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, id: u32) -> Option<&Component> {
        id.checked_sub(1).and_then(|i| self.components.get(i as usize))
    }

    pub fn spacing(&self) -> Spacing {
        self.labels.spacing()
    }

    /// Component ids sorted by volume, largest first; ties keep id order.
    pub fn ids_by_volume(&self) -> Vec<u32> {
        let mut ids: Vec<&Component> = self.components.iter().collect();
        ids.sort_by_key(|c| std::cmp::Reverse(c.voxel_count));
        ids.into_iter().map(|c| c.id).collect()
    }

    pub fn largest(&self) -> Option<u32> {
        self.ids_by_volume().first().copied()
    }

    pub fn mask_of(&self, id: u32) -> BinaryMask {
        self.labels.map(|l| l == id)
    }
}

fn neighbors(dims: Dims, idx: [usize; 3], offsets: &[[isize; 3]], mut f: impl FnMut([usize; 3])) {
    for off in offsets {
        let n = [
            idx[0] as isize + off[0],
            idx[1] as isize + off[1],
            idx[2] as isize + off[2],
        ];
        if (0..3).all(|ax| n[ax] >= 0 && (n[ax] as usize) < dims[ax]) {
            f([n[0] as usize, n[1] as usize, n[2] as usize]);
        }
    }
}

/// Labels the `true` voxels of `mask` with the given connectivity.
pub fn label_components(mask: &BinaryMask, conn: Connectivity) -> ComponentLabeling {
    let dims = mask.dims();
    let offsets = conn.offsets();
    let vox = mask.spacing().voxel_volume();
    let mut labels = vec![0u32; mask.len()];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..mask.len() {
        if !mask.data()[seed] || labels[seed] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        let mut comp = Component {
            id,
            voxel_count: 0,
            volume_mm3: 0.0,
            index_sum: [0; 3],
            min_index: [usize::MAX; 3],
            max_index: [0; 3],
        };
        labels[seed] = id;
        stack.push(seed);
        while let Some(l) = stack.pop() {
            let idx = mask.index_of(l);
            comp.voxel_count += 1;
            for ax in 0..3 {
                comp.index_sum[ax] += idx[ax] as u64;
                comp.min_index[ax] = comp.min_index[ax].min(idx[ax]);
                comp.max_index[ax] = comp.max_index[ax].max(idx[ax]);
            }
            neighbors(dims, idx, &offsets, |n| {
                let nl = mask.linear_index(n);
                if mask.data()[nl] && labels[nl] == 0 {
                    labels[nl] = id;
                    stack.push(nl);
                }
            });
        }
        comp.volume_mm3 = comp.voxel_count as f64 * vox;
        components.push(comp);
    }
    ComponentLabeling {
        labels: Volume::from_vec(dims, mask.spacing(), labels).expect("same geometry"),
        components,
    }
}

/// 26-connected object labeling.
pub fn connected_components(mask: &BinaryMask) -> ComponentLabeling {
    label_components(mask, Connectivity::TwentySix)
}

const FACE: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

#[inline]
fn is_set(src: &[bool], dims: Dims, idx: [usize; 3], o: [isize; 3]) -> bool {
    let a = idx[0] as isize + o[0];
    let b = idx[1] as isize + o[1];
    let c = idx[2] as isize + o[2];
    a >= 0
        && b >= 0
        && c >= 0
        && (a as usize) < dims[0]
        && (b as usize) < dims[1]
        && (c as usize) < dims[2]
        && src[(a as usize * dims[1] + b as usize) * dims[2] + c as usize]
}

/// One cross-shaped erosion (`erode == true`) or dilation step.
fn cross_step(mask: &BinaryMask, erode: bool) -> BinaryMask {
    let dims = mask.dims();
    let [_, ny, nz] = dims;
    let src = mask.data();
    let mut out = vec![false; src.len()];
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(i, slab)| {
        for j in 0..ny {
            for k in 0..nz {
                let here = src[(i * ny + j) * nz + k];
                slab[j * nz + k] = if erode {
                    here && FACE.iter().all(|&o| is_set(src, dims, [i, j, k], o))
                } else {
                    here || FACE.iter().any(|&o| is_set(src, dims, [i, j, k], o))
                };
            }
        }
    });
    mask.with_data(out)
}

pub fn erode(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    (0..iterations).fold(mask.clone(), |m, _| cross_step(&m, true))
}

pub fn dilate(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    (0..iterations).fold(mask.clone(), |m, _| cross_step(&m, false))
}

/// Erosion followed by dilation with the same iteration count.
pub fn open(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    dilate(&erode(mask, iterations), iterations)
}

/// Deletes 26-connected objects whose volume is strictly below the threshold.
pub fn remove_small_objects(mask: &BinaryMask, min_volume_mm3: f64) -> BinaryMask {
    if min_volume_mm3 <= 0.0 {
        return mask.clone();
    }
    let labeling = connected_components(mask);
    let keep: Vec<bool> = std::iter::once(false)
        .chain(labeling.components.iter().map(|c| c.volume_mm3 >= min_volume_mm3))
        .collect();
    labeling.labels.map(|l| keep[l as usize])
}

/// Fills enclosed background pockets (6-connected, not touching the grid
/// boundary) smaller than `max_hole_mm3`.
pub fn fill_holes(mask: &BinaryMask, max_hole_mm3: f64) -> BinaryMask {
    let background = label_components(&mask.not(), Connectivity::Six);
    let dims = mask.dims();
    let fill: Vec<bool> = std::iter::once(false)
        .chain(background.components.iter().map(|c| {
            let touches =
                (0..3).any(|ax| c.min_index[ax] == 0 || c.max_index[ax] == dims[ax] - 1);
            !touches && c.volume_mm3 < max_hole_mm3
        }))
        .collect();
    mask.zip_map(&background.labels, |m, l| m || fill[l as usize])
        .expect("same geometry")
}

/// Component centroids in mm, largest component first.
pub fn object_centroids(labeling: &ComponentLabeling) -> Vec<[f64; 3]> {
    labeling
        .ids_by_volume()
        .into_iter()
        .map(|id| {
            labeling
                .component(id)
                .expect("id from labeling")
                .centroid_mm(labeling.spacing())
        })
        .collect()
}

/// Inclusive per-axis extent of the set voxels of `mask`, in mm.
pub fn bounding_box_mm(mask: &BinaryMask) -> Result<[f64; 3]> {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for (l, _) in mask.data().iter().enumerate().filter(|(_, &m)| m) {
        any = true;
        let idx = mask.index_of(l);
        for ax in 0..3 {
            lo[ax] = lo[ax].min(idx[ax]);
            hi[ax] = hi[ax].max(idx[ax]);
        }
    }
    if !any {
        return Err(Error::EmptyComponent);
    }
    let s = mask.spacing().as_array();
    Ok([0, 1, 2].map(|ax| (hi[ax] - lo[ax] + 1) as f64 * s[ax]))
}
