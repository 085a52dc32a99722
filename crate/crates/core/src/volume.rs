//! Volume and mask types, voxel/mm geometry, BraTS label/region conversion
//! and intensity normalization.
//!
//! All Cartesian grids are stored row-major over `(nx, ny, nz)`: the linear
//! index of voxel `(i, j, k)` is `(i * ny + j) * nz + k`. Voxel centers sit at
//! `(i * sx, j * sy, k * sz)` millimeters; there is no orientation matrix.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent `(nx, ny, nz)`.
pub type Dims = [usize; 3];

/// Millimeters per voxel along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let s = Spacing { sx, sy, sz };
        s.validate()?;
        Ok(s)
    }

    pub fn isotropic(s: f64) -> Self {
        Spacing {
            sx: s,
            sy: s,
            sz: s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .as_array()
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            Ok(())
        } else {
            Err(Error::InvalidVolume(format!(
                "spacing must be strictly positive, got {self:?}"
            )))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    /// Volume of one voxel in mm³.
    pub fn voxel_volume(&self) -> f64 {
        self.sx * self.sy * self.sz
    }

    /// Length of a voxel diagonal in mm.
    pub fn diagonal(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing::isotropic(1.0)
    }
}

/// Millimeter position of a voxel center.
pub fn voxel_to_mm(index: [usize; 3], spacing: Spacing) -> [f64; 3] {
    [
        index[0] as f64 * spacing.sx,
        index[1] as f64 * spacing.sy,
        index[2] as f64 * spacing.sz,
    ]
}

/// Element types that may live in a [`Volume`].
pub trait Voxel: Copy + Default + PartialEq + Send + Sync + fmt::Debug + 'static {
    fn is_valid(&self) -> bool {
        true
    }
}

impl Voxel for f32 {
    fn is_valid(&self) -> bool {
        self.is_finite()
    }
}
impl Voxel for u8 {}
impl Voxel for u32 {}
impl Voxel for bool {}

/// A dense 3D grid with per-axis spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

pub type ScalarVolume = Volume<f32>;
pub type BinaryMask = Volume<bool>;

impl<T: Voxel> Volume<T> {
    pub fn from_vec(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        spacing.validate()?;
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {dims:?} ({n})",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_valid()) {
            return Err(Error::InvalidVolume(format!("invalid voxel value {bad:?}")));
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Result<Self> {
        Self::from_vec(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]])
    }

    /// Builds a volume by evaluating `f` at every voxel index.
    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut([usize; 3]) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    data.push(f([i, j, k]));
                }
            }
        }
        Self::from_vec(dims, spacing, data)
    }

    /// Same geometry, new contents. Skips the validity scan; callers
    /// guarantee `data` is valid for `U`.
    pub(crate) fn with_data<U: Voxel>(&self, data: Vec<U>) -> Volume<U> {
        debug_assert_eq!(data.len(), self.data.len());
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data,
        }
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    /// Combines two volumes of identical geometry voxel by voxel.
    pub fn zip_map<U: Voxel, V: Voxel>(
        &self,
        other: &Volume<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Volume<V>> {
        self.check_geometry(other)?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }
}

impl<T> Volume<T> {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn linear_index(&self, index: [usize; 3]) -> usize {
        (index[0] * self.dims[1] + index[1]) * self.dims[2] + index[2]
    }

    #[inline]
    pub fn index_of(&self, linear: usize) -> [usize; 3] {
        let k = linear % self.dims[2];
        let rest = linear / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn get(&self, index: [usize; 3]) -> &T {
        &self.data[self.linear_index(index)]
    }

    #[inline]
    pub fn set(&mut self, index: [usize; 3], value: T) {
        let idx = self.linear_index(index);
        self.data[idx] = value;
    }

    /// Millimeter position of the center of voxel `linear`.
    pub fn mm_of(&self, linear: usize) -> [f64; 3] {
        voxel_to_mm(self.index_of(linear), self.spacing)
    }

    /// Physical extent `n * s` per axis.
    pub fn extent_mm(&self) -> [f64; 3] {
        let s = self.spacing.as_array();
        [
            self.dims[0] as f64 * s[0],
            self.dims[1] as f64 * s[1],
            self.dims[2] as f64 * s[2],
        ]
    }

    /// Midpoint of the physical extent.
    pub fn center_mm(&self) -> [f64; 3] {
        let e = self.extent_mm();
        [e[0] / 2.0, e[1] / 2.0, e[2] / 2.0]
    }

    pub fn same_geometry<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    pub fn check_geometry<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.same_geometry(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{:?} @ {:?} vs {:?} @ {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )))
        }
    }
}

impl BinaryMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn volume_mm3(&self) -> f64 {
        self.count() as f64 * self.spacing.voxel_volume()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_map(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_map(other, |a, b| a || b)
    }

    pub fn not(&self) -> BinaryMask {
        self.map(|a| !a)
    }

    /// `true` when every set voxel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.same_geometry(other)
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| !a || b)
    }
}

/// Mask of voxels whose value is not exactly zero.
pub fn nonzero_mask(v: &ScalarVolume) -> BinaryMask {
    v.map(|x| x != 0.0)
}

/// Z-score intensities over the non-zero voxels; zero voxels stay zero.
///
/// A non-zero voxel that lands exactly on the mean is nudged to the smallest
/// positive normal `f32` so the zero set of the output equals that of the
/// input.
pub fn zscore_normalize(v: &ScalarVolume) -> Result<ScalarVolume> {
    let (mut n, mut sum) = (0usize, 0.0f64);
    for &x in v.data() {
        if x != 0.0 {
            n += 1;
            sum += x as f64;
        }
    }
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "z-score needs at least 2 non-zero voxels, found {n}"
        )));
    }
    let mean = sum / n as f64;
    let var = v
        .data()
        .iter()
        .filter(|&&x| x != 0.0)
        .map(|&x| {
            let d = x as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let std = var.sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Degenerate(
            "non-zero voxels have zero variance".into(),
        ));
    }
    Ok(v.map(|x| {
        if x == 0.0 {
            0.0
        } else {
            let z = ((x as f64 - mean) / std) as f32;
            if z == 0.0 {
                f32::MIN_POSITIVE
            } else {
                z
            }
        }
    }))
}

/// Per-channel multi-modal volume (T1, T1c, T2, FLAIR by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelVolume {
    channels: Vec<ScalarVolume>,
}

impl MultiChannelVolume {
    pub fn new(channels: Vec<ScalarVolume>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::InvalidVolume("at least one channel required".into()))?;
        for c in &channels[1..] {
            first.check_geometry(c)?;
        }
        Ok(MultiChannelVolume { channels })
    }

    pub fn channels(&self) -> &[ScalarVolume] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<ScalarVolume> {
        self.channels
    }

    pub fn channel(&self, i: usize) -> Option<&ScalarVolume> {
        self.channels.get(i)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn dims(&self) -> Dims {
        self.channels[0].dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.channels[0].spacing()
    }

    /// Voxels that are non-zero in any channel.
    pub fn brain_mask(&self) -> BinaryMask {
        let mut mask = nonzero_mask(&self.channels[0]);
        for c in &self.channels[1..] {
            for (m, &x) in mask.data_mut().iter_mut().zip(c.data()) {
                *m |= x != 0.0;
            }
        }
        mask
    }
}

pub const LABEL_VALUES: [u8; 4] = [0, 1, 2, 4];

pub fn is_label_value(v: u8) -> bool {
    matches!(v, 0 | 1 | 2 | 4)
}

/// BraTS label map restricted to {0, 1, 2, 4}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume(Volume<u8>);

impl LabelVolume {
    pub fn new(volume: Volume<u8>) -> Result<Self> {
        if let Some(&bad) = volume.data().iter().find(|&&v| !is_label_value(v)) {
            return Err(Error::InvalidLabel(bad as i64));
        }
        Ok(LabelVolume(volume))
    }

    pub fn from_vec(dims: Dims, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        Self::new(Volume::from_vec(dims, spacing, data)?)
    }

    pub fn zeros(dims: Dims, spacing: Spacing) -> Result<Self> {
        Ok(LabelVolume(Volume::filled(dims, spacing, 0)?))
    }

    pub fn as_volume(&self) -> &Volume<u8> {
        &self.0
    }

    pub fn into_volume(self) -> Volume<u8> {
        self.0
    }
}

impl Deref for LabelVolume {
    type Target = Volume<u8>;
    fn deref(&self) -> &Volume<u8> {
        &self.0
    }
}

/// Nested BraTS evaluation region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "WT")]
    WholeTumor,
    #[serde(rename = "TC")]
    TumorCore,
    #[serde(rename = "ET")]
    EnhancingTumor,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::WholeTumor, Region::TumorCore, Region::EnhancingTumor];

    pub fn contains_label(self, label: u8) -> bool {
        match self {
            Region::WholeTumor => matches!(label, 1 | 2 | 4),
            Region::TumorCore => matches!(label, 1 | 4),
            Region::EnhancingTumor => label == 4,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Region::WholeTumor => "WT",
            Region::TumorCore => "TC",
            Region::EnhancingTumor => "ET",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// The WT/TC/ET mask triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMasks {
    pub wt: BinaryMask,
    pub tc: BinaryMask,
    pub et: BinaryMask,
}

impl RegionMasks {
    pub fn empty(dims: Dims, spacing: Spacing) -> Result<Self> {
        let e = BinaryMask::filled(dims, spacing, false)?;
        Ok(RegionMasks {
            wt: e.clone(),
            tc: e.clone(),
            et: e,
        })
    }

    pub fn new(wt: BinaryMask, tc: BinaryMask, et: BinaryMask) -> Result<Self> {
        wt.check_geometry(&tc)?;
        wt.check_geometry(&et)?;
        Ok(RegionMasks { wt, tc, et })
    }

    /// WT = {1,2,4}, TC = {1,4}, ET = {4}.
    pub fn from_labels(labels: &LabelVolume) -> Self {
        RegionMasks {
            wt: labels.map(|l| Region::WholeTumor.contains_label(l)),
            tc: labels.map(|l| Region::TumorCore.contains_label(l)),
            et: labels.map(|l| Region::EnhancingTumor.contains_label(l)),
        }
    }

    /// Collapses the triple into labels after union closure:
    /// 4 if ET, else 1 if TC, else 2 if WT, else 0.
    pub fn to_labels(&self) -> LabelVolume {
        let mut closed = self.clone();
        closed.close_upward();
        let data = closed
            .wt
            .data()
            .iter()
            .zip(closed.tc.data())
            .zip(closed.et.data())
            .map(|((&wt, &tc), &et)| {
                if et {
                    4
                } else if tc {
                    1
                } else if wt {
                    2
                } else {
                    0
                }
            })
            .collect();
        LabelVolume(self.wt.with_data(data))
    }

    pub fn get(&self, region: Region) -> &BinaryMask {
        match region {
            Region::WholeTumor => &self.wt,
            Region::TumorCore => &self.tc,
            Region::EnhancingTumor => &self.et,
        }
    }

    pub fn get_mut(&mut self, region: Region) -> &mut BinaryMask {
        match region {
            Region::WholeTumor => &mut self.wt,
            Region::TumorCore => &mut self.tc,
            Region::EnhancingTumor => &mut self.et,
        }
    }

    pub fn dims(&self) -> Dims {
        self.wt.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.wt.spacing()
    }

    pub fn check_geometry(&self, other: &RegionMasks) -> Result<()> {
        self.wt.check_geometry(&other.wt)
    }

    /// Union closure: WT ← WT ∪ TC ∪ ET, TC ← TC ∪ ET.
    pub fn close_upward(&mut self) {
        let et = self.et.data().to_vec();
        for (t, e) in self.tc.data_mut().iter_mut().zip(&et) {
            *t |= *e;
        }
        let tc = self.tc.data().to_vec();
        for (w, t) in self.wt.data_mut().iter_mut().zip(&tc) {
            *w |= *t;
        }
    }

    /// Intersection closure: TC ← TC ∩ WT, ET ← ET ∩ TC.
    pub fn close_downward(&mut self) {
        let wt = self.wt.data().to_vec();
        for (t, w) in self.tc.data_mut().iter_mut().zip(&wt) {
            *t &= *w;
        }
        let tc = self.tc.data().to_vec();
        for (e, t) in self.et.data_mut().iter_mut().zip(&tc) {
            *e &= *t;
        }
    }

    /// ET ⊆ TC ⊆ WT voxelwise.
    pub fn is_nested(&self) -> bool {
        self.et.is_subset_of(&self.tc) && self.tc.is_subset_of(&self.wt)
    }

    pub fn volumes_mm3(&self) -> [f64; 3] {
        [
            self.wt.volume_mm3(),
            self.tc.volume_mm3(),
            self.et.volume_mm3(),
        ]
    }
}
