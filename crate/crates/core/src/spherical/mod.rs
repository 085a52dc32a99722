//! Cartesian ↔ spherical coordinates and the regular `(r, θ, φ)` sampling grid.
//!
//! θ is the azimuth in the x–y plane, `atan2(Δy, Δx)`. φ is the elevation
//! above that plane, in `[-π/2, π/2]`. Grid index `(a, b, c)` maps to
//!
//! ```text
//! r = a · r_max / (n_r − 1)
//! θ = −π + b · 2π / n_theta        (periodic, no duplicate +π column)
//! φ = −π/2 + c · π / (n_phi − 1)
//! ```

mod resample;

pub use resample::{
    forward_transform_labels, forward_transform_scalar, inverse_project_labels, sample_nearest,
    sample_trilinear, Interpolation,
};

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, ScalarVolume, Spacing, Volume, Voxel};

/// Center of a spherical transform, in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Origin {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Origin {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Origin { x, y, z }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Origin {
    fn from(p: [f64; 3]) -> Self {
        Origin::new(p[0], p[1], p[2])
    }
}

impl From<Origin> for [f64; 3] {
    fn from(o: Origin) -> Self {
        o.as_array()
    }
}

/// Spherical coordinates `(r, θ, φ)` of a mm point about `o`.
///
/// `φ = atan2(Δz, hypot(Δx, Δy))`, which equals `asin(Δz / r)` but stays
/// well conditioned near the poles. At `r = 0`, θ = φ = 0.
pub fn cart_to_sph(p: [f64; 3], o: Origin) -> (f64, f64, f64) {
    let (dx, dy, dz) = (p[0] - o.x, p[1] - o.y, p[2] - o.z);
    let rho = dx.hypot(dy);
    let r = rho.hypot(dz);
    if r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (r, dy.atan2(dx), dz.atan2(rho))
}

pub fn sph_to_cart(r: f64, theta: f64, phi: f64, o: Origin) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [o.x + r * cp * ct, o.y + r * cp * st, o.z + r * sp]
}

/// Number of samples along each spherical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for GridShape {
    fn default() -> Self {
        GridShape {
            n_r: 128,
            n_theta: 256,
            n_phi: 128,
        }
    }
}

impl GridShape {
    pub fn validate(&self) -> Result<()> {
        if self.n_r < 2 || self.n_phi < 2 || self.n_theta < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid needs n_r, n_phi >= 2 and n_theta >= 4, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub n_phi: usize,
    pub r_max: f64,
    pub origin: Origin,
}

impl SphericalGrid {
    pub fn new(shape: GridShape, r_max: f64, origin: Origin) -> Result<Self> {
        shape.validate()?;
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        Ok(SphericalGrid {
            n_r: shape.n_r,
            n_theta: shape.n_theta,
            n_phi: shape.n_phi,
            r_max,
            origin,
        })
    }

    pub fn shape(&self) -> GridShape {
        GridShape {
            n_r: self.n_r,
            n_theta: self.n_theta,
            n_phi: self.n_phi,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.n_r, self.n_theta, self.n_phi]
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dr(&self) -> f64 {
        self.r_max / (self.n_r - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn dphi(&self) -> f64 {
        PI / (self.n_phi - 1) as f64
    }

    pub fn radius(&self, a: usize) -> f64 {
        a as f64 * self.dr()
    }

    pub fn theta(&self, b: usize) -> f64 {
        -PI + b as f64 * self.dtheta()
    }

    pub fn phi(&self, c: usize) -> f64 {
        -FRAC_PI_2 + c as f64 * self.dphi()
    }

    /// Step sizes `(dr, dθ, dφ)`, used as the nominal spacing when a spherical
    /// volume is handed around as a plain grid.
    pub fn step_spacing(&self) -> Spacing {
        Spacing {
            sx: self.dr(),
            sy: self.dtheta(),
            sz: self.dphi(),
        }
    }
}

/// Data sampled on a [`SphericalGrid`], row-major over `(n_r, n_theta, n_phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalVolume<T> {
    grid: SphericalGrid,
    data: Vec<T>,
}

impl<T: Voxel> SphericalVolume<T> {
    pub fn new(grid: SphericalGrid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "spherical data length {} does not match grid {:?}",
                data.len(),
                grid.dims()
            )));
        }
        Ok(SphericalVolume { grid, data })
    }

    /// Reinterprets a plain volume of shape `(n_r, n_theta, n_phi)` as
    /// spherical data on `grid`.
    pub fn from_volume(grid: SphericalGrid, v: Volume<T>) -> Result<Self> {
        if v.dims() != grid.dims() {
            return Err(Error::DimensionMismatch(format!(
                "volume dims {:?} do not match grid {:?}",
                v.dims(),
                grid.dims()
            )));
        }
        Self::new(grid, v.into_data())
    }

    /// The samples as a plain volume with spacing `(dr, dθ, dφ)`.
    pub fn to_volume(&self) -> Volume<T> {
        Volume::from_vec(self.grid.dims(), self.grid.step_spacing(), self.data.clone())
            .expect("grid dims are positive")
    }

    pub fn grid(&self) -> &SphericalGrid {
        &self.grid
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> T {
        self.data[(a * self.grid.n_theta + b) * self.grid.n_phi + c]
    }
}

/// How the outer radius of the grid is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RMaxMode {
    /// Farthest non-zero voxel (the brain surface).
    #[default]
    Surface,
    /// Farthest corner of the volume box `[0, n·s]³`.
    Corners,
}

/// Farthest distance from `o` in mm, per `mode`.
pub fn compute_r_max(v: &ScalarVolume, o: Origin, mode: RMaxMode) -> Result<f64> {
    match mode {
        RMaxMode::Surface => surface_r_max(&crate::volume::nonzero_mask(v), o),
        RMaxMode::Corners => Ok(corner_r_max(v, o)),
    }
}

/// Surface-mode radius over an explicit foreground mask.
pub fn surface_r_max(mask: &BinaryMask, o: Origin) -> Result<f64> {
    let mut best: Option<f64> = None;
    for (l, _) in mask.data().iter().enumerate().filter(|(_, &m)| m) {
        let p = mask.mm_of(l);
        let d2 = (p[0] - o.x).powi(2) + (p[1] - o.y).powi(2) + (p[2] - o.z).powi(2);
        best = Some(best.map_or(d2, |b: f64| b.max(d2)));
    }
    best.map(f64::sqrt)
        .ok_or_else(|| Error::Degenerate("surface r_max needs at least one non-zero voxel".into()))
}

pub fn corner_r_max<T>(v: &Volume<T>, o: Origin) -> f64 {
    let e = v.extent_mm();
    let mut best = 0.0f64;
    for &x in &[0.0, e[0]] {
        for &y in &[0.0, e[1]] {
            for &z in &[0.0, e[2]] {
                let d = ((x - o.x).powi(2) + (y - o.y).powi(2) + (z - o.z).powi(2)).sqrt();
                best = best.max(d);
            }
        }
    }
    best
}

/// Surface radius of `mask`, falling back to the corner radius when the mask
/// is empty. Returns the radius and the mode that produced it.
pub fn adaptive_r_max(mask: &BinaryMask, o: Origin) -> (f64, RMaxMode) {
    match surface_r_max(mask, o) {
        Ok(r) => (r, RMaxMode::Surface),
        Err(_) => (corner_r_max(mask, o), RMaxMode::Corners),
    }
}
