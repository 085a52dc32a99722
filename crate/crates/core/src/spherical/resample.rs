//! Forward resampling onto a spherical grid and nearest-neighbor label
//! back-projection onto a Cartesian grid.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SphericalGrid, SphericalVolume};
use crate::error::{Error, Result};
use crate::volume::{is_label_value, Dims, LabelVolume, ScalarVolume, Spacing, Volume, Voxel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Trilinear,
    Nearest,
}

/// Fractional voxel index → nearest voxel, or `None` outside the volume.
#[inline]
fn nearest_index(f: f64, n: usize) -> Option<usize> {
    let i = (f + 0.5).floor();
    if i >= 0.0 && i < n as f64 {
        Some(i as usize)
    } else {
        None
    }
}

/// Nearest-neighbor sample at a mm position; zero outside the volume.
pub fn sample_nearest<T: Voxel>(v: &Volume<T>, p: [f64; 3]) -> T {
    let s = v.spacing().as_array();
    let d = v.dims();
    match (
        nearest_index(p[0] / s[0], d[0]),
        nearest_index(p[1] / s[1], d[1]),
        nearest_index(p[2] / s[2], d[2]),
    ) {
        (Some(i), Some(j), Some(k)) => *v.get([i, j, k]),
        _ => T::default(),
    }
}

/// Trilinear sample at a mm position. Positions farther than half a voxel
/// outside the grid read as zero; within that band the edge is extended.
pub fn sample_trilinear(v: &ScalarVolume, p: [f64; 3]) -> f32 {
    let s = v.spacing().as_array();
    let d = v.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut w = [0f64; 3];
    for ax in 0..3 {
        let f = p[ax] / s[ax];
        let n = d[ax] as f64;
        if !(f >= -0.5 && f < n - 0.5) {
            return 0.0;
        }
        let f = f.clamp(0.0, n - 1.0);
        let i0 = f.floor();
        lo[ax] = i0 as usize;
        hi[ax] = (lo[ax] + 1).min(d[ax] - 1);
        w[ax] = f - i0;
    }
    let data = v.data();
    let at = |i: usize, j: usize, k: usize| data[(i * d[1] + j) * d[2] + k] as f64;
    let c00 = at(lo[0], lo[1], lo[2]) * (1.0 - w[0]) + at(hi[0], lo[1], lo[2]) * w[0];
    let c01 = at(lo[0], lo[1], hi[2]) * (1.0 - w[0]) + at(hi[0], lo[1], hi[2]) * w[0];
    let c10 = at(lo[0], hi[1], lo[2]) * (1.0 - w[0]) + at(hi[0], hi[1], lo[2]) * w[0];
    let c11 = at(lo[0], hi[1], hi[2]) * (1.0 - w[0]) + at(hi[0], hi[1], hi[2]) * w[0];
    let c0 = c00 * (1.0 - w[1]) + c10 * w[1];
    let c1 = c01 * (1.0 - w[1]) + c11 * w[1];
    (c0 * (1.0 - w[2]) + c1 * w[2]) as f32
}

/// Evaluates `sample` at every grid point; parallel over radial rows.
fn resample<T, F>(grid: &SphericalGrid, sample: F) -> Vec<T>
where
    T: Voxel,
    F: Fn([f64; 3]) -> T + Sync,
{
    let thetas: Vec<(f64, f64)> = (0..grid.n_theta).map(|b| grid.theta(b).sin_cos()).collect();
    let phis: Vec<(f64, f64)> = (0..grid.n_phi).map(|c| grid.phi(c).sin_cos()).collect();
    let o = grid.origin;
    let row = grid.n_theta * grid.n_phi;
    let mut out = vec![T::default(); grid.len()];
    out.par_chunks_mut(row).enumerate().for_each(|(a, chunk)| {
        let r = grid.radius(a);
        for (b, &(st, ct)) in thetas.iter().enumerate() {
            for (c, &(sp, cp)) in phis.iter().enumerate() {
                let p = [o.x + r * cp * ct, o.y + r * cp * st, o.z + r * sp];
                chunk[b * grid.n_phi + c] = sample(p);
            }
        }
    });
    out
}

/// Resamples an intensity volume onto `grid`.
pub fn forward_transform_scalar(
    v: &ScalarVolume,
    grid: &SphericalGrid,
    interp: Interpolation,
) -> SphericalVolume<f32> {
    let data = match interp {
        Interpolation::Trilinear => resample(grid, |p| sample_trilinear(v, p)),
        Interpolation::Nearest => resample(grid, |p| sample_nearest(v, p)),
    };
    SphericalVolume::new(*grid, data).expect("resample fills the grid")
}

/// Resamples a label map onto `grid`. Only nearest-neighbor is allowed.
pub fn forward_transform_labels(
    v: &LabelVolume,
    grid: &SphericalGrid,
    interp: Interpolation,
) -> Result<SphericalVolume<u8>> {
    if interp != Interpolation::Nearest {
        return Err(Error::UnsupportedInterpolation(
            "label volumes must be resampled with nearest-neighbor".into(),
        ));
    }
    let vol = v.as_volume();
    let data = resample(grid, |p| sample_nearest(vol, p));
    SphericalVolume::new(*grid, data)
}

/// Projects spherical-domain labels back onto a Cartesian grid.
///
/// Each voxel center is converted to `(r, θ, φ)` about the grid origin and
/// looked up by nearest neighbor; voxels beyond `r_max` get 0.
pub fn inverse_project_labels(
    s: &SphericalVolume<u8>,
    target_dims: Dims,
    target_spacing: Spacing,
) -> Result<LabelVolume> {
    if let Some(&bad) = s.data().iter().find(|&&v| !is_label_value(v)) {
        return Err(Error::InvalidLabel(bad as i64));
    }
    let g = *s.grid();
    let (dr, dt, dp) = (g.dr(), g.dtheta(), g.dphi());
    let o = g.origin;
    let [nx, ny, nz] = target_dims;
    let mut out = Volume::<u8>::filled(target_dims, target_spacing, 0)?.into_data();
    out.par_chunks_mut(ny * nz).enumerate().for_each(|(i, slab)| {
        let dx = i as f64 * target_spacing.sx - o.x;
        for j in 0..ny {
            let dy = j as f64 * target_spacing.sy - o.y;
            let rho = dx.hypot(dy);
            let theta = dy.atan2(dx);
            let b = ((theta + PI) / dt).round() as usize % g.n_theta;
            for k in 0..nz {
                let dz = k as f64 * target_spacing.sz - o.z;
                let r = rho.hypot(dz);
                if r > g.r_max {
                    continue;
                }
                let a = ((r / dr).round() as usize).min(g.n_r - 1);
                let (b, c) = if r == 0.0 {
                    (0, 0)
                } else {
                    let phi = dz.atan2(rho);
                    (b, (((phi + FRAC_PI_2) / dp).round() as usize).min(g.n_phi - 1))
                };
                slab[j * nz + k] = s.get(a, b, c);
            }
        }
    });
    debug_assert_eq!(out.len(), nx * ny * nz);
    LabelVolume::from_vec(target_dims, target_spacing, out)
}
