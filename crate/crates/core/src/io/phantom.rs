//! Synthetic brain-with-tumor phantom with analytic ground truth.
//!
//! A tissue ellipsoid holds three concentric tumor spheres. Channel 0 encodes
//! the labels by intensity (tissue, edema shell, core shell, enhancing core);
//! the other channels are copies of it with seeded Gaussian noise on the
//! non-zero voxels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, MultiChannelVolume, ScalarVolume, Spacing, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    /// Brain ellipsoid semi-axes (mm), centered on the volume center.
    pub brain_semi_axes_mm: [f64; 3],
    pub tissue_intensity: f32,
    pub noise_sigma: f32,
    /// Tumor center relative to the volume center (mm).
    pub tumor_offset_mm: [f64; 3],
    /// Whole tumor, tumor core and enhancing tumor radii (mm).
    pub radii_mm: [f64; 3],
    /// Intensities of the WT shell, TC shell and ET core.
    pub intensities: [f32; 3],
    pub channels: usize,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            dims: [240, 240, 155],
            spacing: Spacing::default(),
            brain_semi_axes_mm: [70.0, 85.0, 60.0],
            tissue_intensity: 0.3,
            noise_sigma: 0.02,
            tumor_offset_mm: [15.0, -10.0, 7.5],
            radii_mm: [25.0, 15.0, 8.0],
            intensities: [0.6, 0.8, 1.0],
            channels: 4,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    /// A smaller phantom for fast tests: 96 × 96 × 80 at 1 mm.
    pub fn small() -> Self {
        PhantomSpec {
            dims: [96, 96, 80],
            brain_semi_axes_mm: [38.0, 44.0, 32.0],
            tumor_offset_mm: [8.0, -5.0, 3.0],
            radii_mm: [16.0, 10.0, 5.0],
            ..Self::default()
        }
    }

    pub fn volume_center_mm(&self) -> [f64; 3] {
        let s = self.spacing.as_array();
        std::array::from_fn(|a| self.dims[a] as f64 * s[a] / 2.0)
    }

    pub fn tumor_center_mm(&self) -> [f64; 3] {
        let c = self.volume_center_mm();
        std::array::from_fn(|a| c[a] + self.tumor_offset_mm[a])
    }

    /// Same physical content, everything scaled by `factor` (grid included).
    pub fn scaled(&self, factor: f64) -> Self {
        PhantomSpec {
            dims: self.dims.map(|d| ((d as f64 * factor).round() as usize).max(1)),
            brain_semi_axes_mm: self.brain_semi_axes_mm.map(|a| a * factor),
            tumor_offset_mm: self.tumor_offset_mm.map(|o| o * factor),
            radii_mm: self.radii_mm.map(|r| r * factor),
            ..self.clone()
        }
    }

    /// Same physical content rasterized at a different isotropic spacing.
    pub fn with_spacing(&self, spacing: f64) -> Self {
        let extent = self.volume_extent_mm();
        PhantomSpec {
            dims: std::array::from_fn(|a| ((extent[a] / spacing).round() as usize).max(1)),
            spacing: Spacing::isotropic(spacing),
            ..self.clone()
        }
    }

    fn volume_extent_mm(&self) -> [f64; 3] {
        let s = self.spacing.as_array();
        std::array::from_fn(|a| self.dims[a] as f64 * s[a])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        self.spacing.validate()?;
        if self.dims.contains(&0) {
            return bad(format!("phantom dims must be positive, got {:?}", self.dims));
        }
        if self.channels == 0 {
            return bad("phantom needs at least one channel".into());
        }
        if !self.brain_semi_axes_mm.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return bad(format!("bad brain semi-axes {:?}", self.brain_semi_axes_mm));
        }
        let [wt, tc, et] = self.radii_mm;
        if !(wt > tc && tc > et && et > 0.0 && wt.is_finite()) {
            return bad(format!("tumor radii must be strictly decreasing and positive, got {:?}", self.radii_mm));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("bad noise sigma {}", self.noise_sigma));
        }
        if !(self.tissue_intensity > 0.0 && self.intensities.iter().all(|v| *v > 0.0 && v.is_finite())) {
            return bad("phantom intensities must be positive".into());
        }
        if !self.tumor_inside_brain() {
            return bad("tumor sphere is not contained in the brain ellipsoid".into());
        }
        Ok(())
    }

    /// Checks a dense set of directions on the whole-tumor sphere surface.
    fn tumor_inside_brain(&self) -> bool {
        let r = self.radii_mm[0];
        let o = self.tumor_offset_mm;
        let (n_el, n_az) = (90, 180);
        (0..=n_el).all(|i| {
            let el = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n_el as f64;
            (0..n_az).all(|j| {
                let az = std::f64::consts::TAU * j as f64 / n_az as f64;
                let u = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
                self.ellipsoid_value(std::array::from_fn(|a| o[a] + r * u[a])) <= 1.0
            })
        })
    }

    /// `Σ (d_a / semi_a)²` for a displacement from the volume center.
    fn ellipsoid_value(&self, d: [f64; 3]) -> f64 {
        (0..3).map(|a| (d[a] / self.brain_semi_axes_mm[a]).powi(2)).sum()
    }

    pub fn in_brain(&self, p: [f64; 3]) -> bool {
        let c = self.volume_center_mm();
        self.ellipsoid_value(std::array::from_fn(|a| p[a] - c[a])) <= 1.0
    }

    /// Analytic label at a physical position.
    pub fn label_at(&self, p: [f64; 3]) -> u8 {
        let t = self.tumor_center_mm();
        let d = ((p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2) + (p[2] - t[2]).powi(2)).sqrt();
        let [wt, tc, et] = self.radii_mm;
        if d <= et {
            4
        } else if d <= tc {
            1
        } else if d <= wt {
            2
        } else {
            0
        }
    }

    /// Noise-free channel-0 intensity at a physical position.
    pub fn intensity_at(&self, p: [f64; 3]) -> f32 {
        match self.label_at(p) {
            4 => self.intensities[2],
            1 => self.intensities[1],
            2 => self.intensities[0],
            _ if self.in_brain(p) => self.tissue_intensity,
            _ => 0.0,
        }
    }
}

/// Rasterizes the phantom at voxel centers. Returns the channels and the
/// ground-truth label map.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(MultiChannelVolume, LabelVolume)> {
    generate_phantom_mapped(spec, |p| p)
}

/// Like [`generate_phantom`], but voxel `p` shows the phantom content at
/// `map(p)`. Passing an inverse rotation yields a rotated phantom.
pub fn generate_phantom_mapped(
    spec: &PhantomSpec,
    map: impl Fn([f64; 3]) -> [f64; 3],
) -> Result<(MultiChannelVolume, LabelVolume)> {
    spec.validate()?;
    let s = spec.spacing.as_array();
    let mm = |[i, j, k]: [usize; 3]| map([i as f64 * s[0], j as f64 * s[1], k as f64 * s[2]]);
    let base = ScalarVolume::from_fn(spec.dims, spec.spacing, |idx| spec.intensity_at(mm(idx)))?;
    let truth = LabelVolume::new(Volume::from_fn(spec.dims, spec.spacing, |idx| spec.label_at(mm(idx)))?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0f32, spec.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let mut channels = vec![base.clone()];
    for _ in 1..spec.channels {
        let mut ch = base.clone();
        for v in ch.data_mut() {
            if *v != 0.0 {
                let noisy = *v + normal.sample(&mut rng);
                // keep the zero set identical to channel 0
                *v = if noisy == 0.0 { f32::MIN_POSITIVE } else { noisy };
            }
        }
        channels.push(ch);
    }
    Ok((MultiChannelVolume::new(channels)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn default_whole_tumor_volume() {
        let (_, truth) = generate_phantom(&PhantomSpec::default()).unwrap();
        let wt = truth.data().iter().filter(|&&l| l != 0).count() as f64;
        let exact = 4.0 / 3.0 * PI * 25f64.powi(3);
        assert!((exact - 65_449.8).abs() < 0.1);
        assert!((wt - exact).abs() / exact < 0.03, "WT {wt} vs {exact}");
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = PhantomSpec { seed: 5, ..PhantomSpec::small() };
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_phantom(&PhantomSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.0.channel(1), c.0.channel(1));
        assert_eq!(a.0.channel(0), c.0.channel(0));
        assert_eq!(a.1, c.1);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad_radii = PhantomSpec { radii_mm: [25.0, 15.0, 15.0], ..PhantomSpec::default() };
        assert!(generate_phantom(&bad_radii).is_err());
        let inverted = PhantomSpec { radii_mm: [25.0, 8.0, 15.0], ..PhantomSpec::default() };
        assert!(inverted.validate().is_err());
        let outside = PhantomSpec { tumor_offset_mm: [50.0, 0.0, 0.0], ..PhantomSpec::default() };
        assert!(outside.validate().is_err());
        // touches the z pole: 7.5 + 25 < 60 passes, 40 + 25 > 60 fails
        let high = PhantomSpec { tumor_offset_mm: [0.0, 0.0, 40.0], ..PhantomSpec::default() };
        assert!(high.validate().is_err());
    }

    #[test]
    fn matches_analytic_membership_voxelwise() {
        let spec = PhantomSpec::small();
        let (chans, truth) = generate_phantom(&spec).unwrap();
        let ch0 = chans.channel(0).unwrap();
        for l in 0..truth.len() {
            let p = truth.mm_of(l);
            assert_eq!(truth.data()[l], spec.label_at(p));
            assert_eq!(ch0.data()[l] != 0.0, spec.in_brain(p) || spec.label_at(p) != 0);
        }
        // noisy channels share the zero set
        let mask = chans.channel(0).unwrap().map(|v| v != 0.0);
        for c in 1..4 {
            assert_eq!(chans.channel(c).unwrap().map(|v| v != 0.0), mask);
        }
    }

    #[test]
    fn truth_is_nested() {
        let (_, truth) = generate_phantom(&PhantomSpec::small()).unwrap();
        assert!(crate::volume::RegionMasks::from_labels(&truth).is_nested());
    }

    #[test]
    fn rescaling_helpers_keep_content() {
        let spec = PhantomSpec::small();
        let half = spec.with_spacing(0.5);
        assert_eq!(half.dims, [192, 192, 160]);
        assert_eq!(half.tumor_center_mm(), spec.tumor_center_mm());
        let big = spec.scaled(2.0);
        assert_eq!(big.dims, [192, 192, 160]);
        assert_eq!(big.radii_mm, [32.0, 20.0, 10.0]);
        big.validate().unwrap();
    }
}
