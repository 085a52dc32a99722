//! 2D polar transform of a single slice, with the rotate/scale helpers used to
//! show how image rotation and zoom act on the polar representation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Row-major 2D grid: pixel `(x, y)` lives at `data[y * width + x]`, with its
/// center at `(x * sx, y * sy)` mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2 {
    width: usize,
    height: usize,
    spacing: [f64; 2],
    data: Vec<f32>,
}

impl Image2 {
    pub fn new(width: usize, height: usize, spacing: [f64; 2], data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidVolume("image dims must be positive".into()));
        }
        if !spacing.iter().all(|s| *s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidVolume(format!("bad spacing {spacing:?}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidVolume("non-finite pixel".into()));
        }
        Ok(Image2 {
            width,
            height,
            spacing,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        spacing: [f64; 2],
        f: impl Fn([f64; 2]) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f([x as f64 * spacing[0], y as f64 * spacing[1]]));
            }
        }
        Self::new(width, height, spacing, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Midpoint of the physical extent.
    pub fn center_mm(&self) -> [f64; 2] {
        [
            self.width as f64 * self.spacing[0] / 2.0,
            self.height as f64 * self.spacing[1] / 2.0,
        ]
    }

    /// Bilinear sample at a mm position; zero more than half a pixel outside.
    pub fn sample_bilinear(&self, p: [f64; 2]) -> f32 {
        let dims = [self.width, self.height];
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        let mut w = [0f64; 2];
        for ax in 0..2 {
            let f = p[ax] / self.spacing[ax];
            let n = dims[ax] as f64;
            if !(f >= -0.5 && f < n - 0.5) {
                return 0.0;
            }
            let f = f.clamp(0.0, n - 1.0);
            let i0 = f.floor();
            lo[ax] = i0 as usize;
            hi[ax] = (lo[ax] + 1).min(dims[ax] - 1);
            w[ax] = f - i0;
        }
        let at = |x: usize, y: usize| self.get(x, y) as f64;
        let top = at(lo[0], lo[1]) * (1.0 - w[0]) + at(hi[0], lo[1]) * w[0];
        let bottom = at(lo[0], hi[1]) * (1.0 - w[0]) + at(hi[0], hi[1]) * w[0];
        (top * (1.0 - w[1]) + bottom * w[1]) as f32
    }

    pub fn is_blank(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Polar resampling about `origin`: row `a` is radius `a · r_max / (n_r − 1)`,
/// column `b` is angle `−π + b · 2π / n_theta`.
///
/// The output has `n_theta` columns and `n_r` rows, with unit spacing.
pub fn polar_transform_2d(
    img: &Image2,
    origin: [f64; 2],
    n_r: usize,
    n_theta: usize,
    r_max: f64,
) -> Result<Image2> {
    if n_r < 2 || n_theta < 4 {
        return Err(Error::InvalidArgument(format!(
            "polar grid needs n_r >= 2 and n_theta >= 4, got {n_r}x{n_theta}"
        )));
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("r_max must be positive, got {r_max}")));
    }
    let dr = r_max / (n_r - 1) as f64;
    let dt = 2.0 * PI / n_theta as f64;
    let trig: Vec<(f64, f64)> = (0..n_theta).map(|b| (-PI + b as f64 * dt).sin_cos()).collect();
    let mut data = Vec::with_capacity(n_r * n_theta);
    for a in 0..n_r {
        let r = a as f64 * dr;
        for &(s, c) in &trig {
            data.push(img.sample_bilinear([origin[0] + r * c, origin[1] + r * s]));
        }
    }
    Image2::new(n_theta, n_r, [1.0, 1.0], data)
}

/// Farthest non-zero pixel from `origin`, or the farthest image corner when
/// the image is blank.
pub fn polar_r_max(img: &Image2, origin: [f64; 2]) -> f64 {
    let mut best: Option<f64> = None;
    for y in 0..img.height {
        for x in 0..img.width {
            if img.get(x, y) != 0.0 {
                let d = (x as f64 * img.spacing[0] - origin[0])
                    .hypot(y as f64 * img.spacing[1] - origin[1]);
                best = Some(best.map_or(d, |b: f64| b.max(d)));
            }
        }
    }
    best.filter(|&r| r > 0.0).unwrap_or_else(|| {
        let e = [img.width as f64 * img.spacing[0], img.height as f64 * img.spacing[1]];
        [[0.0, 0.0], [e[0], 0.0], [0.0, e[1]], e]
            .iter()
            .map(|c| (c[0] - origin[0]).hypot(c[1] - origin[1]))
            .fold(0.0, f64::max)
    })
}

/// Rotates the image content by `angle` (counter-clockwise in x/y mm
/// coordinates) about `center`, keeping the canvas.
pub fn rotate_image(img: &Image2, center: [f64; 2], angle: f64) -> Image2 {
    let (s, c) = angle.sin_cos();
    Image2::from_fn(img.width, img.height, img.spacing, |p| {
        let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
        img.sample_bilinear([center[0] + c * dx + s * dy, center[1] - s * dx + c * dy])
    })
    .expect("same geometry as input")
}

/// Zooms the image content by `factor` about its center onto a canvas scaled
/// by the same factor, so nothing is cropped.
pub fn scale_image(img: &Image2, factor: f64) -> Result<Image2> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad scale factor {factor}")));
    }
    let w = ((img.width as f64 * factor).round() as usize).max(1);
    let h = ((img.height as f64 * factor).round() as usize).max(1);
    let src = img.center_mm();
    let dst = [w as f64 * img.spacing[0] / 2.0, h as f64 * img.spacing[1] / 2.0];
    Image2::from_fn(w, h, img.spacing, |p| {
        img.sample_bilinear([
            src[0] + (p[0] - dst[0]) / factor,
            src[1] + (p[1] - dst[1]) / factor,
        ])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc(n: usize, center: [f64; 2], radius: f64) -> Image2 {
        Image2::from_fn(n, n, [1.0, 1.0], |p| {
            if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    /// Smooth off-center pattern so rotations are visible in the polar image.
    fn pattern(p: [f64; 2], c: [f64; 2]) -> f32 {
        let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
        let r = dx.hypot(dy);
        if r > 28.0 {
            return 0.0;
        }
        let blob = (-((dx - 10.0).powi(2) + (dy - 4.0).powi(2)) / 30.0).exp();
        (0.3 + 0.7 * blob) as f32
    }

    #[test]
    fn constant_image_gives_constant_polar() {
        let img = Image2::new(8, 8, [1.0, 1.0], vec![2.0; 64]).unwrap();
        let p = polar_transform_2d(&img, [3.5, 3.5], 4, 16, 3.0).unwrap();
        assert!(p.data().iter().all(|&v| (v - 2.0).abs() < 1e-6));
    }

    #[test]
    fn disc_rows_inside_radius_are_one() {
        let c = [32.0, 32.0];
        let img = disc(65, c, 20.0);
        let p = polar_transform_2d(&img, c, 31, 64, 30.0).unwrap();
        for a in 0..31 {
            let r = a as f64;
            for b in 0..64 {
                if r <= 20.0 - 2f64.sqrt() {
                    assert_eq!(p.get(b, a), 1.0);
                } else if r >= 20.0 + 2f64.sqrt() {
                    assert_eq!(p.get(b, a), 0.0);
                }
            }
        }
    }

    #[test]
    fn rotation_by_one_bin_is_circular_shift() {
        let n_theta = 64;
        let c = [40.0, 40.0];
        let dt = 2.0 * PI / n_theta as f64;
        let base = Image2::from_fn(81, 81, [1.0, 1.0], |p| pattern(p, c)).unwrap();
        // rotate analytically: rotated(p) = base(R⁻¹ p)
        let rotated = Image2::from_fn(81, 81, [1.0, 1.0], |p| {
            let (s, co) = dt.sin_cos();
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            pattern([c[0] + co * dx + s * dy, c[1] - s * dx + co * dy], c)
        })
        .unwrap();
        let pb = polar_transform_2d(&base, c, 30, n_theta, 29.0).unwrap();
        let pr = polar_transform_2d(&rotated, c, 30, n_theta, 29.0).unwrap();
        let (lo, hi) = base.min_max();
        let mut sum = 0.0;
        let mut n = 0;
        for a in 3..30 {
            for b in 0..n_theta {
                let shifted = pb.get((b + n_theta - 1) % n_theta, a);
                sum += (pr.get(b, a) - shifted).abs() as f64;
                n += 1;
            }
        }
        let mean = sum / n as f64 / (hi - lo) as f64;
        assert!(mean < 0.05, "mean |diff| {mean}");
    }

    #[test]
    fn r_max_falls_back_to_corners() {
        let blank = Image2::new(4, 2, [1.0, 1.0], vec![0.0; 8]).unwrap();
        assert!((polar_r_max(&blank, [2.0, 1.0]) - 5f64.sqrt()).abs() < 1e-12);
        let img = disc(21, [10.0, 10.0], 5.0);
        assert_eq!(polar_r_max(&img, [10.0, 10.0]), 5.0);
    }

    #[test]
    fn scale_doubles_canvas() {
        let img = disc(20, [10.0, 10.0], 5.0);
        let big = scale_image(&img, 2.0).unwrap();
        assert_eq!((big.width(), big.height()), (40, 40));
        let r = polar_r_max(&big, big.center_mm());
        assert!((r - 10.0).abs() <= 2.0, "scaled radius {r}");
    }

    #[test]
    fn rotate_by_zero_is_identity() {
        let img = disc(15, [7.0, 7.0], 4.0);
        assert_eq!(rotate_image(&img, [7.0, 7.0], 0.0), img);
    }
}
