//! Side-by-side polar transforms of an image, its 45° rotation and its 2×
//! zoom. Rotation turns into a horizontal shift of the polar panel, zoom
//! (with `r_max` following the content) leaves it unchanged.

use std::f64::consts::FRAC_PI_4;
use std::fs;
use std::path::Path;

use sphereseg::io::read_scalar;
use sphereseg::polar::{polar_r_max, polar_transform_2d, rotate_image, scale_image, Image2};
use sphereseg::{Error, Result};

const GAP: usize = 4;

fn is_volume(path: &Path) -> bool {
    let name = path.to_string_lossy().to_ascii_lowercase();
    [".nii", ".nii.gz", ".svol"].iter().any(|s| name.ends_with(s))
}

fn extension(path: &Path) -> String {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default()
}

/// Numbers separated by whitespace or commas, one image row per line.
pub fn parse_grid(text: &str) -> Result<Image2> {
    let rows: Vec<Vec<f32>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f32>().map_err(|_| Error::InvalidVolume(format!("bad number {t:?} in grid"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::InvalidVolume("text input is not a rectangular 2D grid".into()));
    }
    let height = rows.len();
    Image2::new(width, height, [1.0, 1.0], rows.concat())
}

fn read_image(path: &Path) -> Result<Image2> {
    if is_volume(path) {
        let m = read_scalar(path)?;
        let dims = m.dims();
        let flat: Vec<usize> = dims.iter().copied().filter(|&d| d > 1).collect();
        if m.num_channels() != 1 || flat.len() > 2 {
            return Err(Error::InvalidVolume(format!(
                "expected a single 2D slice, got {} channel(s) of {dims:?}",
                m.num_channels()
            )));
        }
        // keep the two largest axes as x (columns) and y (rows)
        let c = &m.channels()[0];
        let sp = c.spacing().as_array();
        let axes: Vec<usize> = (0..3).filter(|&a| dims[a] > 1).chain((0..3).filter(|&a| dims[a] == 1)).take(2).collect();
        let (ax, ay) = (axes[0], axes[1]);
        let mut data = Vec::with_capacity(dims[ax] * dims[ay]);
        for y in 0..dims[ay] {
            for x in 0..dims[ax] {
                let mut idx = [0; 3];
                idx[ax] = x;
                idx[ay] = y;
                data.push(*c.get(idx));
            }
        }
        return Image2::new(dims[ax], dims[ay], [sp[ax], sp[ay]], data);
    }
    match extension(path).as_str() {
        "txt" | "csv" => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_grid(&text)
        }
        _ => {
            let img = image::open(path)
                .map_err(|e| Error::InvalidVolume(format!("{}: {e}", path.display())))?
                .into_luma8();
            let (w, h) = img.dimensions();
            let data = img.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
            Image2::new(w as usize, h as usize, [1.0, 1.0], data)
        }
    }
}

/// An off-center disc and a bar, so rotation is visible.
pub fn test_image() -> Image2 {
    Image2::from_fn(128, 128, [1.0, 1.0], |[x, y]| {
        if (x - 80.0).hypot(y - 60.0) <= 22.0 {
            1.0
        } else if (28.0..56.0).contains(&x) && (58.0..70.0).contains(&y) {
            0.5
        } else {
            0.0
        }
    })
    .expect("fixed geometry")
}

/// Panels A–C (original, rotated, zoomed) and D–F (their polar transforms).
pub fn panels(img: &Image2, n_r: usize, n_theta: usize) -> Result<Vec<Image2>> {
    let center = img.center_mm();
    let rotated = rotate_image(img, center, FRAC_PI_4);
    let zoomed = scale_image(img, 2.0)?;
    let sources = [img.clone(), rotated, zoomed];
    let mut out = sources.to_vec();
    for s in &sources {
        let c = s.center_mm();
        out.push(polar_transform_2d(s, c, n_r, n_theta, polar_r_max(s, c))?);
    }
    Ok(out)
}

/// Lays panels out on a 3×2 grid, all mapped through one intensity window.
pub fn compose(panels: &[Image2]) -> (usize, usize, Vec<u8>) {
    let cw = panels.iter().map(Image2::width).max().unwrap_or(0);
    let ch = panels.iter().map(Image2::height).max().unwrap_or(0);
    let (w, h) = (3 * cw + 2 * GAP, 2 * ch + GAP);
    let (lo, hi) = panels
        .iter()
        .map(Image2::min_max)
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut px = vec![0u8; w * h];
    for (n, p) in panels.iter().enumerate() {
        let (ox, oy) = ((n % 3) * (cw + GAP), (n / 3) * (ch + GAP));
        for y in 0..p.height() {
            for x in 0..p.width() {
                let v = (p.data()[y * p.width() + x] - lo) * scale;
                px[(oy + y) * w + ox + x] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    (w, h, px)
}

fn write_raster(path: &Path, w: usize, h: usize, px: Vec<u8>) -> Result<()> {
    match extension(path).as_str() {
        "pgm" => {
            let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            bytes.extend(px);
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        "png" => image::GrayImage::from_raw(w as u32, h as u32, px)
            .expect("buffer matches dimensions")
            .save(path)
            .map_err(|e| Error::Io { path: path.into(), source: std::io::Error::other(e) }),
        other => Err(Error::InvalidArgument(format!("unsupported output extension {other:?} (use .png or .pgm)"))),
    }
}

pub fn demo_polar(input: Option<&Path>, output: &Path, n_r: usize, n_theta: usize) -> Result<()> {
    let img = match input {
        Some(p) => read_image(p)?,
        None => test_image(),
    };
    if img.is_blank() {
        log::warn!("input image is empty; the polar panels are degenerate");
    }
    let (w, h, px) = compose(&panels(&img, n_r, n_theta)?);
    write_raster(output, w, h, px)
}
