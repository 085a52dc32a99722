//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) subset.
//!
//! Supported datatypes: uint8 (2), int16 (4), float32 (16), float64 (64).
//! Orientation (qform/sform) is not applied; only `pixdim[1..=3]` is used as
//! voxel spacing. A 4th dimension is read as channels.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use log::warn;

use super::AnyVolume;
use crate::error::{Error, FormatError, Result};
use crate::volume::{LabelVolume, MultiChannelVolume, ScalarVolume, Spacing, Volume};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    UInt8,
    Int16,
    Float32,
    Float64,
}

impl Datatype {
    pub fn from_code(code: i16) -> std::result::Result<Self, FormatError> {
        match code {
            2 => Ok(Datatype::UInt8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            64 => Ok(Datatype::Float64),
            other => Err(FormatError::UnsupportedDatatype(other)),
        }
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::UInt8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Datatype::UInt8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

/// The header fields this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeaderSubset {
    /// `dim[1..=dim[0]]`; 3 or 4 entries.
    pub dims: Vec<usize>,
    pub datatype: Datatype,
    pub spacing: Spacing,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: f32,
    pub big_endian: bool,
    pub sform_code: i16,
    pub srow: [[f32; 4]; 3],
}

impl NiftiHeaderSubset {
    pub fn volume_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn channels(&self) -> usize {
        self.dims.get(3).copied().unwrap_or(1)
    }

    fn scaling(&self) -> Option<(f64, f64)> {
        let (s, i) = (self.scl_slope as f64, self.scl_inter as f64);
        (s != 0.0 && s.is_finite() && i.is_finite()).then_some((s, i))
    }

    /// `true` if the sform carries rotation or shear.
    pub fn sform_is_oblique(&self) -> bool {
        if self.sform_code <= 0 {
            return false;
        }
        let scale = (0..3)
            .map(|r| self.srow[r][r].abs())
            .fold(0f32, f32::max)
            .max(f32::MIN_POSITIVE);
        (0..3).any(|r| (0..3).any(|c| r != c && self.srow[r][c].abs() > 1e-4 * scale))
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parses the 348-byte header; endianness is inferred from `sizeof_hdr`.
pub fn parse_header(bytes: &[u8]) -> std::result::Result<NiftiHeaderSubset, FormatError> {
    if bytes.len() < HEADER_SIZE {
        return Err(FormatError::Truncated {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    if LittleEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
        parse_header_as::<LittleEndian>(bytes, false)
    } else if BigEndian::read_i32(&bytes[offsets::SIZEOF_HDR..]) == HEADER_SIZE as i32 {
        parse_header_as::<BigEndian>(bytes, true)
    } else {
        Err(FormatError::BadHeader("sizeof_hdr is not 348 in either byte order".into()))
    }
}

fn parse_header_as<B: ByteOrder>(
    b: &[u8],
    big_endian: bool,
) -> std::result::Result<NiftiHeaderSubset, FormatError> {
    let magic = &b[offsets::MAGIC..offsets::MAGIC + 4];
    match magic {
        b"n+1\0" => {}
        b"ni1\0" => return Err(FormatError::UnsupportedForm),
        other => return Err(FormatError::BadMagic(other.to_vec())),
    }
    let dim: Vec<i16> = (0..8).map(|i| B::read_i16(&b[offsets::DIM + 2 * i..])).collect();
    let ndim = dim[0];
    if !(3..=4).contains(&ndim) {
        return Err(FormatError::BadHeader(format!("dim[0] = {ndim}; only 3D and 4D are supported")));
    }
    let dims: Vec<usize> = dim[1..=ndim as usize]
        .iter()
        .map(|&d| {
            if d > 0 {
                Ok(d as usize)
            } else {
                Err(FormatError::BadHeader(format!("non-positive dim {d}")))
            }
        })
        .collect::<std::result::Result<_, _>>()?;
    let datatype = Datatype::from_code(B::read_i16(&b[offsets::DATATYPE..]))?;
    let pixdim: Vec<f32> = (0..8).map(|i| B::read_f32(&b[offsets::PIXDIM + 4 * i..])).collect();
    let spacing = Spacing::new(widen(pixdim[1]), widen(pixdim[2]), widen(pixdim[3]))
    .map_err(|e| FormatError::BadHeader(e.to_string()))?;
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = B::read_f32(&b[offsets::SROW_X + 16 * r + 4 * c..]);
        }
    }
    let vox_offset = B::read_f32(&b[offsets::VOX_OFFSET..]);
    if !(vox_offset >= HEADER_SIZE as f32) {
        return Err(FormatError::BadHeader(format!("vox_offset {vox_offset} < 348")));
    }
    Ok(NiftiHeaderSubset {
        dims,
        datatype,
        spacing,
        scl_slope: B::read_f32(&b[offsets::SCL_SLOPE..]),
        scl_inter: B::read_f32(&b[offsets::SCL_INTER..]),
        vox_offset,
        big_endian,
        sform_code: B::read_i16(&b[offsets::SFORM_CODE..]),
        srow,
    })
}

/// `f32 → f64` through the shortest decimal form, so a written `0.9` reads
/// back as `0.9` rather than `0.8999999761581421`.
fn widen(v: f32) -> f64 {
    v.abs().to_string().parse().unwrap_or(f64::NAN)
}

/// Decodes the voxel payload into one `f64` buffer per channel, already in
/// this crate's row-major layout and with `scl_slope`/`scl_inter` applied.
fn decode_channels(
    h: &NiftiHeaderSubset,
    bytes: &[u8],
) -> std::result::Result<Vec<Vec<f64>>, FormatError> {
    let [nx, ny, nz] = h.volume_dims();
    let n = nx * ny * nz;
    let start = h.vox_offset as usize;
    let expected = n * h.channels() * h.datatype.size();
    let found = bytes.len().saturating_sub(start);
    if found < expected {
        return Err(FormatError::Truncated { expected, found });
    }
    let payload = &bytes[start..start + expected];
    let raw: Vec<f64> = if h.big_endian {
        decode_values::<BigEndian>(h.datatype, payload)
    } else {
        decode_values::<LittleEndian>(h.datatype, payload)
    };
    let scale = h.scaling();
    Ok(raw
        .chunks_exact(n)
        .map(|chunk| {
            // file order is x fastest; ours is z fastest
            let mut out = vec![0f64; n];
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let v = chunk[i + nx * (j + ny * k)];
                        out[(i * ny + j) * nz + k] = match scale {
                            Some((s, o)) => v * s + o,
                            None => v,
                        };
                    }
                }
            }
            out
        })
        .collect())
}

fn decode_values<B: ByteOrder>(dt: Datatype, p: &[u8]) -> Vec<f64> {
    match dt {
        Datatype::UInt8 => p.iter().map(|&v| v as f64).collect(),
        Datatype::Int16 => p.chunks_exact(2).map(|c| B::read_i16(c) as f64).collect(),
        Datatype::Float32 => p.chunks_exact(4).map(|c| B::read_f32(c) as f64).collect(),
        Datatype::Float64 => p.chunks_exact(8).map(B::read_f64).collect(),
    }
}

fn load(path: &Path) -> Result<(NiftiHeaderSubset, Vec<Vec<f64>>)> {
    let bytes = read_all(path)?;
    let header = parse_header(&bytes).map_err(|k| Error::format(path, k))?;
    if header.sform_is_oblique() {
        warn!(
            "{}: sform is not axis-aligned; orientation is ignored and only pixdim spacing is used",
            path.display()
        );
    }
    let channels = decode_channels(&header, &bytes).map_err(|k| Error::format(path, k))?;
    Ok((header, channels))
}

pub fn read_nifti_header(path: impl AsRef<Path>) -> Result<NiftiHeaderSubset> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    parse_header(&bytes).map_err(|k| Error::format(path, k))
}

/// Reads intensity data; a 4D file becomes one channel per volume.
pub fn read_nifti_scalar(path: impl AsRef<Path>) -> Result<MultiChannelVolume> {
    let path = path.as_ref();
    let (h, channels) = load(path)?;
    let vols = channels
        .into_iter()
        .map(|c| {
            ScalarVolume::from_vec(h.volume_dims(), h.spacing, c.into_iter().map(|v| v as f32).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    MultiChannelVolume::new(vols)
}

/// Reads a BraTS label map. Historical label 3 is remapped to 4.
pub fn read_nifti_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    let (h, channels) = load(path)?;
    if channels.len() != 1 {
        return Err(Error::format(
            path,
            FormatError::DimMismatch("label volumes must be 3D".into()),
        ));
    }
    let mut remapped = 0usize;
    let mut data = Vec::with_capacity(channels[0].len());
    for &v in &channels[0] {
        let l = match v {
            0.0 => 0,
            1.0 => 1,
            2.0 => 2,
            4.0 => 4,
            3.0 => {
                remapped += 1;
                4
            }
            other => {
                return Err(Error::format(
                    path,
                    FormatError::InvalidLabels(format!("value {other} is not a BraTS label")),
                ))
            }
        };
        data.push(l);
    }
    if remapped > 0 {
        warn!("{}: remapped {remapped} voxels of label 3 to 4", path.display());
    }
    LabelVolume::new(Volume::from_vec(h.volume_dims(), h.spacing, data)?)
}

/// Serializes to NIfTI-1 bytes: float32 for intensities, uint8 for labels.
pub fn encode_nifti(v: &AnyVolume) -> Vec<u8> {
    let (dims, spacing, channels, datatype) = match v {
        AnyVolume::Scalar(m) => (m.dims(), m.spacing(), m.num_channels(), Datatype::Float32),
        AnyVolume::Labels(l) => (l.dims(), l.spacing(), 1, Datatype::UInt8),
    };
    let [nx, ny, nz] = dims;
    let mut h = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let dim: [i16; 8] = [
        if channels > 1 { 4 } else { 3 },
        nx as i16,
        ny as i16,
        nz as i16,
        channels as i16,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[offsets::DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], datatype.code());
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], 8 * datatype.size() as i16);
    let pixdim = [1.0, spacing.sx as f32, spacing.sy as f32, spacing.sz as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], VOX_OFFSET as f32);
    // scl_slope = 0 means "no scaling"
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 0.0);
    h[offsets::XYZT_UNITS] = 2; // mm
    LittleEndian::write_i16(&mut h[offsets::QFORM_CODE..], 0);
    LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], 1);
    for r in 0..3 {
        LittleEndian::write_f32(&mut h[offsets::SROW_X + 16 * r + 4 * r..], pixdim[r + 1]);
    }
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");

    let n = nx * ny * nz;
    let mut out = h;
    out.reserve(n * channels * datatype.size());
    let file_order = |c: usize| {
        (0..nz).flat_map(move |k| (0..ny).flat_map(move |j| (0..nx).map(move |i| (c, (i * ny + j) * nz + k))))
    };
    match v {
        AnyVolume::Scalar(m) => {
            let mut buf = [0u8; 4];
            for c in 0..channels {
                let data = m.channels()[c].data();
                for (_, l) in file_order(c) {
                    LittleEndian::write_f32(&mut buf, data[l]);
                    out.extend_from_slice(&buf);
                }
            }
        }
        AnyVolume::Labels(lv) => {
            let data = lv.data();
            out.extend(file_order(0).map(|(_, l)| data[l]));
        }
    }
    out
}

/// Writes `.nii`, or gzip-compressed `.nii.gz` when the path ends in `.gz`.
pub fn write_nifti(path: impl AsRef<Path>, v: &AnyVolume) -> Result<()> {
    let path = path.as_ref();
    let dims = v.dims();
    if dims.iter().any(|&d| d > i16::MAX as usize) || v.num_channels() > i16::MAX as usize {
        return Err(Error::InvalidVolume(format!("dims {dims:?} exceed the NIfTI-1 limit")));
    }
    let bytes = encode_nifti(v);
    let gz = path.extension().is_some_and(|e| e == "gz");
    let result = if gz {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(&bytes).and_then(|_| enc.finish().map(|_| ()))
    } else {
        std::fs::write(path, &bytes)
    };
    result.map_err(|e| Error::io(path, e))
}
