//! SVOL: a minimal little-endian volume container.
//!
//! ```text
//! magic    "SVOL"              4 bytes
//! version  u32 = 1
//! dtype    u8   0 = f32, 1 = u8 labels
//! ndim     u8   3 or 4
//! dims     u32 × ndim          (nx, ny, nz) or (channels, nx, ny, nz)
//! spacing  f64 × 3             mm
//! data     row-major, last axis fastest
//! ```

use std::io::Cursor;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use super::AnyVolume;
use crate::error::{Error, FormatError, Result};
use crate::volume::{LabelVolume, MultiChannelVolume, ScalarVolume, Spacing, Volume};

pub const MAGIC: &[u8; 4] = b"SVOL";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_U8: u8 = 1;

pub fn encode_svol(v: &AnyVolume) -> Vec<u8> {
    let (dtype, dims, spacing): (u8, Vec<usize>, Spacing) = match v {
        AnyVolume::Scalar(m) if m.num_channels() == 1 => (DTYPE_F32, m.dims().to_vec(), m.spacing()),
        AnyVolume::Scalar(m) => {
            let mut d = vec![m.num_channels()];
            d.extend(m.dims());
            (DTYPE_F32, d, m.spacing())
        }
        AnyVolume::Labels(l) => (DTYPE_U8, l.dims().to_vec(), l.spacing()),
    };
    let mut out = Vec::with_capacity(64 + v.byte_len());
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.push(dtype);
    out.push(dims.len() as u8);
    for d in &dims {
        out.write_u32::<LittleEndian>(*d as u32).unwrap();
    }
    for s in spacing.as_array() {
        out.write_f64::<LittleEndian>(s).unwrap();
    }
    match v {
        AnyVolume::Scalar(m) => {
            for c in m.channels() {
                for &x in c.data() {
                    out.write_f32::<LittleEndian>(x).unwrap();
                }
            }
        }
        AnyVolume::Labels(l) => out.extend_from_slice(l.data()),
    }
    out
}

pub fn decode_svol(bytes: &[u8]) -> std::result::Result<AnyVolume, FormatError> {
    const FIXED: usize = 10;
    let need = |expected: usize| {
        if bytes.len() < expected {
            Err(FormatError::Truncated {
                expected,
                found: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(4)?;
    if &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic(bytes[..4].to_vec()));
    }
    need(FIXED)?;
    let mut cur = Cursor::new(&bytes[4..]);
    let version = cur.read_u32::<LittleEndian>().unwrap();
    if version != VERSION {
        return Err(FormatError::VersionMismatch(version));
    }
    let dtype = cur.read_u8().unwrap();
    let ndim = cur.read_u8().unwrap() as usize;
    if ndim != 3 && ndim != 4 {
        return Err(FormatError::BadHeader(format!("ndim must be 3 or 4, got {ndim}")));
    }
    let header_len = FIXED + 4 * ndim + 24;
    need(header_len)?;
    let dims: Vec<usize> = (0..ndim)
        .map(|_| cur.read_u32::<LittleEndian>().unwrap() as usize)
        .collect();
    if dims.contains(&0) {
        return Err(FormatError::BadHeader(format!("dims must be positive, got {dims:?}")));
    }
    let mut sp = [0f64; 3];
    for s in &mut sp {
        *s = cur.read_f64::<LittleEndian>().unwrap();
    }
    let spacing = Spacing::new(sp[0], sp[1], sp[2])
        .map_err(|e| FormatError::BadHeader(e.to_string()))?;
    let (channels, vol_dims) = if ndim == 4 {
        (dims[0], [dims[1], dims[2], dims[3]])
    } else {
        (1, [dims[0], dims[1], dims[2]])
    };
    let n = vol_dims.iter().product::<usize>();
    let elem = match dtype {
        DTYPE_F32 => 4,
        DTYPE_U8 => 1,
        other => return Err(FormatError::UnsupportedDatatype(other as i16)),
    };
    let payload = &bytes[header_len..];
    let expected = n * channels * elem;
    if payload.len() != expected {
        return Err(FormatError::LengthMismatch {
            expected,
            found: payload.len(),
        });
    }
    let bad = |e: Error| FormatError::BadHeader(e.to_string());
    match dtype {
        DTYPE_F32 => {
            let mut vols = Vec::with_capacity(channels);
            for chunk in payload.chunks_exact(n * 4) {
                let mut data = vec![0f32; n];
                LittleEndian::read_f32_into(chunk, &mut data);
                vols.push(ScalarVolume::from_vec(vol_dims, spacing, data).map_err(bad)?);
            }
            Ok(AnyVolume::Scalar(MultiChannelVolume::new(vols).map_err(bad)?))
        }
        _ => {
            if channels != 1 {
                return Err(FormatError::BadHeader("label volumes must be 3D".into()));
            }
            let vol = Volume::from_vec(vol_dims, spacing, payload.to_vec()).map_err(bad)?;
            LabelVolume::new(vol)
                .map(AnyVolume::Labels)
                .map_err(|e| FormatError::InvalidLabels(e.to_string()))
        }
    }
}

pub fn write_svol(path: impl AsRef<Path>, v: &AnyVolume) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_svol(v)).map_err(|e| Error::io(path, e))
}

pub fn read_svol(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_svol(&bytes).map_err(|k| Error::format(path, k))
}
