//! Reading and writing volumes, plus the synthetic phantom generator.

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::volume::{Dims, LabelVolume, MultiChannelVolume, Spacing};

pub mod nifti;
pub mod phantom;
pub mod svol;

pub use nifti::{read_nifti_header, read_nifti_labels, read_nifti_scalar, write_nifti, NiftiHeaderSubset};
pub use phantom::{generate_phantom, generate_phantom_mapped, PhantomSpec};
pub use svol::{decode_svol, encode_svol, read_svol, write_svol};

/// Either a multi-channel intensity volume or a label map.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Scalar(MultiChannelVolume),
    Labels(LabelVolume),
}

impl AnyVolume {
    pub fn dims(&self) -> Dims {
        match self {
            AnyVolume::Scalar(m) => m.dims(),
            AnyVolume::Labels(l) => l.dims(),
        }
    }

    pub fn spacing(&self) -> Spacing {
        match self {
            AnyVolume::Scalar(m) => m.spacing(),
            AnyVolume::Labels(l) => l.spacing(),
        }
    }

    pub fn num_channels(&self) -> usize {
        match self {
            AnyVolume::Scalar(m) => m.num_channels(),
            AnyVolume::Labels(_) => 1,
        }
    }

    /// Size of the raw voxel payload in bytes.
    pub fn byte_len(&self) -> usize {
        let n: usize = self.dims().iter().product();
        match self {
            AnyVolume::Scalar(m) => n * m.num_channels() * 4,
            AnyVolume::Labels(_) => n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Svol,
    Nifti,
}

impl FileFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".svol") {
            Ok(FileFormat::Svol)
        } else if name.ends_with(".nii") || name.ends_with(".nii.gz") {
            Ok(FileFormat::Nifti)
        } else {
            Err(Error::format(path, FormatError::UnknownExtension))
        }
    }
}

/// Reads intensities from `.svol`, `.nii` or `.nii.gz`.
pub fn read_scalar(path: impl AsRef<Path>) -> Result<MultiChannelVolume> {
    let path = path.as_ref();
    match FileFormat::from_path(path)? {
        FileFormat::Nifti => read_nifti_scalar(path),
        FileFormat::Svol => match read_svol(path)? {
            AnyVolume::Scalar(m) => Ok(m),
            AnyVolume::Labels(_) => Err(Error::format(
                path,
                FormatError::DimMismatch("expected intensities, found a label volume".into()),
            )),
        },
    }
}

/// Reads a label map from `.svol`, `.nii` or `.nii.gz`.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    match FileFormat::from_path(path)? {
        FileFormat::Nifti => read_nifti_labels(path),
        FileFormat::Svol => match read_svol(path)? {
            AnyVolume::Labels(l) => Ok(l),
            AnyVolume::Scalar(_) => Err(Error::format(
                path,
                FormatError::DimMismatch("expected a label volume, found intensities".into()),
            )),
        },
    }
}

/// Reads several single- or multi-channel files and stacks their channels.
pub fn read_channels<P: AsRef<Path>>(paths: &[P]) -> Result<MultiChannelVolume> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("no input channels given".into()));
    }
    let mut all = Vec::new();
    for p in paths {
        all.extend(read_scalar(p)?.into_channels());
    }
    MultiChannelVolume::new(all)
}

/// Writes according to the file extension.
pub fn write_volume(path: impl AsRef<Path>, v: &AnyVolume) -> Result<()> {
    let path = path.as_ref();
    match FileFormat::from_path(path)? {
        FileFormat::Svol => write_svol(path, v),
        FileFormat::Nifti => write_nifti(path, v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::ScalarVolume;

    #[test]
    fn dispatch_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let v = ScalarVolume::from_fn([3, 4, 5], Spacing::isotropic(2.0), |[i, j, k]| (i + 2 * j + 3 * k) as f32)
            .unwrap();
        let m = MultiChannelVolume::new(vec![v]).unwrap();
        for name in ["x.svol", "x.nii", "x.NII.GZ"] {
            let p = dir.path().join(name);
            write_volume(&p, &AnyVolume::Scalar(m.clone())).unwrap();
            assert_eq!(read_scalar(&p).unwrap(), m, "{name}");
            assert!(read_labels(&p).is_err() || name != "x.svol");
        }
        let bad = dir.path().join("x.raw");
        assert!(matches!(
            write_volume(&bad, &AnyVolume::Scalar(m)),
            Err(Error::Format { kind: FormatError::UnknownExtension, .. })
        ));
    }

    #[test]
    fn empty_dims_rejected() {
        assert!(ScalarVolume::from_vec([0, 2, 2], Spacing::default(), vec![]).is_err());
        assert!(LabelVolume::from_vec([2, 0, 2], Spacing::default(), vec![]).is_err());
    }

    #[test]
    fn channels_stack_across_files() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |c: f32| ScalarVolume::filled([2, 2, 2], Spacing::default(), c).unwrap();
        let a = dir.path().join("a.svol");
        let b = dir.path().join("b.nii");
        write_volume(&a, &AnyVolume::Scalar(MultiChannelVolume::new(vec![mk(1.0), mk(2.0)]).unwrap())).unwrap();
        write_volume(&b, &AnyVolume::Scalar(MultiChannelVolume::new(vec![mk(3.0)]).unwrap())).unwrap();
        let m = read_channels(&[a, b]).unwrap();
        assert_eq!(m.num_channels(), 3);
        assert_eq!(m.channel(2).unwrap().data()[0], 3.0);
    }
}
