//! Volume file I/O: a NIfTI-1 subset and the raw `P2SRAW1` format.
//!
//! Writers go through a temporary sibling file and a rename, so a failed
//! write never leaves a partial output at the destination.

pub mod nifti;
pub mod raw;
pub mod table;

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, FormatError, Result};
use crate::volume::{Mask3D, Volume4D};

pub use raw::RawDtype;
pub use table::{parse_numeric_table, read_gradient_table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    Nifti { gzip: bool },
    Raw,
}

impl VolumeFormat {
    /// Picks the format from the file name: `.nii`, `.nii.gz`, `.p2s`, `.raw`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".nii.gz") {
            Ok(VolumeFormat::Nifti { gzip: true })
        } else if name.ends_with(".nii") {
            Ok(VolumeFormat::Nifti { gzip: false })
        } else if name.ends_with(".p2s") || name.ends_with(".raw") {
            Ok(VolumeFormat::Raw)
        } else {
            Err(format_err(path, FormatError::UnsupportedExtension(name)))
        }
    }
}

fn format_err(path: &Path, source: FormatError) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        source,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .ok_or_else(|| io_err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp: PathBuf = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume4D> {
    let path = path.as_ref();
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Nifti { .. } => {}
        VolumeFormat::Raw => {
            return Err(format_err(
                path,
                FormatError::UnsupportedExtension(path.display().to_string()),
            ))
        }
    }
    nifti::decode(&read_bytes(path)?).map_err(|e| format_err(path, e))
}

/// Writes float32 NIfTI-1; gzip-compressed when the name ends in `.gz`.
pub fn write_nifti(vol: &Volume4D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gzip = match VolumeFormat::from_path(path)? {
        VolumeFormat::Nifti { gzip } => gzip,
        VolumeFormat::Raw => {
            return Err(format_err(
                path,
                FormatError::UnsupportedExtension(path.display().to_string()),
            ))
        }
    };
    let bytes = nifti::encode(vol);
    let bytes = if gzip {
        nifti::gzip(&bytes).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?
    } else {
        bytes
    };
    write_atomic(path, &bytes)
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Volume4D> {
    let path = path.as_ref();
    raw::decode(&read_bytes(path)?)
        .map(|(v, _)| v)
        .map_err(|e| format_err(path, e))
}

pub fn write_raw(vol: &Volume4D, path: impl AsRef<Path>, dtype: RawDtype) -> Result<()> {
    write_atomic(path.as_ref(), &raw::encode(vol, dtype))
}

/// Reads any supported format, chosen by extension.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume4D> {
    let path = path.as_ref();
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Nifti { .. } => read_nifti(path),
        VolumeFormat::Raw => read_raw(path),
    }
}

/// Writes any supported format, chosen by extension. Raw files are float64.
pub fn write_volume(vol: &Volume4D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match VolumeFormat::from_path(path)? {
        VolumeFormat::Nifti { .. } => write_nifti(vol, path),
        VolumeFormat::Raw => write_raw(vol, path, RawDtype::F64),
    }
}

/// Reads a mask volume: nonzero voxels of the first volume are selected.
pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask3D> {
    Ok(Mask3D::from_volume(&read_volume(path)?))
}

pub fn write_mask(mask: &Mask3D, path: impl AsRef<Path>) -> Result<()> {
    let [l, w, h] = mask.dims();
    let data = mask.flags().iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    write_volume(&Volume4D::new([l, w, h, 1], data)?, path)
}
