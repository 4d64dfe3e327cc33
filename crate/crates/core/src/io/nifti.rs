//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reading and float32 writing.
//!
//! Supported on read: int16, uint16, float32, float64 data in either byte
//! order, 3D or 4D. Extensions after the header are skipped. The orientation
//! fields are carried through untouched.

use std::io::{Read, Write};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::FormatError;
use crate::volume::{Orientation, Volume4D};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const DEFAULT_VOX_OFFSET: usize = 352;

const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_UINT16: i16 = 512;

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
    pub const QUATERN_B: usize = 256;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Clone, Copy)]
struct Endian {
    little: bool,
}

impl Endian {
    fn i16(self, b: &[u8], at: usize) -> i16 {
        let a = [b[at], b[at + 1]];
        if self.little {
            i16::from_le_bytes(a)
        } else {
            i16::from_be_bytes(a)
        }
    }

    fn u16(self, b: &[u8], at: usize) -> u16 {
        self.i16(b, at) as u16
    }

    fn i32(self, b: &[u8], at: usize) -> i32 {
        let a = [b[at], b[at + 1], b[at + 2], b[at + 3]];
        if self.little {
            i32::from_le_bytes(a)
        } else {
            i32::from_be_bytes(a)
        }
    }

    fn f32(self, b: &[u8], at: usize) -> f32 {
        f32::from_bits(self.i32(b, at) as u32)
    }

    fn f64(self, b: &[u8], at: usize) -> f64 {
        let mut a = [0u8; 8];
        a.copy_from_slice(&b[at..at + 8]);
        if self.little {
            f64::from_le_bytes(a)
        } else {
            f64::from_be_bytes(a)
        }
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

/// Decodes a NIfTI-1 image from raw file bytes (gzip detected by magic).
pub fn decode(bytes: &[u8]) -> Result<Volume4D, FormatError> {
    let inflated;
    let bytes = if is_gzip(bytes) {
        let mut out = Vec::new();
        MultiGzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| FormatError::Gzip(e.to_string()))?;
        inflated = out;
        &inflated[..]
    } else {
        bytes
    };

    if bytes.len() < HEADER_SIZE {
        return Err(FormatError::TruncatedHeader {
            expected: HEADER_SIZE,
            actual: bytes.len(),
        });
    }
    let le = Endian { little: true };
    let be = Endian { little: false };
    let e = if le.i32(bytes, offsets::SIZEOF_HDR) == HEADER_SIZE as i32 {
        le
    } else if be.i32(bytes, offsets::SIZEOF_HDR) == HEADER_SIZE as i32 {
        be
    } else {
        return Err(FormatError::BadHeaderSize(le.i32(bytes, offsets::SIZEOF_HDR)));
    };
    let magic = &bytes[offsets::MAGIC..offsets::MAGIC + 4];
    if magic != b"n+1\0" {
        return Err(FormatError::BadMagic(magic.to_vec()));
    }

    let ndim = e.i16(bytes, offsets::DIM) as i64;
    if !(1..=7).contains(&ndim) {
        return Err(FormatError::InvalidDimension { axis: 0, value: ndim });
    }
    if ndim > 4 {
        return Err(FormatError::UnsupportedDimensionality(ndim));
    }
    let mut dims = [1usize; 4];
    for (axis, d) in dims.iter_mut().enumerate().take(ndim as usize) {
        let v = e.i16(bytes, offsets::DIM + 2 * (axis + 1)) as i64;
        if v < 1 {
            return Err(FormatError::InvalidDimension { axis: axis + 1, value: v });
        }
        *d = v as usize;
    }

    let datatype = e.i16(bytes, offsets::DATATYPE);
    let width = match datatype {
        DT_INT16 | DT_UINT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(FormatError::UnsupportedDatatype(other as i32)),
    };
    let bitpix = e.i16(bytes, offsets::BITPIX);
    if bitpix as usize != width * 8 {
        return Err(FormatError::UnsupportedDatatype(datatype as i32));
    }

    let vox_offset = e.f32(bytes, offsets::VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32 && vox_offset.fract() == 0.0) {
        return Err(FormatError::BadVoxOffset(vox_offset));
    }
    let start = vox_offset as usize;
    let count = dims.iter().product::<usize>();
    let expected = start + count * width;
    if bytes.len() < expected {
        return Err(FormatError::TruncatedData {
            expected,
            actual: bytes.len(),
        });
    }

    let slope = e.f32(bytes, offsets::SCL_SLOPE);
    let inter = e.f32(bytes, offsets::SCL_INTER);
    let scale = (slope != 0.0 && slope.is_finite()).then(|| (slope as f64, if inter.is_finite() { inter as f64 } else { 0.0 }));

    let blob = &bytes[start..expected];
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        let at = i * width;
        let raw = match datatype {
            DT_INT16 => e.i16(blob, at) as f64,
            DT_UINT16 => e.u16(blob, at) as f64,
            DT_FLOAT32 => e.f32(blob, at) as f64,
            _ => e.f64(blob, at),
        };
        let v = match scale {
            Some((s, b)) => raw * s + b,
            None => raw,
        };
        if !v.is_finite() {
            return Err(FormatError::NonFiniteValue(i));
        }
        data.push(v);
    }

    let pix = |i: usize| e.f32(bytes, offsets::PIXDIM + 4 * i);
    let spacing = [pix(1), pix(2), pix(3)].map(|v| if v.is_finite() && v > 0.0 { v as f64 } else { 1.0 });
    let mut quatern = [0f32; 6];
    for (i, q) in quatern.iter_mut().enumerate() {
        *q = e.f32(bytes, offsets::QUATERN_B + 4 * i);
    }
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = e.f32(bytes, offsets::SROW_X + 16 * r + 4 * c);
        }
    }
    let qform_code = e.i16(bytes, offsets::QFORM_CODE);
    let sform_code = e.i16(bytes, offsets::SFORM_CODE);
    let orientation = (qform_code > 0 || sform_code > 0).then(|| Orientation {
        qform_code,
        sform_code,
        quatern,
        qfac: if pix(0) < 0.0 { -1.0 } else { 1.0 },
        srow,
    });

    let vol = Volume4D::new(dims, data).map_err(|_| FormatError::TruncatedData {
        expected,
        actual: bytes.len(),
    })?;
    Ok(vol.with_spacing(spacing).with_orientation(orientation))
}

/// Encodes a float32 little-endian NIfTI-1 image with `vox_offset` 352.
pub fn encode(vol: &Volume4D) -> Vec<u8> {
    let mut h = vec![0u8; DEFAULT_VOX_OFFSET];
    let put_i16 = |h: &mut [u8], at: usize, v: i16| h[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_i32 = |h: &mut [u8], at: usize, v: i32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], at: usize, v: f32| h[at..at + 4].copy_from_slice(&v.to_le_bytes());

    put_i32(&mut h, offsets::SIZEOF_HDR, HEADER_SIZE as i32);
    let dims = vol.dims();
    let ndim = if dims[3] > 1 { 4 } else { 3 };
    put_i16(&mut h, offsets::DIM, ndim);
    for (i, &d) in dims.iter().enumerate() {
        put_i16(&mut h, offsets::DIM + 2 * (i + 1), d as i16);
    }
    for i in 5..8 {
        put_i16(&mut h, offsets::DIM + 2 * i, 1);
    }
    put_i16(&mut h, offsets::DATATYPE, DT_FLOAT32);
    put_i16(&mut h, offsets::BITPIX, 32);
    let qfac = vol.orientation().map_or(1.0, |o| o.qfac);
    put_f32(&mut h, offsets::PIXDIM, qfac);
    for (i, s) in vol.spacing().iter().enumerate() {
        put_f32(&mut h, offsets::PIXDIM + 4 * (i + 1), *s as f32);
    }
    put_f32(&mut h, offsets::PIXDIM + 16, 1.0);
    put_f32(&mut h, offsets::VOX_OFFSET, DEFAULT_VOX_OFFSET as f32);
    put_f32(&mut h, offsets::SCL_SLOPE, 1.0);
    put_f32(&mut h, offsets::SCL_INTER, 0.0);
    // mm and seconds
    h[offsets::XYZT_UNITS] = 2 | 8;
    if let Some(o) = vol.orientation() {
        put_i16(&mut h, offsets::QFORM_CODE, o.qform_code);
        put_i16(&mut h, offsets::SFORM_CODE, o.sform_code);
        for (i, q) in o.quatern.iter().enumerate() {
            put_f32(&mut h, offsets::QUATERN_B + 4 * i, *q);
        }
        for (r, row) in o.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                put_f32(&mut h, offsets::SROW_X + 16 * r + 4 * c, *v);
            }
        }
    }
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");

    h.reserve(vol.data().len() * 4);
    for v in vol.data() {
        h.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    h
}

pub(crate) fn gzip(bytes: &[u8]) -> std::io::Result<Vec<u8>> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes)?;
    enc.finish()
}
