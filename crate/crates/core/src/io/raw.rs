//! Bit-exact raw volume format.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 7    | ASCII magic `P2SRAW1`                   |
//! | 7      | 16   | dims l, w, h, n as u32                  |
//! | 23     | 4    | dtype code as u32 (1 = f32, 2 = f64)    |
//! | 27     | 12   | spacing dx, dy, dz as f32               |
//! | 39     | ...  | samples in canonical order (x fastest)  |

use crate::error::FormatError;
use crate::volume::Volume4D;

pub const MAGIC: &[u8; 7] = b"P2SRAW1";
pub const HEADER_LEN: usize = 39;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RawDtype {
    F32,
    #[default]
    F64,
}

impl RawDtype {
    pub fn code(self) -> u32 {
        match self {
            RawDtype::F32 => 1,
            RawDtype::F64 => 2,
        }
    }

    pub fn size(self) -> usize {
        match self {
            RawDtype::F32 => 4,
            RawDtype::F64 => 8,
        }
    }

    fn from_code(code: u32) -> Result<Self, FormatError> {
        match code {
            1 => Ok(RawDtype::F32),
            2 => Ok(RawDtype::F64),
            other => Err(FormatError::UnsupportedDatatype(other as i32)),
        }
    }
}

pub fn encode(vol: &Volume4D, dtype: RawDtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + vol.data().len() * dtype.size());
    out.extend_from_slice(MAGIC);
    for d in vol.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&dtype.code().to_le_bytes());
    for s in vol.spacing() {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    match dtype {
        RawDtype::F32 => vol.data().iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
        RawDtype::F64 => vol.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Volume4D, RawDtype), FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::TruncatedHeader {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..7] != MAGIC {
        return Err(FormatError::BadMagic(bytes[..7].to_vec()));
    }
    let u32_at = |at: usize| u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]);
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let v = u32_at(7 + 4 * i);
        if v == 0 {
            return Err(FormatError::InvalidDimension { axis: i + 1, value: 0 });
        }
        *d = v as usize;
    }
    let dtype = RawDtype::from_code(u32_at(23))?;
    let spacing = [0, 1, 2].map(|i| f32::from_bits(u32_at(27 + 4 * i)) as f64);
    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    let expected = count
        .and_then(|c| c.checked_mul(dtype.size()))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or(FormatError::InvalidDimension { axis: 0, value: i64::MAX })?;
    if bytes.len() != expected {
        return Err(FormatError::TruncatedData {
            expected,
            actual: bytes.len(),
        });
    }
    let blob = &bytes[HEADER_LEN..];
    let data: Vec<f64> = match dtype {
        RawDtype::F32 => blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        RawDtype::F64 => blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    };
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(FormatError::NonFiniteValue(pos));
    }
    let vol = Volume4D::new(dims, data).map_err(|_| FormatError::TruncatedData {
        expected,
        actual: bytes.len(),
    })?;
    Ok((vol.with_spacing(spacing), dtype))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let vol = Volume4D::new([1, 1, 1, 2], vec![1.0, -2.0]).unwrap().with_spacing([1.0, 2.0, 3.0]);
        let b = encode(&vol, RawDtype::F32);
        assert_eq!(b.len(), HEADER_LEN + 8);
        assert_eq!(&b[..7], b"P2SRAW1");
        assert_eq!(&b[19..23], &2u32.to_le_bytes());
        assert_eq!(&b[23..27], &1u32.to_le_bytes());
        assert_eq!(&b[31..35], &2f32.to_le_bytes());
        assert_eq!(&b[39..43], &1f32.to_le_bytes());
    }

    #[test]
    fn truncation_names_byte_counts() {
        let vol = Volume4D::new([2, 2, 1, 2], vec![0.5; 8]).unwrap();
        let b = encode(&vol, RawDtype::F64);
        let err = decode(&b[..b.len() - 3]).unwrap_err();
        assert_eq!(
            err,
            FormatError::TruncatedData {
                expected: 39 + 64,
                actual: 39 + 61
            }
        );
        assert!(err.to_string().contains("103") && err.to_string().contains("100"));
    }

    #[test]
    fn rejects_bad_magic_and_dtype() {
        let vol = Volume4D::new([1, 1, 1, 1], vec![0.5]).unwrap();
        let mut b = encode(&vol, RawDtype::F64);
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(FormatError::BadMagic(_))));
        let mut b = encode(&vol, RawDtype::F64);
        b[23] = 9;
        assert_eq!(decode(&b).unwrap_err(), FormatError::UnsupportedDatatype(9));
    }
}
