//! The FRST tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                            |
//! |--------------|----------------------------------------------------|
//! | 4            | magic `FRST`                                       |
//! | 1            | format version, `0x01`                             |
//! | 1            | dtype code (0 real32, 1 real64, 2 complex64, 3 complex128) |
//! | 1            | rank `r`                                           |
//! | 8·r          | dimension sizes as `u64`                           |
//! | rest         | row-major payload, IEEE-754; complex as interleaved re, im |

use std::fs;
use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::tensor::{AnyTensor, DType, DenseTensor, Element};

pub const MAGIC: [u8; 4] = *b"FRST";
pub const VERSION: u8 = 0x01;

pub fn encode<T: Element>(t: &DenseTensor<T>) -> Result<Vec<u8>> {
    if t.rank() > 255 {
        return Err(Error::RankTooLarge(t.rank()));
    }
    if let Some(axis) = t.shape().iter().position(|&d| d == 0) {
        return Err(Error::ZeroDimension { axis });
    }
    let mut out = Vec::with_capacity(7 + 8 * t.rank() + t.len() * T::DTYPE.size());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 7 {
        return Err(Error::Truncated {
            expected: 7,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    if bytes[4] != VERSION {
        return Err(Error::BadVersion(bytes[4]));
    }
    let dtype = DType::from_code(bytes[5])?;
    let rank = bytes[6] as usize;
    let header = 7 + 8 * rank;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            found: bytes.len(),
        });
    }
    let shape: Vec<usize> = bytes[7..header]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    if let Some(axis) = shape.iter().position(|&d| d == 0) {
        return Err(Error::ZeroDimension { axis });
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::shape(format!("shape {shape:?} overflows")))?;
    let expected = count
        .checked_mul(dtype.size())
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| Error::shape(format!("shape {shape:?} overflows")))?;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::shape(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[header..];
    Ok(match dtype {
        DType::Real32 => AnyTensor::Real32(decode_payload::<f32>(shape, payload)?),
        DType::Real64 => AnyTensor::Real64(decode_payload::<f64>(shape, payload)?),
        DType::Complex64 => AnyTensor::Complex64(decode_payload::<Complex32>(shape, payload)?),
        DType::Complex128 => AnyTensor::Complex128(decode_payload::<Complex64>(shape, payload)?),
    })
}

fn decode_payload<T: Element>(shape: Vec<usize>, payload: &[u8]) -> Result<DenseTensor<T>> {
    let data = payload
        .chunks_exact(T::DTYPE.size())
        .map(T::read_le)
        .collect();
    DenseTensor::new(shape, data)
}

/// Writes `t` to `path` in the FRST format.
pub fn tensor_write<T: Element>(t: &DenseTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Reads an FRST file, validating magic, version, dtype and payload length.
pub fn tensor_read(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode(&bytes)
}

/// Reads a real tensor of either precision as `f64`.
pub fn read_real(path: impl AsRef<Path>) -> Result<DenseTensor<f64>> {
    tensor_read(path)?.into_real64()
}
