//! Dense row-major tensors.
//!
//! 4-D tensors use the axis order (sample, channel, height, width).

use std::fmt::Debug;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};

/// Element type tag, with the on-disk code used by the FRST container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Real32,
    Real64,
    Complex64,
    Complex128,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Real32 => 0,
            DType::Real64 => 1,
            DType::Complex64 => 2,
            DType::Complex128 => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::Real32),
            1 => Ok(DType::Real64),
            2 => Ok(DType::Complex64),
            3 => Ok(DType::Complex128),
            other => Err(Error::UnknownDtype(other)),
        }
    }

    /// Size of one element in bytes.
    pub fn size(self) -> usize {
        match self {
            DType::Real32 => 4,
            DType::Real64 | DType::Complex64 => 8,
            DType::Complex128 => 16,
        }
    }
}

/// Scalar types a [`DenseTensor`] can hold.
pub trait Element: Copy + Default + PartialEq + Debug + Send + Sync + 'static {
    const DTYPE: DType;

    fn write_le(&self, out: &mut Vec<u8>);

    /// Decodes one element from exactly `DTYPE.size()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: DType = DType::Real32;

    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const DTYPE: DType = DType::Real64;

    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Element for Complex32 {
    const DTYPE: DType = DType::Complex64;

    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        Complex32::new(f32::read_le(&bytes[..4]), f32::read_le(&bytes[4..8]))
    }
}

impl Element for Complex64 {
    const DTYPE: DType = DType::Complex128;

    fn write_le(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        Complex64::new(f64::read_le(&bytes[..8]), f64::read_le(&bytes[8..16]))
    }
}

/// A rank-N array with an explicit shape and row-major contiguous storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Element> DenseTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {expected} values but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::default(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major offset of a coordinate, or `None` if it is out of bounds.
    pub fn offset(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut off = 0usize;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return None;
            }
            off = off * d + i;
        }
        Some(off)
    }

    pub fn get(&self, index: &[usize]) -> Option<T> {
        self.offset(index).map(|o| self.data[o])
    }

    pub fn set(&mut self, index: &[usize], value: T) -> Result<()> {
        let o = self
            .offset(index)
            .ok_or_else(|| Error::OutOfRange(format!("{index:?} in shape {:?}", self.shape)))?;
        self.data[o] = value;
        Ok(())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> DenseTensor<U> {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Number of values per entry of the leading axis.
    pub fn item_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    /// Slice of the `n`-th entry along the leading axis.
    pub fn item(&self, n: usize) -> &[T] {
        let step = self.item_len();
        &self.data[n * step..(n + 1) * step]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [T] {
        let step = self.item_len();
        &mut self.data[n * step..(n + 1) * step]
    }

    /// Gathers the given entries along the leading axis into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Self {
        let step = self.item_len();
        let mut data = Vec::with_capacity(indices.len() * step);
        for &i in indices {
            data.extend_from_slice(self.item(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self { shape, data }
    }

    /// Concatenates tensors along the leading axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("cannot stack an empty list"))?;
        let tail = &first.shape[1..];
        let mut data = Vec::new();
        let mut n = 0;
        for p in parts {
            if &p.shape[1..] != tail {
                return Err(Error::shape(format!(
                    "cannot stack {:?} with {:?}",
                    p.shape, first.shape
                )));
            }
            n += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = n;
        Ok(Self { shape, data })
    }

    /// `(n, c, h, w)` for a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a 4-D tensor, got {:?}",
                self.shape
            ))),
        }
    }
}

impl DenseTensor<f32> {
    pub fn to_f64(&self) -> DenseTensor<f64> {
        self.map(f64::from)
    }
}

impl DenseTensor<f64> {
    pub fn to_f32(&self) -> DenseTensor<f32> {
        self.map(|v| v as f32)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A tensor of any supported dtype, as produced by reading an FRST file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    Real32(DenseTensor<f32>),
    Real64(DenseTensor<f64>),
    Complex64(DenseTensor<Complex32>),
    Complex128(DenseTensor<Complex64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::Real32(_) => DType::Real32,
            AnyTensor::Real64(_) => DType::Real64,
            AnyTensor::Complex64(_) => DType::Complex64,
            AnyTensor::Complex128(_) => DType::Complex128,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::Real32(t) => t.shape(),
            AnyTensor::Real64(t) => t.shape(),
            AnyTensor::Complex64(t) => t.shape(),
            AnyTensor::Complex128(t) => t.shape(),
        }
    }

    /// Widens a real tensor to `f64`; complex tensors are rejected.
    pub fn into_real64(self) -> Result<DenseTensor<f64>> {
        match self {
            AnyTensor::Real32(t) => Ok(t.to_f64()),
            AnyTensor::Real64(t) => Ok(t),
            other => Err(Error::shape(format!(
                "expected a real tensor, found {:?}",
                other.dtype()
            ))),
        }
    }

    pub fn into_complex128(self) -> DenseTensor<Complex64> {
        match self {
            AnyTensor::Real32(t) => t.map(|v| Complex64::new(v as f64, 0.0)),
            AnyTensor::Real64(t) => t.map(|v| Complex64::new(v, 0.0)),
            AnyTensor::Complex64(t) => t.map(|v| Complex64::new(v.re as f64, v.im as f64)),
            AnyTensor::Complex128(t) => t,
        }
    }
}

macro_rules! any_from {
    ($variant:ident, $ty:ty) => {
        impl From<DenseTensor<$ty>> for AnyTensor {
            fn from(t: DenseTensor<$ty>) -> Self {
                AnyTensor::$variant(t)
            }
        }
    };
}

any_from!(Real32, f32);
any_from!(Real64, f64);
any_from!(Complex64, Complex32);
any_from!(Complex128, Complex64);
