//! Dense row-major tensors.
//!
//! Values are held as `f64`. A tensor tagged [`Precision::Single`] keeps every
//! stored value exactly representable as `f32`: constructors and operation
//! outputs round through `f32`, so single-precision pipelines see the same
//! quantization a native `f32` store would impose at operation boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Precision {
    Single,
    #[default]
    Double,
}

impl Precision {
    /// Bytes per element in the serialized form.
    pub fn width(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Precision::Single => 0,
            Precision::Double => 1,
        }
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Precision::Single),
            1 => Some(Precision::Double),
            _ => None,
        }
    }

    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::Single => v as f32 as f64,
            Precision::Double => v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "f32",
            Precision::Double => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" | "single" => Some(Precision::Single),
            "f64" | "double" => Some(Precision::Double),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    precision: Precision,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>, precision: Precision) -> Result<Self> {
        check_shape(shape)?;
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("Tensor::new", shape, &[data.len()]));
        }
        let mut t = Tensor { shape: shape.to_vec(), data, precision };
        t.quantize();
        Ok(t)
    }

    /// Double-precision constructor for tests and fixtures.
    pub fn from_f64(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::new(shape, data, Precision::Double)
    }

    pub fn zeros(shape: &[usize], precision: Precision) -> Result<Self> {
        check_shape(shape)?;
        let numel = shape.iter().product();
        Ok(Tensor { shape: shape.to_vec(), data: vec![0.0; numel], precision })
    }

    pub fn filled(shape: &[usize], value: f64, precision: Precision) -> Result<Self> {
        Self::new(shape, vec![value; shape.iter().product()], precision)
    }

    pub fn from_fn(shape: &[usize], precision: Precision, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        check_shape(shape)?;
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..numel {
            data.push(f(&idx));
            for axis in (0..shape.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        Self::new(shape, data, precision)
    }

    pub fn identity(n: usize, precision: Precision) -> Result<Self> {
        Self::from_fn(&[n, n], precision, |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Last extent.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    pub(crate) fn quantize(&mut self) {
        if self.precision == Precision::Single {
            for v in &mut self.data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        flat_index(&self.shape, index)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor { shape: shape.to_vec(), ..self })
    }

    /// Reinterpret at another precision. Narrowing rounds; widening is exact.
    pub fn to_precision(&self, precision: Precision) -> Tensor {
        let mut t = Tensor { shape: self.shape.clone(), data: self.data.clone(), precision };
        t.quantize();
        t
    }

    /// Build an output tensor sharing this tensor's precision.
    pub(crate) fn like(&self, shape: &[usize], data: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let mut t = Tensor { shape: shape.to_vec(), data, precision: self.precision };
        t.quantize();
        t
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::param("Tensor", format!("extents must be non-empty and >= 1, got {shape:?}")));
    }
    Ok(())
}

/// Row-major flat offset of a multi-index.
pub fn flat_index(shape: &[usize], index: &[usize]) -> Result<usize> {
    if index.len() != shape.len() || index.iter().zip(shape).any(|(i, s)| i >= s) {
        return Err(Error::dim("flat_index", shape, index));
    }
    Ok(index.iter().zip(shape).fold(0usize, |acc, (i, s)| acc * s + i))
}

/// Inverse of [`flat_index`].
pub fn unflatten(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0usize; shape.len()];
    for axis in (0..shape.len()).rev() {
        idx[axis] = flat % shape[axis];
        flat /= shape[axis];
    }
    idx
}
