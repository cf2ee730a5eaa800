//! Dense row-major f64 tensor, the only value type the network engine uses.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (= {} elements)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of `[i, j, k]` in a rank-3 tensor.
    #[inline]
    pub fn idx3(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 3);
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx3(i, j, k)]
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.idx3(i, j, k);
        self.data[idx] = value;
    }

    /// Flat offset of `[i, j, k, l]` in a rank-4 tensor.
    #[inline]
    pub fn idx4(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        debug_assert_eq!(self.shape.len(), 4);
        ((i * self.shape[1] + j) * self.shape[2] + k) * self.shape[3] + l
    }

    #[inline]
    pub fn at4(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[self.idx4(i, j, k, l)]
    }

    #[inline]
    pub fn set4(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) {
        let idx = self.idx4(i, j, k, l);
        self.data[idx] = value;
    }
}
