//! Dense row-major f32 tensor.

use crate::{NnError, Result};

/// Owned n-dimensional array. Shape is non-empty, every dim is >= 1, and
/// `data.len()` always equals the product of dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        validate_shape(&shape)?;
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(NnError::InvalidShape {
                shape,
                reason: format!("data length {} does not match volume {}", data.len(), numel),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        validate_shape(&shape)?;
        let numel = shape.iter().product();
        Ok(Tensor { shape, data: vec![0.0; numel] })
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Reinterprets the buffer under a new shape of equal volume.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(NnError::InvalidShape {
            shape: shape.to_vec(),
            reason: "rank zero".into(),
        });
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(NnError::InvalidShape {
            shape: shape.to_vec(),
            reason: "zero-sized dimension".into(),
        });
    }
    Ok(())
}
