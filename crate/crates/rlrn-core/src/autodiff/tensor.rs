use std::sync::Arc;

use crate::error::{Error, Result};

/// Dense row-major f32 tensor. Values are immutable after creation;
/// the optimizer mutates parameter tensors through [`Tensor::data_mut`],
/// which copies on write if the buffer is shared.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f32>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension {
                op: "tensor",
                detail: format!("zero-sized dimension in {shape:?}"),
            });
        }
        if data.len() != numel {
            return Err(Error::Dimension {
                op: "tensor",
                detail: format!("data length {} != product of shape {:?}", data.len(), shape),
            });
        }
        Ok(Self { shape, data: Arc::new(data), requires_grad: false })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: Arc::new(vec![0.0; numel]), requires_grad: false }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: Arc::new(vec![value; numel]), requires_grad: false }
    }

    pub fn scalar(value: f32) -> Self {
        Self { shape: vec![1], data: Arc::new(vec![value]), requires_grad: false }
    }

    /// Row vector `[1, n]`; the model passes features around in this form.
    pub fn row(data: Vec<f32>) -> Self {
        let n = data.len();
        Self { shape: vec![1, n], data: Arc::new(data), requires_grad: false }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable view of the buffer, cloning if it is shared.
    pub fn data_mut(&mut self) -> &mut [f32] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Bitwise equality of shape and contents.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}
