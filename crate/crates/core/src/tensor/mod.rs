//! Dense tensors, the differentiation tape, Adam, and gradient checking.

mod adam;
mod gradcheck;
pub mod kernels;
mod params;
mod rng;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use params::{total_params, xavier_uniform, zeros_param, Bound, ParamMap};
pub use rng::{seeded_rng, stream_rng, Rng64};
pub use tape::{Tape, Var, LAYER_NORM_EPS};

use serde::{Deserialize, Serialize};

use crate::error::{dim, Result};

/// Row-major `f64` array. `grad`, when present, has the shape of `data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(dim("Tensor::new", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// A trainable tensor.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}
