//! Small parameterized layers shared by both block types.

use crate::error::{Error, Result};
use crate::ops::{gelu_scalar, layer_norm_raw, linear_raw, LN_EPS};
use crate::tensor::{Precision, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl LayerNormParams {
    pub fn identity(d: usize, precision: Precision) -> Self {
        LayerNormParams {
            gamma: Tensor::filled(&[d], 1.0, precision).expect("d >= 1"),
            beta: Tensor::zeros(&[d], precision).expect("d >= 1"),
        }
    }

    pub(crate) fn apply_raw(&self, x: &[f64]) -> Vec<f64> {
        layer_norm_raw(x, self.gamma.data(), self.beta.data(), LN_EPS)
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        crate::ops::layer_norm(x, &self.gamma, &self.beta, LN_EPS)
    }
}

/// Two linear maps around an exact GeLU: `gelu(x·Wa + ba)·Wb + bb`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    /// `[d, hidden]`
    pub w_a: Tensor,
    pub b_a: Tensor,
    /// `[hidden, d]`
    pub w_b: Tensor,
    pub b_b: Tensor,
}

impl FfnParams {
    pub fn dims(&self) -> (usize, usize) {
        (self.w_a.shape()[0], self.w_a.shape()[1])
    }

    pub(crate) fn apply_raw(&self, x: &[f64]) -> Vec<f64> {
        let (d, hidden) = self.dims();
        let mut h = linear_raw(x, self.w_a.data(), Some(self.b_a.data()), d, hidden);
        for v in &mut h {
            *v = gelu_scalar(*v);
        }
        linear_raw(&h, self.w_b.data(), Some(self.b_b.data()), hidden, d)
    }
}

/// Position-wise feed-forward over the last axis.
pub fn ffn(x: &Tensor, p: &FfnParams) -> Result<Tensor> {
    let (d, _) = p.dims();
    if x.last_dim() != d {
        return Err(Error::dim("ffn", x.shape(), p.w_a.shape()));
    }
    Ok(x.like(x.shape(), p.apply_raw(x.data())))
}
