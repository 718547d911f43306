//! Additive attention with a full query matrix.
//!
//! ```text
//! Q = x · Wq,  K = x · Wk                   n × d each
//! a = softmax_n(Q · w_a / √d)               n weights
//! g = Σ_i a_i Q_i                           global query, d
//! O_i = ((g ⊙ K_i) · W1 + b1 + Q_i) · W2 + b2
//! ```
//!
//! The pooled form averages `O` over rows so it can stand in for the
//! single-query variant in the global block.

use crate::error::{Error, Result};
use crate::ops::{linear_raw, matmul_raw, mean_rows, softmax_in_place};
use crate::probe::{produce, record_macs, release};
use crate::tensor::Tensor;

use super::{add_rows, hadamard_rows};

#[derive(Debug, Clone, PartialEq)]
pub struct EaaParams {
    pub wq: Tensor,
    pub wk: Tensor,
    pub w_a: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl EaaParams {
    pub fn dim(&self) -> usize {
        self.w_a.numel()
    }
}

pub(crate) fn eaa_rows_raw(x: &[f64], d: usize, p: &EaaParams) -> Vec<f64> {
    let n = x.len() / d;
    let q = matmul_raw(x, p.wq.data(), n, d, d);
    produce(n * d);
    let k = matmul_raw(x, p.wk.data(), n, d, d);
    produce(n * d);

    let scale = 1.0 / (d as f64).sqrt();
    let w_a = p.w_a.data();
    let mut weights: Vec<f64> =
        q.chunks(d).map(|row| row.iter().zip(w_a).map(|(a, b)| a * b).sum::<f64>() * scale).collect();
    record_macs((n * d) as u64);
    produce(n);
    softmax_in_place(&mut weights);

    let mut global = vec![0.0; d];
    for (row, a) in q.chunks(d).zip(&weights) {
        for (g, v) in global.iter_mut().zip(row) {
            *g += a * v;
        }
    }
    record_macs((n * d) as u64);
    produce(d);
    release(n);

    let fused = hadamard_rows(&global, &k);
    produce(n * d);
    release(n * d + d);
    let mut hidden = linear_raw(&fused, p.w1.data(), Some(p.b1.data()), d, d);
    add_rows(&mut hidden, &q);
    produce(n * d);
    release(2 * n * d);
    let rows = linear_raw(&hidden, p.w2.data(), Some(p.b2.data()), d, d);
    produce(n * d);
    release(n * d);
    rows
}

pub(crate) fn eaa_pooled_raw(x: &[f64], d: usize, p: &EaaParams) -> Vec<f64> {
    let n = x.len() / d;
    let rows = eaa_rows_raw(x, d, p);
    let pooled = mean_rows(&rows, d);
    produce(d);
    release(n * d);
    pooled
}

/// Pooled `1 × d` output over `n × d` tokens.
pub fn eaa_original(tokens: &Tensor, p: &EaaParams) -> Result<Tensor> {
    let d = p.dim();
    if tokens.rank() != 2 || tokens.shape()[1] != d {
        return Err(Error::dim("eaa_original", tokens.shape(), &[0, d]));
    }
    Ok(tokens.like(&[1, d], eaa_pooled_raw(tokens.data(), d, p)))
}

/// Per-token attention weights `a` (sum to one).
pub fn eaa_weights(tokens: &Tensor, p: &EaaParams) -> Vec<f64> {
    let d = p.dim();
    let n = tokens.shape()[0];
    let q = matmul_raw(tokens.data(), p.wq.data(), n, d, d);
    let mut w: Vec<f64> = q
        .chunks(d)
        .map(|row| row.iter().zip(p.w_a.data()).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt())
        .collect();
    softmax_in_place(&mut w);
    w
}
