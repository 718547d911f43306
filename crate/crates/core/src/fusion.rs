//! Gated blend of the global token with the pooled class token, and the
//! classification projection.

use crate::error::{Error, Result};
use crate::ops::matmul_raw;
use crate::probe::record_macs;
use crate::tensor::Tensor;
use crate::tokens::TokenField;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// Gate logits `[1, d]`.
    pub beta: Tensor,
    /// `[d, num_classes]`
    pub proj: Tensor,
    /// `[num_classes]`
    pub bias: Tensor,
}

impl FusionParams {
    pub fn num_classes(&self) -> usize {
        self.bias.numel()
    }
}

/// Temporal mean of the per-frame class tokens, `1 × d`.
pub fn extract_class_token(v3: &TokenField) -> Tensor {
    let g = v3.grid();
    let mut acc = vec![0.0; g.dim];
    for t in 0..g.frames {
        for (a, v) in acc.iter_mut().zip(v3.class_token(t)) {
            *a += v;
        }
    }
    let inv = 1.0 / g.frames as f64;
    v3.tensor().like(&[1, g.dim], acc.into_iter().map(|v| v * inv).collect())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_rows(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.numel() != b.numel() {
        return Err(Error::dim(op, a.shape(), b.shape()));
    }
    Ok(())
}

/// `(1 − σ(β)) ⊙ v6 + σ(β) ⊙ v3c`.
pub fn fuse(v6: &Tensor, v3c: &Tensor, beta: &Tensor) -> Result<Tensor> {
    check_rows("fuse", v6, v3c)?;
    check_rows("fuse", v6, beta)?;
    let out = v6
        .data()
        .iter()
        .zip(v3c.data())
        .zip(beta.data())
        .map(|((&a, &b), &g)| {
            let s = sigmoid(g);
            // Rounding can push the blend a hair outside [a, b]; clamp it back.
            ((1.0 - s) * a + s * b).clamp(a.min(b), a.max(b))
        })
        .collect();
    // Two elementwise products per entry.
    record_macs(2 * v6.numel() as u64);
    Ok(v6.like(&[1, v6.numel()], out))
}

/// Logits `z · proj + bias`.
pub fn classify(z: &Tensor, p: &FusionParams) -> Result<Tensor> {
    let d = z.numel();
    let c = p.num_classes();
    if p.proj.shape() != [d, c] {
        return Err(Error::dim("classify", z.shape(), p.proj.shape()));
    }
    let mut logits = matmul_raw(z.data(), p.proj.data(), 1, d, c);
    for (l, b) in logits.iter_mut().zip(p.bias.data()) {
        *l += b;
    }
    Ok(z.like(&[c], logits))
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Gradient of `upstream · fuse(v6, v3c, beta)` with respect to `beta`.
pub fn fuse_grad_beta(v6: &Tensor, v3c: &Tensor, beta: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    check_rows("fuse_grad_beta", v6, v3c)?;
    check_rows("fuse_grad_beta", v6, beta)?;
    check_rows("fuse_grad_beta", v6, upstream)?;
    let g = (0..v6.numel())
        .map(|i| {
            let s = sigmoid(beta.data()[i]);
            upstream.data()[i] * (v3c.data()[i] - v6.data()[i]) * s * (1.0 - s)
        })
        .collect();
    Tensor::from_f64(&[1, v6.numel()], g)
}

/// Gradients of `upstream · classify(z)` with respect to `(proj, bias)`.
pub fn classify_grad(z: &Tensor, p: &FusionParams, upstream: &Tensor) -> Result<(Tensor, Tensor)> {
    let d = z.numel();
    let c = p.num_classes();
    if upstream.numel() != c {
        return Err(Error::dim("classify_grad", upstream.shape(), &[c]));
    }
    let dproj = (0..d * c).map(|k| z.data()[k / c] * upstream.data()[k % c]).collect();
    Ok((Tensor::from_f64(&[d, c], dproj)?, Tensor::from_f64(&[c], upstream.data().to_vec())?))
}
