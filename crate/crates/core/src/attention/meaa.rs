//! Single-query additive attention with a scalar attention weight.
//!
//! For a query row `q` and token rows `x` (`n × d`):
//!
//! ```text
//! q*  = q · Wq
//! K   = x · Wk
//! α   = (q* · w_a) / √d                      scalar
//! q^g = α q*
//! O_i = ((q^g ⊙ K_i) · W1 + b1 + q*) · W2 + b2
//! out = mean_i O_i                           (pooled form)
//! ```
//!
//! Every step is linear in `n`; nothing of size `n × n` or an `n`-vector of
//! weights is ever formed.

use crate::error::{Error, Result};
use crate::ops::{linear_raw, matmul_raw, mean_rows};
use crate::probe::{produce, release};
use crate::tensor::Tensor;

use super::{add_rows, dot, hadamard_rows};

#[derive(Debug, Clone, PartialEq)]
pub struct MeaaParams {
    /// Learnable query `1 × d`.
    pub query: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    /// Attention vector, `d` entries.
    pub w_a: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl MeaaParams {
    pub fn dim(&self) -> usize {
        self.w_a.numel()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        for (name, t, want) in [
            ("query", &self.query, vec![1, d]),
            ("wq", &self.wq, vec![d, d]),
            ("wk", &self.wk, vec![d, d]),
            ("w1", &self.w1, vec![d, d]),
            ("w2", &self.w2, vec![d, d]),
        ] {
            if t.shape() != want {
                return Err(Error::Config(format!("meaa.{name} has shape {:?}, want {want:?}", t.shape())));
            }
        }
        if self.b1.numel() != d || self.b2.numel() != d {
            return Err(Error::Config("meaa biases must have d entries".into()));
        }
        Ok(())
    }
}

/// Borrowed raw view used by the hot path and the gradient code.
pub(crate) struct MeaaView<'a> {
    pub wq: &'a [f64],
    pub wk: &'a [f64],
    pub w_a: &'a [f64],
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
}

impl MeaaParams {
    pub(crate) fn view(&self) -> MeaaView<'_> {
        MeaaView {
            wq: self.wq.data(),
            wk: self.wk.data(),
            w_a: self.w_a.data(),
            w1: self.w1.data(),
            b1: self.b1.data(),
            w2: self.w2.data(),
            b2: self.b2.data(),
        }
    }
}

/// Intermediates of one evaluation.
pub(crate) struct MeaaTrace {
    pub q_star: Vec<f64>,
    pub keys: Vec<f64>,
    pub alpha: f64,
    pub q_global: Vec<f64>,
    pub fused: Vec<f64>,
    pub hidden: Vec<f64>,
    pub rows: Vec<f64>,
}

pub(crate) fn meaa_trace(q: &[f64], x: &[f64], p: &MeaaView<'_>) -> MeaaTrace {
    let d = q.len();
    let n = x.len() / d;

    let q_star = matmul_raw(q, p.wq, 1, d, d);
    produce(d);
    let keys = matmul_raw(x, p.wk, n, d, d);
    produce(n * d);
    let alpha = dot(&q_star, p.w_a) / (d as f64).sqrt();
    produce(1);
    let q_global = hadamard_rows(&[alpha], &q_star);
    produce(d);
    release(1);
    let fused = hadamard_rows(&q_global, &keys);
    produce(n * d);
    release(n * d + d);
    let mut hidden = linear_raw(&fused, p.w1, Some(p.b1), d, d);
    add_rows(&mut hidden, &q_star);
    produce(n * d);
    release(n * d + d);
    let rows = linear_raw(&hidden, p.w2, Some(p.b2), d, d);
    produce(n * d);
    release(n * d);
    MeaaTrace { q_star, keys, alpha, q_global, fused, hidden, rows }
}

/// Token-preserving form: the `n × d` rows before the final mean.
pub(crate) fn meaa_rows_raw(q: &[f64], x: &[f64], p: &MeaaView<'_>) -> Vec<f64> {
    meaa_trace(q, x, p).rows
}

pub(crate) fn meaa_pooled_raw(q: &[f64], x: &[f64], p: &MeaaView<'_>) -> Vec<f64> {
    let d = q.len();
    let n = x.len() / d;
    let rows = meaa_rows_raw(q, x, p);
    let pooled = mean_rows(&rows, d);
    produce(d);
    release(n * d);
    pooled
}

fn check_inputs(q: &Tensor, tokens: &Tensor, p: &MeaaParams) -> Result<usize> {
    let d = p.dim();
    if tokens.rank() != 2 || tokens.shape()[1] != d {
        return Err(Error::dim("meaa", tokens.shape(), &[0, d]));
    }
    if q.numel() != d {
        return Err(Error::dim("meaa", q.shape(), &[1, d]));
    }
    Ok(tokens.shape()[0])
}

/// Pooled attention output `1 × d` for an (already normalized) query and tokens.
pub fn meaa(q: &Tensor, tokens: &Tensor, p: &MeaaParams) -> Result<Tensor> {
    let d = p.dim();
    if tokens.numel() == 0 {
        return Err(Error::EmptySequence);
    }
    check_inputs(q, tokens, p)?;
    Ok(tokens.like(&[1, d], meaa_pooled_raw(q.data(), tokens.data(), &p.view())))
}

/// The scalar attention weight α for a query.
pub fn meaa_alpha(q: &Tensor, p: &MeaaParams) -> f64 {
    let d = p.dim();
    let q_star = matmul_raw(q.data(), p.wq.data(), 1, d, d);
    dot(&q_star, p.w_a.data()) / (d as f64).sqrt()
}

/// Reverse-mode gradients of `upstream · meaa(q, tokens)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeaaGrads {
    pub query: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub w_a: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub tokens: Tensor,
}

impl MeaaGrads {
    pub fn groups(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("q", &self.query),
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("w_a", &self.w_a),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("tokens", &self.tokens),
        ]
    }
}

fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

/// `v · Wᵀ` for a `d × d` matrix stored `[in, out]`.
fn times_transpose(v: &[f64], w: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| {
            let row = &w[i * d..(i + 1) * d];
            row.iter().zip(v).map(|(a, b)| a * b).sum()
        })
        .collect()
}

fn column_sums(x: &[f64], d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for r in x.chunks(d) {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc
}

/// Analytic gradients of the pooled output against every parameter and the tokens.
///
/// Because the output is a mean of rows and every row shares the same query
/// path, the upstream signal reaching each row is identical; the gradients of
/// the row-wise maps reduce to outer products with column sums.
pub fn meaa_grad(q: &Tensor, tokens: &Tensor, p: &MeaaParams, upstream: &Tensor) -> Result<MeaaGrads> {
    let n = check_inputs(q, tokens, p)?;
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let d = p.dim();
    if upstream.numel() != d {
        return Err(Error::dim("meaa_grad", upstream.shape(), &[1, d]));
    }
    let v = p.view();
    let tr = meaa_trace(q.data(), tokens.data(), &v);
    let u = upstream.data();
    let nf = n as f64;
    let sqrt_d = (d as f64).sqrt();

    // dO_i = u / n
    let dw2 = outer(&column_sums(&tr.hidden, d), &u.iter().map(|x| x / nf).collect::<Vec<_>>());
    let db2 = u.to_vec();
    // dH_i = (u / n) W2ᵀ, identical across rows
    let h: Vec<f64> = times_transpose(u, v.w2).iter().map(|x| x / nf).collect();
    let dw1 = outer(&column_sums(&tr.fused, d), &h);
    let db1: Vec<f64> = h.iter().map(|x| x * nf).collect();
    // dF_i = dH_i W1ᵀ
    let f = times_transpose(&h, v.w1);
    let ksum = column_sums(&tr.keys, d);
    let dq_global: Vec<f64> = f.iter().zip(&ksum).map(|(a, b)| a * b).collect();
    let dk_row: Vec<f64> = f.iter().zip(&tr.q_global).map(|(a, b)| a * b).collect();
    let dalpha: f64 = dq_global.iter().zip(&tr.q_star).map(|(a, b)| a * b).sum();
    let dq_star: Vec<f64> = (0..d).map(|c| nf * h[c] + tr.alpha * dq_global[c] + dalpha * v.w_a[c] / sqrt_d).collect();
    let dw_a: Vec<f64> = tr.q_star.iter().map(|x| dalpha * x / sqrt_d).collect();
    let dwk = outer(&column_sums(tokens.data(), d), &dk_row);
    let dx_row = times_transpose(&dk_row, v.wk);
    let dx: Vec<f64> = (0..n).flat_map(|_| dx_row.iter().copied()).collect();
    let dwq = outer(q.data(), &dq_star);
    let dq = times_transpose(&dq_star, v.wq);

    let t = |shape: &[usize], data: Vec<f64>| Tensor::from_f64(shape, data);
    Ok(MeaaGrads {
        query: t(&[1, d], dq)?,
        wq: t(&[d, d], dwq)?,
        wk: t(&[d, d], dwk)?,
        w_a: t(&[d], dw_a)?,
        w1: t(&[d, d], dw1)?,
        b1: t(&[d], db1)?,
        w2: t(&[d, d], dw2)?,
        b2: t(&[d], db2)?,
        tokens: t(&[n, d], dx)?,
    })
}
