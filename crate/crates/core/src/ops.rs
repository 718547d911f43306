//! Dense kernels: matrix product, normalization, activations, 3D convolutions.
//!
//! Every kernel sums in a fixed order so sequential runs are bit-reproducible.
//! Multiply-adds are reported to [`crate::probe`] as they execute.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exec::parallel_enabled;
use crate::probe::record_macs;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-6;

/// `a[m×k] · b[k×n]`, row-major slices. Each `c[i,j]` accumulates over `t` in
/// increasing order starting from zero.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    let row = |(i, out): (usize, &mut [f64])| -> u64 {
        let mut macs = 0u64;
        let arow = &a[i * k..(i + 1) * k];
        for (t, &av) in arow.iter().enumerate() {
            let brow = &b[t * n..(t + 1) * n];
            for (o, &bv) in out.iter_mut().zip(brow) {
                *o += av * bv;
                macs += 1;
            }
        }
        macs
    };
    let macs: u64 = if parallel_enabled() && m > 1 {
        c.par_chunks_mut(n).enumerate().map(row).sum()
    } else {
        c.chunks_mut(n).enumerate().map(row).sum()
    };
    record_macs(macs);
    c
}

/// Row-vector times matrix plus optional bias: `x[rows×k] · w[k×n] + b[n]`.
pub(crate) fn linear_raw(x: &[f64], w: &[f64], bias: Option<&[f64]>, k: usize, n: usize) -> Vec<f64> {
    let rows = x.len() / k;
    let mut out = matmul_raw(x, w, rows, k, n);
    if let Some(b) = bias {
        for r in out.chunks_mut(n) {
            for (o, bv) in r.iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    out
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    if a.precision() != b.precision() {
        return Err(Error::Precision { op: "matmul" });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    Ok(a.like(&[m, n], matmul_raw(a.data(), b.data(), m, k, n)))
}

pub(crate) fn layer_norm_raw(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let d = gamma.len();
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter().zip(gamma).zip(beta) {
            out.push(g * (v - mean) * inv + b);
        }
    }
    out
}

/// Normalizes each last-axis row with its population variance.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let d = x.last_dim();
    if gamma.numel() != d || beta.numel() != d {
        return Err(Error::dim("layer_norm", x.shape(), gamma.shape()));
    }
    if eps <= 0.0 {
        return Err(Error::param("layer_norm", "eps must be positive"));
    }
    Ok(x.like(x.shape(), layer_norm_raw(x.data(), gamma.data(), beta.data(), eps)))
}

#[inline]
pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exact GeLU, `x·Φ(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    x.like(x.shape(), x.data().iter().map(|&v| gelu_scalar(v)).collect())
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::dim("softmax_rows", x.shape(), &[0, 0]));
    }
    let mut data = x.data().to_vec();
    for row in data.chunks_mut(x.shape()[1]) {
        softmax_in_place(row);
    }
    Ok(x.like(x.shape(), data))
}

/// Zero-pad the three leading axes of a `T×H×W×C` block.
pub(crate) fn pad3(x: &[f64], dims: [usize; 4], pad: [usize; 3]) -> (Vec<f64>, [usize; 4]) {
    let [t, h, w, c] = dims;
    let out_dims = [t + 2 * pad[0], h + 2 * pad[1], w + 2 * pad[2], c];
    if pad == [0, 0, 0] {
        return (x.to_vec(), out_dims);
    }
    let [_, ph, pw, _] = out_dims;
    let mut out = vec![0.0; out_dims.iter().product()];
    for ti in 0..t {
        for hi in 0..h {
            let src = ((ti * h + hi) * w) * c;
            let dst = (((ti + pad[0]) * ph + hi + pad[1]) * pw + pad[2]) * c;
            out[dst..dst + w * c].copy_from_slice(&x[src..src + w * c]);
        }
    }
    (out, out_dims)
}

fn out_extent(input: usize, k: usize, stride: usize) -> usize {
    (input - k) / stride + 1
}

/// Cross-correlation of `x[T×H×W×c_in]` with `kernel[kt×kh×kw×c_in×c_out]` over
/// the input zero-padded by `padding` on both sides of each spatio-temporal axis.
pub fn conv3d(x: &Tensor, kernel: &Tensor, stride: [usize; 3], padding: [usize; 3]) -> Result<Tensor> {
    if x.rank() != 4 || kernel.rank() != 5 || kernel.shape()[3] != x.shape()[3] {
        return Err(Error::dim("conv3d", x.shape(), kernel.shape()));
    }
    if stride.contains(&0) {
        return Err(Error::param("conv3d", "stride must be >= 1"));
    }
    let xd = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let (padded, pd) = pad3(x.data(), xd, padding);
    let ks = kernel.shape();
    let (kt, kh, kw, cin, cout) = (ks[0], ks[1], ks[2], ks[3], ks[4]);
    if kt > pd[0] || kh > pd[1] || kw > pd[2] {
        return Err(Error::dim("conv3d", &pd, ks));
    }
    let (ot, oh, ow) =
        (out_extent(pd[0], kt, stride[0]), out_extent(pd[1], kh, stride[1]), out_extent(pd[2], kw, stride[2]));
    let k = kernel.data();
    let mut out = vec![0.0; ot * oh * ow * cout];
    let plane = |(pos, acc): (usize, &mut [f64])| -> u64 {
        let mut macs = 0u64;
        let (to, rem) = (pos / (oh * ow), pos % (oh * ow));
        let (ho, wo) = (rem / ow, rem % ow);
        for a in 0..kt {
            for b in 0..kh {
                for c in 0..kw {
                    let ti = to * stride[0] + a;
                    let hi = ho * stride[1] + b;
                    let wi = wo * stride[2] + c;
                    let src = ((ti * pd[1] + hi) * pd[2] + wi) * cin;
                    let kbase = ((a * kh + b) * kw + c) * cin;
                    for ci in 0..cin {
                        let xv = padded[src + ci];
                        let krow = &k[(kbase + ci) * cout..(kbase + ci + 1) * cout];
                        for (o, kv) in acc.iter_mut().zip(krow) {
                            *o += xv * kv;
                            macs += 1;
                        }
                    }
                }
            }
        }
        macs
    };
    let macs: u64 = if parallel_enabled() {
        out.par_chunks_mut(cout).enumerate().map(plane).sum()
    } else {
        out.chunks_mut(cout).enumerate().map(plane).sum()
    };
    record_macs(macs);
    Ok(x.like(&[ot, oh, ow, cout], out))
}

pub(crate) fn dwconv3d_raw(x: &[f64], dims: [usize; 4], kernel: &[f64], kdims: [usize; 3]) -> Vec<f64> {
    let [kt, kh, kw] = kdims;
    let pad = [(kt - 1) / 2, (kh - 1) / 2, (kw - 1) / 2];
    let (padded, pd) = pad3(x, dims, pad);
    let [t, h, w, d] = dims;
    let mut out = vec![0.0; x.len()];
    let mut macs = 0u64;
    for to in 0..t {
        for ho in 0..h {
            for wo in 0..w {
                let dst = ((to * h + ho) * w + wo) * d;
                let acc = &mut out[dst..dst + d];
                for a in 0..kt {
                    for b in 0..kh {
                        for c in 0..kw {
                            let src = (((to + a) * pd[1] + ho + b) * pd[2] + wo + c) * d;
                            let kr = ((a * kh + b) * kw + c) * d;
                            for ch in 0..d {
                                acc[ch] += padded[src + ch] * kernel[kr + ch];
                                macs += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    record_macs(macs);
    out
}

/// Depthwise 3D convolution, stride 1, zero "same" padding.
pub fn dwconv3d(x: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 || kernel.rank() != 4 || kernel.shape()[3] != x.shape()[3] {
        return Err(Error::dim("dwconv3d", x.shape(), kernel.shape()));
    }
    let ks = kernel.shape();
    if ks[..3].iter().any(|k| k % 2 == 0) {
        return Err(Error::param("dwconv3d", format!("kernel extents must be odd, got {ks:?}")));
    }
    let dims = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    Ok(x.like(x.shape(), dwconv3d_raw(x.data(), dims, kernel.data(), [ks[0], ks[1], ks[2]])))
}

/// Bilinear spatial resize of a `T×H×W×C` video, half-pixel centers
/// (corners not aligned), edge-clamped.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if x.rank() != 4 || out_h == 0 || out_w == 0 {
        return Err(Error::dim("resize_bilinear", x.shape(), &[out_h, out_w]));
    }
    let [t, h, w, c] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(inp - 1);
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let ty = taps(out_h, h);
    let tx = taps(out_w, w);
    let src = x.data();
    let mut out = Vec::with_capacity(t * out_h * out_w * c);
    for ti in 0..t {
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let at = |y: usize, xx: usize, ch: usize| src[((ti * h + y) * w + xx) * c + ch];
                for ch in 0..c {
                    let top = at(y0, x0, ch) * (1.0 - fx) + at(y0, x1, ch) * fx;
                    let bot = at(y1, x0, ch) * (1.0 - fx) + at(y1, x1, ch) * fx;
                    out.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    Ok(x.like(&[t, out_h, out_w, c], out))
}

pub(crate) fn add_assign(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Mean over rows of an `rows×d` block, summing rows in order.
pub(crate) fn mean_rows(x: &[f64], d: usize) -> Vec<f64> {
    let rows = x.len() / d;
    let mut acc = vec![0.0; d];
    for r in x.chunks(d) {
        add_assign(&mut acc, r);
    }
    for v in &mut acc {
        *v /= rows as f64;
    }
    acc
}
