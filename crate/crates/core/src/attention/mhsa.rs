//! Multi-head softmax self-attention.

use rayon::prelude::*;

use crate::exec::parallel_enabled;
use crate::ops::{matmul_raw, mean_rows, softmax_in_place};
use crate::probe::{produce, record_macs, release};

/// Borrowed `[in, out]` projections for one self-attention unit.
#[derive(Clone, Copy)]
pub struct MhsaWeights<'a> {
    pub query: &'a [f64],
    pub key: &'a [f64],
    pub value: &'a [f64],
    pub fusion: &'a [f64],
    pub heads: usize,
}

fn attention_core(x: &[f64], d: usize, w: &MhsaWeights<'_>) -> Vec<f64> {
    let n = x.len() / d;
    let heads = w.heads;
    let dh = d / heads;

    let q = matmul_raw(x, w.query, n, d, d);
    produce(n * d);
    let k = matmul_raw(x, w.key, n, d, d);
    produce(n * d);
    let v = matmul_raw(x, w.value, n, d, d);
    produce(n * d);

    let scale = 1.0 / (dh as f64).sqrt();
    let mut scores = vec![0.0; heads * n * n];
    produce(heads * n * n);
    let score_row = |(hi, row): (usize, &mut [f64])| -> u64 {
        let (h, i) = (hi / n, hi % n);
        let qi = &q[i * d + h * dh..i * d + (h + 1) * dh];
        let mut macs = 0;
        for (j, s) in row.iter_mut().enumerate() {
            let kj = &k[j * d + h * dh..j * d + (h + 1) * dh];
            let mut acc = 0.0;
            for (a, b) in qi.iter().zip(kj) {
                acc += a * b;
                macs += 1;
            }
            *s = acc * scale;
        }
        softmax_in_place(row);
        macs
    };
    let macs: u64 = if parallel_enabled() {
        scores.par_chunks_mut(n).enumerate().map(score_row).sum()
    } else {
        scores.chunks_mut(n).enumerate().map(score_row).sum()
    };
    record_macs(macs);

    let mut concat = vec![0.0; n * d];
    produce(n * d);
    let weighted_row = |(i, out): (usize, &mut [f64])| -> u64 {
        let mut macs = 0;
        for h in 0..heads {
            let a = &scores[(h * n + i) * n..(h * n + i + 1) * n];
            let o = &mut out[h * dh..(h + 1) * dh];
            for (j, &aij) in a.iter().enumerate() {
                let vj = &v[j * d + h * dh..j * d + (h + 1) * dh];
                for (oc, vc) in o.iter_mut().zip(vj) {
                    *oc += aij * vc;
                    macs += 1;
                }
            }
        }
        macs
    };
    let macs: u64 = if parallel_enabled() {
        concat.par_chunks_mut(d).enumerate().map(weighted_row).sum()
    } else {
        concat.chunks_mut(d).enumerate().map(weighted_row).sum()
    };
    record_macs(macs);
    release(heads * n * n);
    release(3 * n * d);

    let out = matmul_raw(&concat, w.fusion, n, d, d);
    produce(n * d);
    release(n * d);
    out
}

/// Self-attention over the `n` rows of `x`, output `n × d`.
pub fn self_attention_rows(x: &[f64], d: usize, w: &MhsaWeights<'_>) -> Vec<f64> {
    attention_core(x, d, w)
}

/// Self-attention over all rows, then the mean output row (`d` values).
pub fn self_attention_pooled(x: &[f64], d: usize, w: &MhsaWeights<'_>) -> Vec<f64> {
    let n = x.len() / d;
    let rows = attention_core(x, d, w);
    let pooled = mean_rows(&rows, d);
    produce(d);
    release(n * d);
    pooled
}

/// Explicit attention weights of head `h` (rows sum to one), for inspection.
pub fn attention_weights(x: &[f64], d: usize, w: &MhsaWeights<'_>, h: usize) -> Vec<f64> {
    let n = x.len() / d;
    let dh = d / w.heads;
    let q = matmul_raw(x, w.query, n, d, d);
    let k = matmul_raw(x, w.key, n, d, d);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for c in h * dh..(h + 1) * dh {
                acc += q[i * d + c] * k[j * d + c];
            }
            a[i * n + j] = acc / (dh as f64).sqrt();
        }
        softmax_in_place(&mut a[i * n..(i + 1) * n]);
    }
    a
}
