//! Independent reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use cuenet_core::crop::{BBox, DetectionSequence};
use cuenet_core::{MeaaParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_f64(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Random query, `n × d` tokens and parameters.
pub fn random_meaa(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Tensor, Tensor, MeaaParams) {
    let s = 1.0 / (d as f64).sqrt();
    let q = uniform(rng, &[1, d], 1.0);
    let x = uniform(rng, &[n, d], 1.0);
    let p = MeaaParams {
        query: q.clone(),
        wq: uniform(rng, &[d, d], s),
        wk: uniform(rng, &[d, d], s),
        w_a: uniform(rng, &[d], s),
        w1: uniform(rng, &[d, d], s),
        b1: uniform(rng, &[d], 0.5),
        w2: uniform(rng, &[d, d], s),
        b2: uniform(rng, &[d], 0.5),
    };
    (q, x, p)
}

/// Element `(r, c)` of a row-major matrix with `cols` columns.
fn at(m: &[f64], cols: usize, r: usize, c: usize) -> f64 {
    m[r * cols + c]
}

/// Scalar loops, one formula per step, no shared helpers with the library.
pub fn meaa_loop_oracle(q: &Tensor, x: &Tensor, p: &MeaaParams) -> Vec<f64> {
    let d = q.numel();
    let n = x.numel() / d;
    let (q, x) = (q.data(), x.data());
    let (wq, wk, wa) = (p.wq.data(), p.wk.data(), p.w_a.data());
    let (w1, b1, w2, b2) = (p.w1.data(), p.b1.data(), p.w2.data(), p.b2.data());

    let mut q_star = vec![0.0; d];
    for j in 0..d {
        for i in 0..d {
            q_star[j] += q[i] * at(wq, d, i, j);
        }
    }
    let mut alpha = 0.0;
    for j in 0..d {
        alpha += q_star[j] * wa[j];
    }
    alpha /= (d as f64).sqrt();
    let q_g: Vec<f64> = q_star.iter().map(|v| alpha * v).collect();

    let mut out = vec![0.0; d];
    for t in 0..n {
        let mut key = vec![0.0; d];
        for j in 0..d {
            for i in 0..d {
                key[j] += at(x, d, t, i) * at(wk, d, i, j);
            }
        }
        let gated: Vec<f64> = (0..d).map(|j| q_g[j] * key[j]).collect();
        let mut inner = vec![0.0; d];
        for j in 0..d {
            for i in 0..d {
                inner[j] += gated[i] * at(w1, d, i, j);
            }
            inner[j] += b1[j];
            inner[j] += q_star[j];
        }
        for j in 0..d {
            let mut o = b2[j];
            for i in 0..d {
                o += inner[i] * at(w2, d, i, j);
            }
            out[j] += o;
        }
    }
    out.iter().map(|v| v / n as f64).collect()
}

/// `‖a − b‖∞ / max(‖b‖∞, tiny)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    diff / scale
}

/// Union over every box, computed from scratch.
pub fn brute_union(frames: &[Vec<BBox>]) -> Option<BBox> {
    let all: Vec<&BBox> = frames.iter().flatten().collect();
    if all.is_empty() {
        return None;
    }
    Some(BBox::new(
        all.iter().map(|b| b.x_min).fold(f64::INFINITY, f64::min),
        all.iter().map(|b| b.y_min).fold(f64::INFINITY, f64::min),
        all.iter().map(|b| b.x_max).fold(f64::NEG_INFINITY, f64::max),
        all.iter().map(|b| b.y_max).fold(f64::NEG_INFINITY, f64::max),
    ))
}

/// Random detections on integer pixel coordinates with 0..=max_people boxes per frame.
pub fn random_detections(
    rng: &mut ChaCha8Rng,
    frames: usize,
    h: usize,
    w: usize,
    max_people: usize,
) -> DetectionSequence {
    let boxes = (0..frames)
        .map(|_| {
            let k = rng.random_range(0..=max_people);
            (0..k)
                .map(|_| {
                    let x0 = rng.random_range(0..w) as f64;
                    let y0 = rng.random_range(0..h) as f64;
                    let x1 = rng.random_range(x0 as usize + 1..=w) as f64;
                    let y1 = rng.random_range(y0 as usize + 1..=h) as f64;
                    BBox::new(x0, y0, x1, y1)
                })
                .collect()
        })
        .collect();
    DetectionSequence::new(boxes, (h, w)).unwrap()
}

/// Deterministic `T × H × W × C` test video.
pub fn ramp_video(t: usize, h: usize, w: usize, c: usize) -> Tensor {
    let data = (0..t * h * w * c).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    Tensor::from_f64(&[t, h, w, c], data).unwrap()
}
