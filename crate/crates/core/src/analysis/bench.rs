//! Wall-clock sweeps of the pooled attention units over token count.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::eaa::{eaa_pooled_raw, EaaParams};
use crate::attention::meaa::{meaa_pooled_raw, MeaaParams};
use crate::attention::mhsa::{self_attention_pooled, MhsaWeights};
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::exec::with_threads;
use crate::tensor::Tensor;

pub const MIN_REPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub kind: AttentionKind,
    pub n: usize,
    pub median_ns: f64,
    pub mad_ns: f64,
    /// Sum of the pooled output; identical across runs with the same seed.
    pub checksum: f64,
}

/// Seeded inputs and weights for one attention unit.
pub struct AttentionFixture {
    pub kind: AttentionKind,
    pub d: usize,
    pub heads: usize,
    x: Vec<f64>,
    q: Vec<f64>,
    sq: [Vec<f64>; 4],
    meaa: MeaaParams,
    eaa: EaaParams,
}

impl AttentionFixture {
    pub fn new(kind: AttentionKind, n: usize, d: usize, heads: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 || heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("invalid attention fixture n={n} d={d} heads={heads}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let mut v = |len: usize, s: f64| -> Vec<f64> { (0..len).map(|_| rng.random_range(-s..s)).collect() };
        let x = v(n * d, 1.0);
        let q = v(d, 1.0);
        let sq = [v(d * d, scale), v(d * d, scale), v(d * d, scale), v(d * d, scale)];
        let w_a = v(d, scale);
        let b = v(d, 0.1);
        let t = |shape: &[usize], data: &[f64]| Tensor::from_f64(shape, data.to_vec());
        let meaa = MeaaParams {
            query: t(&[1, d], &q)?,
            wq: t(&[d, d], &sq[0])?,
            wk: t(&[d, d], &sq[1])?,
            w_a: t(&[d], &w_a)?,
            w1: t(&[d, d], &sq[2])?,
            b1: t(&[d], &b)?,
            w2: t(&[d, d], &sq[3])?,
            b2: t(&[d], &b)?,
        };
        let eaa = EaaParams {
            wq: meaa.wq.clone(),
            wk: meaa.wk.clone(),
            w_a: meaa.w_a.clone(),
            w1: meaa.w1.clone(),
            b1: meaa.b1.clone(),
            w2: meaa.w2.clone(),
            b2: meaa.b2.clone(),
        };
        Ok(AttentionFixture { kind, d, heads, x, q, sq, meaa, eaa })
    }

    /// One pooled attention call.
    pub fn run(&self) -> Vec<f64> {
        match self.kind {
            AttentionKind::SelfAttention => {
                let w = MhsaWeights {
                    query: &self.sq[0],
                    key: &self.sq[1],
                    value: &self.sq[2],
                    fusion: &self.sq[3],
                    heads: self.heads,
                };
                self_attention_pooled(&self.x, self.d, &w)
            }
            AttentionKind::Meaa => meaa_pooled_raw(&self.q, &self.x, &self.meaa.view()),
            AttentionKind::EaaOriginal => eaa_pooled_raw(&self.x, self.d, &self.eaa),
        }
    }
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Median absolute deviation from the median.
pub fn mad(xs: &[f64]) -> f64 {
    let m = median(xs);
    median(&xs.iter().map(|x| (x - m).abs()).collect::<Vec<_>>())
}

/// Least-squares line `y = slope·x + intercept` and its coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

/// Time `kind` at every `n` in `sweep` inside a pool of `threads` workers.
///
/// Each size gets one warm-up call, then the `reps` timed calls are taken
/// round-robin across the sweep, so slow spells on a shared machine spread
/// over every size instead of bending one point.
pub fn bench_attention(
    kind: AttentionKind,
    sweep: &[usize],
    d: usize,
    heads: usize,
    reps: usize,
    threads: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if reps < MIN_REPS {
        return Err(Error::param("bench_attention", format!("reps must be at least {MIN_REPS}, got {reps}")));
    }
    if sweep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("bench_attention", "token counts must increase strictly"));
    }
    with_threads(threads, || {
        let fixtures =
            sweep.iter().map(|&n| AttentionFixture::new(kind, n, d, heads, seed)).collect::<Result<Vec<_>>>()?;
        let checksums: Vec<f64> = fixtures.iter().map(|fx| black_box(fx.run()).iter().sum()).collect();
        let mut times = vec![Vec::with_capacity(reps); fixtures.len()];
        for _ in 0..reps {
            for (fx, t) in fixtures.iter().zip(times.iter_mut()) {
                let start = Instant::now();
                black_box(fx.run());
                t.push(start.elapsed().as_nanos() as f64);
            }
        }
        Ok(sweep
            .iter()
            .zip(times.iter().zip(checksums))
            .map(|(&n, (t, checksum))| BenchRow { kind, n, median_ns: median(t), mad_ns: mad(t), checksum })
            .collect())
    })
}

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("kind,n,median_ns,mad_ns\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.0},{:.0}", r.kind, r.n, r.median_ns, r.mad_ns);
    }
    s
}
