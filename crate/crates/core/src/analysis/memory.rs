//! Peak intermediate-buffer estimates for the pooled attention units.
//!
//! Inputs and parameters are not counted; only buffers an attention call
//! materializes. Under [`Liveness::Retained`] every buffer stays live until
//! the call ends. Under [`Liveness::ProduceConsume`] a buffer is retired right
//! after its last consumer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::eaa::{eaa_pooled_raw, EaaParams};
use crate::attention::meaa::{meaa_pooled_raw, MeaaParams};
use crate::attention::mhsa::{self_attention_pooled, MhsaWeights};
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::probe::{run_probed, Liveness, UNSTAGED};
use crate::tensor::{Precision, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemEstimate {
    pub kind: AttentionKind,
    pub n: usize,
    pub d: usize,
    pub heads: usize,
    pub liveness: Liveness,
    pub precision: Precision,
    pub elements: u64,
    pub bytes: u64,
}

/// Peak live elements of one pooled attention call over `n × d` tokens.
pub fn estimate_memory(
    kind: AttentionKind,
    n: usize,
    d: usize,
    heads: usize,
    precision: Precision,
    liveness: Liveness,
) -> Result<MemEstimate> {
    if n == 0 || d == 0 {
        return Err(Error::param("estimate_memory", "n and d must be positive"));
    }
    if kind == AttentionKind::SelfAttention && (heads == 0 || !d.is_multiple_of(heads)) {
        return Err(Error::Config(format!("heads {heads} does not divide d = {d}")));
    }
    let (nn, dd, hh) = (n as u64, d as u64, heads as u64);
    let nd = nn * dd;
    let elements = match (kind, liveness) {
        // q*, K, α, q^g, fused rows, hidden rows, output rows, pooled row.
        (AttentionKind::Meaa, Liveness::Retained) => 4 * nd + 3 * dd + 1,
        // K and the fused rows overlap with q* and q^g.
        (AttentionKind::Meaa, Liveness::ProduceConsume) => 2 * nd + 2 * dd,
        // Q, K, weights, global query, fused, hidden, output, pooled.
        (AttentionKind::EaaOriginal, Liveness::Retained) => 5 * nd + nn + 2 * dd,
        // Q, K and the fused rows overlap with the global query.
        (AttentionKind::EaaOriginal, Liveness::ProduceConsume) => 3 * nd + dd,
        // Q, K, V, per-head scores, concatenated heads, fused output, pooled.
        (AttentionKind::SelfAttention, Liveness::Retained) => 5 * nd + hh * nn * nn + dd,
        // Q, K, V, scores and the concatenated heads.
        (AttentionKind::SelfAttention, Liveness::ProduceConsume) => 4 * nd + hh * nn * nn,
    };
    Ok(MemEstimate { kind, n, d, heads, liveness, precision, elements, bytes: elements * precision.width() as u64 })
}

/// Run a pooled attention call on seeded random data with the probe active
/// and return its high-water mark in elements.
pub fn measure_memory(kind: AttentionKind, n: usize, d: usize, heads: usize, liveness: Liveness, seed: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let x = v(n * d);
    let sq: Vec<Vec<f64>> = (0..4).map(|_| v(d * d)).collect();
    let q = v(d);
    let w_a = v(d);
    let b = v(d);
    let t = |shape: &[usize], data: &[f64]| Tensor::from_f64(shape, data.to_vec()).expect("valid shape");
    let (_, report) = run_probed(liveness, || match kind {
        AttentionKind::SelfAttention => {
            let w = MhsaWeights { query: &sq[0], key: &sq[1], value: &sq[2], fusion: &sq[3], heads };
            self_attention_pooled(&x, d, &w)
        }
        AttentionKind::Meaa => {
            let p = MeaaParams {
                query: t(&[1, d], &q),
                wq: t(&[d, d], &sq[0]),
                wk: t(&[d, d], &sq[1]),
                w_a: t(&[d], &w_a),
                w1: t(&[d, d], &sq[2]),
                b1: t(&[d], &b),
                w2: t(&[d, d], &sq[3]),
                b2: t(&[d], &b),
            };
            meaa_pooled_raw(&q, &x, &p.view())
        }
        AttentionKind::EaaOriginal => {
            let p = EaaParams {
                wq: t(&[d, d], &sq[0]),
                wk: t(&[d, d], &sq[1]),
                w_a: t(&[d], &w_a),
                w1: t(&[d, d], &sq[2]),
                b1: t(&[d], &b),
                w2: t(&[d, d], &sq[3]),
                b2: t(&[d], &b),
            };
            eaa_pooled_raw(&x, d, &p)
        }
    });
    report.peak_elements.get(UNSTAGED).copied().unwrap_or(0)
}
