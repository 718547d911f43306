//! Closed-form multiply-add counts and their check against instrumented runs.
//!
//! One multiply-add (MAC) is one unit. Counted: products inside matrix
//! products and convolutions (including taps that land on zero padding),
//! attention scores and weighted sums, element-wise gating products and dot
//! products. Not counted: additions of biases and residuals, normalization,
//! activations, softmax, scaling by constants and resizing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::AttentionKind;
use crate::crop::DetectionSequence;
use crate::error::Result;
use crate::model::config::{ModelConfig, PATCH, PATCH_T};
use crate::model::forward::forward_traced;
use crate::model::{init_weights, ModelParams};
use crate::probe::{run_probed, Liveness};
use crate::tensor::Tensor;

pub const MAC_CONVENTION: &str = "one multiply-add counted as one unit (MAC); flops = 2 x MACs";

/// MACs of an `m×k · k×n` product.
pub fn matmul_macs(m: usize, k: usize, n: usize) -> u64 {
    (m * k * n) as u64
}

/// MACs of one attention unit over `n` tokens of width `d`, rows form
/// (pooling adds nothing). Independent of the head count.
pub fn attention_macs(kind: AttentionKind, n: usize, d: usize) -> u64 {
    let (n, d) = (n as u64, d as u64);
    match kind {
        // Q, K, V and M projections plus scores and weighted sums.
        AttentionKind::SelfAttention => 4 * n * d * d + 2 * n * n * d,
        // q*, α, q^g once; K, W1, W2 and the key gating per token.
        AttentionKind::Meaa => d * d + 2 * d + n * (3 * d * d + d),
        // Q, K, W1, W2 per token; logits, pooling and gating per token.
        AttentionKind::EaaOriginal => 4 * n * d * d + 3 * n * d,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    pub config: ModelConfig,
    /// Stage name → MACs, in execution order.
    pub stages: Vec<(String, u64)>,
}

impl FlopsReport {
    pub fn total(&self) -> u64 {
        self.stages.iter().map(|(_, m)| m).sum()
    }

    /// Two floating point operations per multiply-add.
    pub fn flops(&self) -> u64 {
        2 * self.total()
    }

    pub fn stage(&self, name: &str) -> Option<u64> {
        self.stages.iter().find(|(s, _)| s == name).map(|(_, m)| *m)
    }

    /// Plain-text table with a versioned header.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "# cuenet flops report v1");
        let _ = writeln!(s, "# convention: {MAC_CONVENTION}");
        let _ = writeln!(
            s,
            "# config: T={} H={} W={} c={} d={} heads={} depth={} kt={} ffn_ratio={} local={} global={} classes={}",
            c.frames,
            c.height,
            c.width,
            c.channels,
            c.dim,
            c.heads,
            c.local_depth,
            c.lt_kernel,
            c.ffn_ratio,
            c.local_attention,
            c.global_attention,
            c.num_classes
        );
        let _ = writeln!(s, "stage,macs");
        for (name, m) in &self.stages {
            let _ = writeln!(s, "{name},{m}");
        }
        let _ = writeln!(s, "total,{}", self.total());
        s
    }
}

/// Analytic per-stage counts for `cfg`.
pub fn count_flops(cfg: &ModelConfig) -> FlopsReport {
    let (d, hidden) = (cfg.dim, cfg.hidden());
    let tf = cfg.token_frames();
    let s = cfg.spatial_tokens();
    let m = s + 1;
    let tokens = tf * m;
    let u = |x: usize| x as u64;

    let mut stages = Vec::new();
    // The projection runs on every frame before every other frame is dropped.
    let backbone = u(cfg.frames * s) * u(d) * u(PATCH_T * PATCH * PATCH * cfg.channels);
    stages.push(("backbone".to_string(), backbone));
    for i in 0..cfg.local_depth {
        let lt = 2 * matmul_macs(tokens, d, d) + u(tf * s * d * cfg.lt_kernel);
        stages.push((format!("local.{i}.lt"), lt));
        stages.push((format!("local.{i}.attn"), u(tf) * attention_macs(cfg.local_attention, m, d)));
        stages.push((format!("local.{i}.ffn"), 2 * matmul_macs(tokens, d, hidden)));
    }
    stages.push(("global.dpe".to_string(), u(tf * s * d * 27)));
    stages.push(("global.attn".to_string(), attention_macs(cfg.global_attention, tokens, d)));
    stages.push(("global.ffn".to_string(), 2 * matmul_macs(1, d, hidden)));
    stages.push(("fusion".to_string(), u(2 * d) + matmul_macs(1, d, cfg.num_classes)));
    FlopsReport { config: cfg.clone(), stages }
}

/// Outcome of comparing analytic and executed counts.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopsVerification {
    pub analytic: FlopsReport,
    pub measured: BTreeMap<String, u64>,
    /// `(stage, analytic, measured)` for every disagreement.
    pub mismatches: Vec<(String, u64, u64)>,
}

impl FlopsVerification {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# cuenet flops verification v1");
        let _ = writeln!(s, "# convention: {MAC_CONVENTION}");
        let _ = writeln!(s, "stage,analytic,measured,status");
        for (name, a) in &self.analytic.stages {
            let got = self.measured.get(name).copied().unwrap_or(0);
            let _ = writeln!(s, "{name},{a},{got},{}", if *a == got { "ok" } else { "MISMATCH" });
        }
        for (name, a, got) in &self.mismatches {
            if self.analytic.stage(name).is_none() {
                let _ = writeln!(s, "{name},{a},{got},MISMATCH");
            }
        }
        let _ = writeln!(s, "total,{},{}", self.analytic.total(), self.measured.values().sum::<u64>());
        s
    }
}

/// Run one forward pass with counting enabled and compare every stage with
/// [`count_flops`]. Any work recorded outside a named stage is a mismatch.
pub fn verify_flops(cfg: &ModelConfig) -> Result<FlopsVerification> {
    let params = ModelParams::from_container(&init_weights(cfg)?, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let shape = [cfg.frames, cfg.height, cfg.width, cfg.channels];
    let n: usize = shape.iter().product();
    let x = Tensor::new(&shape, (0..n).map(|_| rng.random_range(0.0..1.0)).collect(), cfg.precision)?;
    let det = DetectionSequence::empty(cfg.frames, (cfg.height, cfg.width));
    let (out, probe) = run_probed(Liveness::Retained, || forward_traced(&x, &det, &params, cfg));
    out?;
    let analytic = count_flops(cfg);
    let mut mismatches = Vec::new();
    for (name, a) in &analytic.stages {
        let got = probe.macs.get(name).copied().unwrap_or(0);
        if got != *a {
            mismatches.push((name.clone(), *a, got));
        }
    }
    for (name, got) in &probe.macs {
        if analytic.stage(name).is_none() && *got != 0 {
            mismatches.push((name.clone(), 0, *got));
        }
    }
    Ok(FlopsVerification { analytic, measured: probe.macs, mismatches })
}
