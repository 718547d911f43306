//! Token-mixing attention kernels.
//!
//! Three interchangeable mechanisms operate on an `n × d` block of tokens:
//!
//! * [`mhsa`]: multi-head softmax self-attention, quadratic in `n`.
//! * [`meaa`]: additive attention driven by one learnable query vector and a
//!   single scalar attention weight, linear in `n`.
//! * [`eaa`]: the additive attention it derives from, which keeps a full `n × d`
//!   query matrix and per-token attention weights.
//!
//! Each kernel has a token-preserving `*_rows` form (used inside local blocks,
//! one frame at a time) and a pooled form that averages the output rows into a
//! single `1 × d` token (used by the global block). Weight matrices are stored
//! `[in, out]` and applied to row vectors.

pub mod eaa;
pub mod meaa;
pub mod mhsa;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::probe::record_macs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    SelfAttention,
    Meaa,
    EaaOriginal,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 3] = [AttentionKind::SelfAttention, AttentionKind::Meaa, AttentionKind::EaaOriginal];

    pub fn as_str(self) -> &'static str {
        match self {
            AttentionKind::SelfAttention => "self_attention",
            AttentionKind::Meaa => "meaa",
            AttentionKind::EaaOriginal => "eaa_original",
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "self_attention" | "self" => Ok(AttentionKind::SelfAttention),
            "meaa" => Ok(AttentionKind::Meaa),
            "eaa_original" | "eaa" => Ok(AttentionKind::EaaOriginal),
            other => Err(Error::Config(format!("unknown attention kind `{other}`"))),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    record_macs(a.len() as u64);
    acc
}

/// `g ⊙ row` for every row of an `n × d` block.
pub(crate) fn hadamard_rows(g: &[f64], rows: &[f64]) -> Vec<f64> {
    let d = g.len();
    let mut out = Vec::with_capacity(rows.len());
    for r in rows.chunks(d) {
        out.extend(r.iter().zip(g).map(|(a, b)| a * b));
    }
    record_macs(rows.len() as u64);
    out
}

/// Add a `d` vector (or, when `add.len() == rows.len()`, a matching block) to every row.
pub(crate) fn add_rows(rows: &mut [f64], add: &[f64]) {
    if add.len() == rows.len() {
        crate::ops::add_assign(rows, add);
    } else {
        for r in rows.chunks_mut(add.len()) {
            crate::ops::add_assign(r, add);
        }
    }
}
