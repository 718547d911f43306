//! Local block: temporal relation aggregation, per-frame token mixing and a
//! feed-forward layer, each pre-normalized and residual.
//!
//! ```text
//! V1 = V0 + LT(LN(V0))
//! V2 = V1 + GS(LN(V1))
//! V3 = V2 + FFN(LN(V2))
//! ```

use crate::attention::eaa::{eaa_rows_raw, EaaParams};
use crate::attention::meaa::{meaa_rows_raw, MeaaParams};
use crate::attention::mhsa::{self_attention_rows, MhsaWeights};
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::layers::{FfnParams, LayerNormParams};
use crate::ops::{add_assign, dwconv3d_raw, matmul_raw};
use crate::probe;
use crate::tensor::Tensor;
use crate::tokens::{interleave, TokenField};

/// How a relation aggregator relates tokens before the value projection is mixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Affinity {
    /// Learnable depthwise temporal kernel, `[kt, d]`.
    LocalTemporal { kernel: Tensor },
    /// Softmax attention with `[d, d]` query and key maps.
    SelfAttention { query: Tensor, key: Tensor },
}

/// Multi-head relation aggregator. `value` holds the per-head value maps side
/// by side (head `n` owns output columns `n·d/N .. (n+1)·d/N`); `fusion` mixes
/// the concatenated heads.
#[derive(Debug, Clone, PartialEq)]
pub struct MhraParams {
    pub heads: usize,
    pub value: Tensor,
    pub fusion: Tensor,
    pub affinity: Affinity,
}

impl MhraParams {
    fn check(&self, d: usize, op: &'static str) -> Result<()> {
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("{op}: head count {} does not divide d = {d}", self.heads)));
        }
        if self.value.shape() != [d, d] || self.fusion.shape() != [d, d] {
            return Err(Error::dim(op, self.value.shape(), &[d, d]));
        }
        Ok(())
    }

    pub(crate) fn mhsa_weights(&self) -> Option<MhsaWeights<'_>> {
        match &self.affinity {
            Affinity::SelfAttention { query, key } => Some(MhsaWeights {
                query: query.data(),
                key: key.data(),
                value: self.value.data(),
                fusion: self.fusion.data(),
                heads: self.heads,
            }),
            Affinity::LocalTemporal { .. } => None,
        }
    }
}

/// Local temporal aggregation. Spatial tokens are value-projected, convolved
/// along time with a zero-padded depthwise kernel and fused; class tokens skip
/// the convolution.
pub fn lt_mhra(v: &TokenField, p: &MhraParams) -> Result<TokenField> {
    let g = v.grid();
    let d = g.dim;
    p.check(d, "lt_mhra")?;
    let Affinity::LocalTemporal { kernel } = &p.affinity else {
        return Err(Error::Config("lt_mhra needs a temporal kernel affinity".into()));
    };
    let kt = kernel.shape()[0];
    if kernel.shape() != [kt, d] || kt % 2 == 0 {
        return Err(Error::param("lt_mhra", format!("temporal kernel must be [odd, {d}], got {:?}", kernel.shape())));
    }
    let projected = v.with_data(matmul_raw(v.data(), p.value.data(), g.total_tokens(), d, d));
    let spatial = projected.spatial_grid();
    let convolved = dwconv3d_raw(&spatial, [g.frames, g.height, g.width, d], kernel.data(), [kt, 1, 1]);
    let class_rows: Vec<f64> = (0..g.frames).flat_map(|t| projected.class_token(t).to_vec()).collect();
    let mixed = interleave(&g, &class_rows, &convolved);
    Ok(v.with_data(matmul_raw(&mixed, p.fusion.data(), g.total_tokens(), d, d)))
}

/// Per-frame multi-head self-attention over each frame's class and spatial tokens.
pub fn gs_mhra(v: &TokenField, p: &MhraParams) -> Result<TokenField> {
    let d = v.grid().dim;
    p.check(d, "gs_mhra")?;
    let w = p.mhsa_weights().ok_or_else(|| Error::Config("gs_mhra needs query/key affinity maps".into()))?;
    let mut out = Vec::with_capacity(v.data().len());
    for t in 0..v.grid().frames {
        out.extend(self_attention_rows(v.frame(t), d, &w));
    }
    Ok(v.with_data(out))
}

/// Token mixer used in the per-frame slot of a local block.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalAttention {
    SelfAttention(MhraParams),
    Meaa { ln_query: LayerNormParams, params: MeaaParams },
    EaaOriginal(EaaParams),
}

impl LocalAttention {
    pub fn kind(&self) -> AttentionKind {
        match self {
            LocalAttention::SelfAttention(_) => AttentionKind::SelfAttention,
            LocalAttention::Meaa { .. } => AttentionKind::Meaa,
            LocalAttention::EaaOriginal(_) => AttentionKind::EaaOriginal,
        }
    }
}

/// Apply the per-frame token mixer to every frame.
pub fn spatial_mix(v: &TokenField, a: &LocalAttention) -> Result<TokenField> {
    let d = v.grid().dim;
    match a {
        LocalAttention::SelfAttention(p) => gs_mhra(v, p),
        LocalAttention::Meaa { ln_query, params } => {
            let q = ln_query.apply_raw(params.query.data());
            let view = params.view();
            let mut out = Vec::with_capacity(v.data().len());
            for t in 0..v.grid().frames {
                out.extend(meaa_rows_raw(&q, v.frame(t), &view));
            }
            Ok(v.with_data(out))
        }
        LocalAttention::EaaOriginal(p) => {
            let mut out = Vec::with_capacity(v.data().len());
            for t in 0..v.grid().frames {
                out.extend(eaa_rows_raw(v.frame(t), d, p));
            }
            Ok(v.with_data(out))
        }
    }
}

/// Feed-forward applied to every token.
pub fn ffn_tokens(v: &TokenField, p: &FfnParams) -> Result<TokenField> {
    if p.dims().0 != v.grid().dim {
        return Err(Error::dim("ffn", v.shape(), p.w_a.shape()));
    }
    Ok(v.with_data(p.apply_raw(v.data())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalBlockParams {
    pub ln1: LayerNormParams,
    pub lt: MhraParams,
    pub ln2: LayerNormParams,
    pub attn: LocalAttention,
    pub ln3: LayerNormParams,
    pub ffn: FfnParams,
}

fn residual(v: &TokenField, branch: &TokenField) -> TokenField {
    let mut out = v.data().to_vec();
    add_assign(&mut out, branch.data());
    v.with_data(out)
}

fn normed(v: &TokenField, ln: &LayerNormParams) -> TokenField {
    v.with_data(ln.apply_raw(v.data()))
}

/// One local block; probe stages are named `{name}.lt`, `{name}.attn`, `{name}.ffn`.
pub fn local_uniblock_named(v0: &TokenField, p: &LocalBlockParams, name: &str) -> Result<TokenField> {
    let v1 = probe::stage(&format!("{name}.lt"), || lt_mhra(&normed(v0, &p.ln1), &p.lt).map(|b| residual(v0, &b)))?;
    let v2 = probe::stage(&format!("{name}.attn"), || {
        spatial_mix(&normed(&v1, &p.ln2), &p.attn).map(|b| residual(&v1, &b))
    })?;
    probe::stage(&format!("{name}.ffn"), || ffn_tokens(&normed(&v2, &p.ln3), &p.ffn).map(|b| residual(&v2, &b)))
}

pub fn local_uniblock_forward(v0: &TokenField, p: &LocalBlockParams) -> Result<TokenField> {
    local_uniblock_named(v0, p, "local")
}
