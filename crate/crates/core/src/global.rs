//! Global block: positional embedding, whole-video attention pooled to a
//! single token, and a residual feed-forward.
//!
//! ```text
//! V4 = V3 + DWConv3D(V3)
//! V5 = Attn(LN(q), LN(V4))          1 × d
//! V6 = V5 + FFN(LN(V5))
//! ```

use crate::attention::eaa::{eaa_pooled_raw, EaaParams};
use crate::attention::meaa::{meaa_pooled_raw, MeaaParams};
use crate::attention::mhsa::self_attention_pooled;
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::layers::{FfnParams, LayerNormParams};
use crate::ops::{add_assign, dwconv3d_raw};
use crate::probe;
use crate::tensor::Tensor;
use crate::tokens::{interleave, TokenField};
use crate::uniblock::MhraParams;

/// Residual depthwise convolution over the spatial token grid; class tokens
/// pass through unchanged.
pub fn dpe(v: &TokenField, kernel: &Tensor) -> Result<TokenField> {
    let g = v.grid();
    let ks = kernel.shape();
    if ks.len() != 4 || ks[3] != g.dim {
        return Err(Error::dim("dpe", ks, &[3, 3, 3, g.dim]));
    }
    if ks[..3].iter().any(|k| k % 2 == 0) {
        return Err(Error::Config(format!("dpe kernel extents must be odd, got {ks:?}")));
    }
    let spatial = v.spatial_grid();
    let mut conv = dwconv3d_raw(&spatial, [g.frames, g.height, g.width, g.dim], kernel.data(), [ks[0], ks[1], ks[2]]);
    add_assign(&mut conv, &spatial);
    let class_rows: Vec<f64> = (0..g.frames).flat_map(|t| v.class_token(t).to_vec()).collect();
    Ok(v.with_data(interleave(&g, &class_rows, &conv)))
}

/// Token mixer of the global block; every kind reduces all tokens to one row.
#[derive(Debug, Clone, PartialEq)]
pub enum GlobalAttention {
    /// Self-attention over all tokens, then the mean row.
    SelfAttention(MhraParams),
    /// Single learnable query with its own layer norm.
    Meaa {
        ln_query: LayerNormParams,
        params: MeaaParams,
    },
    EaaOriginal(EaaParams),
}

impl GlobalAttention {
    pub fn kind(&self) -> AttentionKind {
        match self {
            GlobalAttention::SelfAttention(_) => AttentionKind::SelfAttention,
            GlobalAttention::Meaa { .. } => AttentionKind::Meaa,
            GlobalAttention::EaaOriginal(_) => AttentionKind::EaaOriginal,
        }
    }
}

/// Pool `n × d` rows (time-major token order) into `d` values.
pub(crate) fn global_attend(x: &[f64], d: usize, a: &GlobalAttention) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptySequence);
    }
    match a {
        GlobalAttention::SelfAttention(p) => {
            if p.heads == 0 || !d.is_multiple_of(p.heads) {
                return Err(Error::Config(format!("head count {} does not divide d = {d}", p.heads)));
            }
            let w =
                p.mhsa_weights().ok_or_else(|| Error::Config("global self-attention needs query/key maps".into()))?;
            Ok(self_attention_pooled(x, d, &w))
        }
        GlobalAttention::Meaa { ln_query, params } => {
            let q = ln_query.apply_raw(params.query.data());
            Ok(meaa_pooled_raw(&q, x, &params.view()))
        }
        GlobalAttention::EaaOriginal(p) => Ok(eaa_pooled_raw(x, d, p)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalBlockParams {
    /// `[kt, kh, kw, d]`, odd extents.
    pub dpe: Tensor,
    pub ln_tokens: LayerNormParams,
    pub attn: GlobalAttention,
    pub ln_ffn: LayerNormParams,
    pub ffn: FfnParams,
}

/// Intermediates kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrace {
    pub v4: TokenField,
    pub v5: Tensor,
    pub v6: Tensor,
}

pub fn global_uniblock_trace(v3: &TokenField, p: &GlobalBlockParams) -> Result<GlobalTrace> {
    let d = v3.grid().dim;
    let v4 = probe::stage("global.dpe", || dpe(v3, &p.dpe))?;
    let v5 = probe::stage("global.attn", || {
        let normed = p.ln_tokens.apply_raw(v4.data());
        global_attend(&normed, d, &p.attn)
    })?;
    let v6 = probe::stage("global.ffn", || {
        let mut out = p.ffn.apply_raw(&p.ln_ffn.apply_raw(&v5));
        add_assign(&mut out, &v5);
        out
    });
    let t = v3.tensor();
    Ok(GlobalTrace { v4, v5: t.like(&[1, d], v5), v6: t.like(&[1, d], v6) })
}

/// The global video token `1 × d`.
pub fn global_uniblock_forward(v3: &TokenField, p: &GlobalBlockParams) -> Result<Tensor> {
    global_uniblock_trace(v3, p).map(|t| t.v6)
}
