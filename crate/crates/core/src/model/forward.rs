use super::config::{ModelConfig, PATCH};
use super::params::{BackboneParams, ModelParams};
use crate::crop::{apply_crop, compute_crop_box, CropDecision, DetectionSequence};
use crate::error::{Error, Result};
use crate::fusion::{classify, extract_class_token, fuse};
use crate::global::global_uniblock_trace;
use crate::ops::{conv3d, resize_bilinear};
use crate::probe;
use crate::tensor::Tensor;
use crate::tokens::TokenField;
use crate::uniblock::local_uniblock_named;

/// Patch projection, every other frame kept, class token prepended per frame.
pub fn backbone_forward(x: &Tensor, p: &BackboneParams) -> Result<TokenField> {
    let ks = p.kernel.shape();
    if x.rank() != 4 || ks.len() != 5 || x.shape()[3] != ks[3] {
        return Err(Error::dim("backbone_forward", x.shape(), ks));
    }
    let (t, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if t % 2 != 0 || h % PATCH != 0 || w % PATCH != 0 {
        return Err(Error::Config(format!("backbone input {t}x{h}x{w} needs even frames and {PATCH}-divisible sides")));
    }
    let d = ks[4];
    let pad_t = (ks[0] - 1) / 2;
    let projected = conv3d(x, &p.kernel, [1, PATCH, PATCH], [pad_t, 0, 0])?;
    let (gh, gw) = (h / PATCH, w / PATCH);
    let per = gh * gw * d;
    let bias = p.bias.data();
    let mut grid = Vec::with_capacity(t / 2 * per);
    for frame in projected.data().chunks(per).step_by(2) {
        for token in frame.chunks(d) {
            grid.extend(token.iter().zip(bias).map(|(a, b)| a + b));
        }
    }
    let grid = projected.like(&[t / 2, gh, gw, d], grid);
    let class_rows = p.class_token.data().repeat(t / 2);
    TokenField::from_grid(&grid, &class_rows)
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub crop: CropDecision,
    /// Video after crop and resize, `T×H×W×c`.
    pub input: Tensor,
    pub v0: TokenField,
    /// Output of each local block.
    pub local: Vec<TokenField>,
    pub v4: TokenField,
    pub v5: Tensor,
    pub v6: Tensor,
    pub class_token: Tensor,
    pub z: Tensor,
    pub logits: Tensor,
}

impl ForwardTrace {
    pub fn v3(&self) -> &TokenField {
        self.local.last().unwrap_or(&self.v0)
    }
}

/// Crop and resize a raw `T×H×W×c` video to the configured geometry.
pub fn prepare_input(x: &Tensor, det: &DetectionSequence, cfg: &ModelConfig) -> Result<(CropDecision, Tensor)> {
    if x.rank() != 4 || x.shape()[0] != cfg.frames || x.shape()[3] != cfg.channels {
        return Err(Error::dim("forward", x.shape(), &[cfg.frames, 0, 0, cfg.channels]));
    }
    if det.source_dims() != (x.shape()[1], x.shape()[2]) {
        return Err(Error::Config(format!(
            "detections describe {:?} frames but the video is {}x{}",
            det.source_dims(),
            x.shape()[1],
            x.shape()[2]
        )));
    }
    let x = x.to_precision(cfg.precision);
    let crop = compute_crop_box(det);
    let cropped = apply_crop(&x, &crop)?;
    let resized = resize_bilinear(&cropped, cfg.height, cfg.width)?;
    let want = [cfg.frames, cfg.height, cfg.width, cfg.channels];
    if resized.shape() != want {
        return Err(Error::dim("forward (after resize)", resized.shape(), &want));
    }
    Ok((crop, resized))
}

/// The model body on an already prepared input.
pub fn forward_prepared(input: &Tensor, p: &ModelParams) -> Result<(Vec<TokenField>, TokenField, ForwardHead)> {
    let v0 = probe::stage("backbone", || backbone_forward(input, &p.backbone))?;
    let mut local = Vec::with_capacity(p.local.len());
    for (i, block) in p.local.iter().enumerate() {
        let next = local_uniblock_named(local.last().unwrap_or(&v0), block, &format!("local.{i}"))?;
        local.push(next);
    }
    let v3 = local.last().unwrap_or(&v0);
    let g = global_uniblock_trace(v3, &p.global)?;
    let head = probe::stage("fusion", || -> Result<ForwardHead> {
        let class_token = extract_class_token(v3);
        let z = fuse(&g.v6, &class_token, &p.fusion.beta)?;
        let logits = classify(&z, &p.fusion)?;
        Ok(ForwardHead { v4: g.v4, v5: g.v5, v6: g.v6, class_token, z, logits })
    })?;
    Ok((local, v0, head))
}

/// Global block and head outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardHead {
    pub v4: TokenField,
    pub v5: Tensor,
    pub v6: Tensor,
    pub class_token: Tensor,
    pub z: Tensor,
    pub logits: Tensor,
}

pub fn forward_traced(x: &Tensor, det: &DetectionSequence, p: &ModelParams, cfg: &ModelConfig) -> Result<ForwardTrace> {
    let (crop, input) = prepare_input(x, det, cfg)?;
    let (local, v0, h) = forward_prepared(&input, p)?;
    Ok(ForwardTrace {
        crop,
        input,
        v0,
        local,
        v4: h.v4,
        v5: h.v5,
        v6: h.v6,
        class_token: h.class_token,
        z: h.z,
        logits: h.logits,
    })
}

/// Class logits for a raw video and its detections.
pub fn forward(x: &Tensor, det: &DetectionSequence, p: &ModelParams, cfg: &ModelConfig) -> Result<Tensor> {
    forward_traced(x, det, p, cfg).map(|t| t.logits)
}
