//! Crop-driven video classifier built around a linear-cost single-query
//! additive attention, plus the tooling that checks its cost claims.
//!
//! The pipeline is: person-box union crop → bilinear resize → 3D patch
//! projection → local blocks (temporal convolution, per-frame attention,
//! feed-forward) → a global block that pools every token into one vector →
//! gated fusion with the pooled class token → class logits.
//!
//! Everything runs on plain `f64` buffers in a fixed summation order, so
//! sequential runs are bit-reproducible. Single precision is emulated by
//! rounding through `f32` after every operation.

pub mod analysis;
pub mod attention;
pub mod crop;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod global;
pub mod io;
pub mod layers;
pub mod model;
pub mod ops;
pub mod probe;
pub mod tensor;
pub mod tokens;
pub mod uniblock;

pub use attention::meaa::{meaa, meaa_grad, MeaaGrads, MeaaParams};
pub use attention::AttentionKind;
pub use crop::{apply_crop, compute_crop_box, parse_detections, BBox, CropDecision, DetectionSequence};
pub use error::{Error, Result};
pub use fusion::{classify, extract_class_token, fuse, FusionParams};
pub use model::{forward, forward_traced, init_weights, ModelConfig, ModelParams, WeightContainer};
pub use probe::Liveness;
pub use tensor::{Precision, Tensor};
pub use tokens::{GridDims, TokenField};
