use std::fmt::Write as _;
use std::str::FromStr;

use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::tensor::Precision;

/// Spatial patch size of the backbone projection.
pub const PATCH: usize = 16;
/// Temporal extent of the backbone projection kernel.
pub const PATCH_T: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub dim: usize,
    pub heads: usize,
    pub local_depth: usize,
    pub lt_kernel: usize,
    pub ffn_ratio: f64,
    pub local_attention: AttentionKind,
    pub global_attention: AttentionKind,
    pub num_classes: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

const KEYS: [&str; 14] = [
    "frames",
    "height",
    "width",
    "channels",
    "dim",
    "heads",
    "local_depth",
    "lt_kernel",
    "ffn_ratio",
    "local_attention",
    "global_attention",
    "num_classes",
    "seed",
    "precision",
];

impl ModelConfig {
    /// Small enough for oracle tests and the acceptance suite.
    pub fn desk() -> Self {
        ModelConfig {
            frames: 8,
            height: 32,
            width: 32,
            channels: 3,
            dim: 64,
            heads: 4,
            local_depth: 2,
            lt_kernel: 3,
            ffn_ratio: 4.0,
            local_attention: AttentionKind::SelfAttention,
            global_attention: AttentionKind::Meaa,
            num_classes: 2,
            seed: 0,
            precision: Precision::Double,
        }
    }

    /// Full-size geometry; only meant for analytic counting.
    pub fn paper() -> Self {
        ModelConfig { frames: 64, height: 336, width: 336, dim: 1024, heads: 16, local_depth: 24, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("frames", self.frames),
            ("height", self.height),
            ("width", self.width),
            ("channels", self.channels),
            ("dim", self.dim),
            ("heads", self.heads),
            ("lt_kernel", self.lt_kernel),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.height.is_multiple_of(PATCH) || !self.width.is_multiple_of(PATCH) {
            return bad(format!("height and width must be multiples of {PATCH}, got {}x{}", self.height, self.width));
        }
        if !self.frames.is_multiple_of(2) {
            return bad(format!("frames must be even, got {}", self.frames));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return bad(format!("heads {} does not divide dim {}", self.heads, self.dim));
        }
        if self.lt_kernel.is_multiple_of(2) {
            return bad(format!("lt_kernel must be odd, got {}", self.lt_kernel));
        }
        if !(self.ffn_ratio.is_finite() && self.ffn_ratio > 0.0) || self.hidden() == 0 {
            return bad(format!("ffn_ratio must be positive, got {}", self.ffn_ratio));
        }
        Ok(())
    }

    /// Frames after temporal downsampling.
    pub fn token_frames(&self) -> usize {
        self.frames / 2
    }

    pub fn grid_h(&self) -> usize {
        self.height / PATCH
    }

    pub fn grid_w(&self) -> usize {
        self.width / PATCH
    }

    /// Spatial tokens per frame.
    pub fn spatial_tokens(&self) -> usize {
        self.grid_h() * self.grid_w()
    }

    /// Tokens entering the global block.
    pub fn global_tokens(&self) -> usize {
        self.token_frames() * (self.spatial_tokens() + 1)
    }

    pub fn hidden(&self) -> usize {
        (self.ffn_ratio * self.dim as f64).round() as usize
    }

    /// `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let v = match key {
                "frames" => self.frames.to_string(),
                "height" => self.height.to_string(),
                "width" => self.width.to_string(),
                "channels" => self.channels.to_string(),
                "dim" => self.dim.to_string(),
                "heads" => self.heads.to_string(),
                "local_depth" => self.local_depth.to_string(),
                "lt_kernel" => self.lt_kernel.to_string(),
                "ffn_ratio" => self.ffn_ratio.to_string(),
                "local_attention" => self.local_attention.to_string(),
                "global_attention" => self.global_attention.to_string(),
                "num_classes" => self.num_classes.to_string(),
                "seed" => self.seed.to_string(),
                "precision" => self.precision.name().to_string(),
                _ => unreachable!(),
            };
            let _ = writeln!(s, "{key}={v}");
        }
        s
    }

    /// Parse `key=value` lines; `#` starts a comment, missing keys keep the
    /// desk preset value. The result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::desk();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let err = |what: &str| Error::Config(format!("line {}: invalid {key} `{value}`: {what}", i + 1));
            let int = || value.parse::<usize>().map_err(|e| err(&e.to_string()));
            let kind = || AttentionKind::from_str(value).map_err(|e| err(&e.to_string()));
            match key {
                "frames" => cfg.frames = int()?,
                "height" => cfg.height = int()?,
                "width" => cfg.width = int()?,
                "channels" => cfg.channels = int()?,
                "dim" => cfg.dim = int()?,
                "heads" => cfg.heads = int()?,
                "local_depth" => cfg.local_depth = int()?,
                "lt_kernel" => cfg.lt_kernel = int()?,
                "ffn_ratio" => cfg.ffn_ratio = value.parse().map_err(|_| err("not a number"))?,
                "local_attention" => cfg.local_attention = kind()?,
                "global_attention" => cfg.global_attention = kind()?,
                "num_classes" => cfg.num_classes = int()?,
                "seed" => cfg.seed = value.parse().map_err(|_| err("not an integer"))?,
                "precision" => cfg.precision = Precision::parse(value).ok_or_else(|| err("use f32 or f64"))?,
                _ => return Err(Error::Config(format!("line {}: unknown key `{key}`", i + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
