//! Named parameter layout of the full model and typed views over a container.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, PATCH, PATCH_T};
use super::weights::WeightContainer;
use crate::attention::eaa::EaaParams;
use crate::attention::meaa::MeaaParams;
use crate::attention::AttentionKind;
use crate::error::{Error, Result};
use crate::fusion::FusionParams;
use crate::global::{GlobalAttention, GlobalBlockParams};
use crate::layers::{FfnParams, LayerNormParams};
use crate::tensor::Tensor;
use crate::uniblock::{Affinity, LocalAttention, LocalBlockParams, MhraParams};

/// How an entry is drawn at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `±√(3/fan_in)`, i.e. variance `1/fan_in`.
    FanIn(usize),
    /// Uniform on `±scale`.
    Small(f64),
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntrySpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

const QUERY_SCALE: f64 = 0.02;

struct Schema(Vec<EntrySpec>);

impl Schema {
    fn push(&mut self, name: String, shape: &[usize], init: Init) {
        self.0.push(EntrySpec { name, shape: shape.to_vec(), init });
    }

    fn ln(&mut self, prefix: &str, d: usize) {
        self.push(format!("{prefix}.gamma"), &[d], Init::Ones);
        self.push(format!("{prefix}.beta"), &[d], Init::Zeros);
    }

    fn square(&mut self, name: String, d: usize) {
        self.push(name, &[d, d], Init::FanIn(d));
    }

    fn attention(&mut self, prefix: &str, kind: AttentionKind, d: usize) {
        match kind {
            AttentionKind::SelfAttention => {
                for m in ["query", "key", "value", "fusion"] {
                    self.square(format!("{prefix}.{m}"), d);
                }
            }
            AttentionKind::Meaa | AttentionKind::EaaOriginal => {
                if kind == AttentionKind::Meaa {
                    self.ln(&format!("{prefix}.ln_q"), d);
                    self.push(format!("{prefix}.q"), &[1, d], Init::Small(QUERY_SCALE));
                }
                self.square(format!("{prefix}.wq"), d);
                self.square(format!("{prefix}.wk"), d);
                self.push(format!("{prefix}.w_a"), &[d], Init::FanIn(d));
                self.square(format!("{prefix}.w1"), d);
                self.push(format!("{prefix}.b1"), &[d], Init::Zeros);
                self.square(format!("{prefix}.w2"), d);
                self.push(format!("{prefix}.b2"), &[d], Init::Zeros);
            }
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, hidden: usize) {
        self.push(format!("{prefix}.w_a"), &[d, hidden], Init::FanIn(d));
        self.push(format!("{prefix}.b_a"), &[hidden], Init::Zeros);
        self.push(format!("{prefix}.w_b"), &[hidden, d], Init::FanIn(hidden));
        self.push(format!("{prefix}.b_b"), &[d], Init::Zeros);
    }
}

/// Every entry the configuration requires, in a fixed order.
pub fn parameter_schema(cfg: &ModelConfig) -> Vec<EntrySpec> {
    let (d, c, h) = (cfg.dim, cfg.channels, cfg.hidden());
    let mut s = Schema(Vec::new());
    let fan = PATCH_T * PATCH * PATCH * c;
    s.push("backbone.kernel".into(), &[PATCH_T, PATCH, PATCH, c, d], Init::FanIn(fan));
    s.push("backbone.bias".into(), &[d], Init::Zeros);
    s.push("backbone.class_token".into(), &[1, d], Init::Small(QUERY_SCALE));
    for i in 0..cfg.local_depth {
        let p = format!("local.{i}");
        s.ln(&format!("{p}.ln1"), d);
        s.square(format!("{p}.lt.value"), d);
        s.push(format!("{p}.lt.kernel"), &[cfg.lt_kernel, d], Init::FanIn(cfg.lt_kernel));
        s.square(format!("{p}.lt.fusion"), d);
        s.ln(&format!("{p}.ln2"), d);
        s.attention(&format!("{p}.attn"), cfg.local_attention, d);
        s.ln(&format!("{p}.ln3"), d);
        s.ffn(&format!("{p}.ffn"), d, h);
    }
    s.push("global.dpe".into(), &[3, 3, 3, d], Init::FanIn(27));
    s.ln("global.ln", d);
    s.attention("global.attn", cfg.global_attention, d);
    s.ln("global.ln_ffn", d);
    s.ffn("global.ffn", d, h);
    s.push("fusion.beta".into(), &[1, d], Init::Zeros);
    s.push("fusion.proj".into(), &[d, cfg.num_classes], Init::FanIn(d));
    s.push("fusion.bias".into(), &[cfg.num_classes], Init::Zeros);
    s.0
}

/// Deterministic seeded initialization of every schema entry.
pub fn init_weights(cfg: &ModelConfig) -> Result<WeightContainer> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = WeightContainer::new();
    for e in parameter_schema(cfg) {
        let n: usize = e.shape.iter().product();
        let data: Vec<f64> = match e.init {
            Init::FanIn(fan) => {
                let a = (3.0 / fan as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            }
            Init::Small(a) => (0..n).map(|_| rng.random_range(-a..a)).collect(),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
        };
        w.insert(e.name, Tensor::new(&e.shape, data, cfg.precision)?);
    }
    Ok(w)
}

/// Check that `w` holds exactly the schema entries with the expected shapes.
pub fn check_container(w: &WeightContainer, cfg: &ModelConfig) -> Result<()> {
    let schema = parameter_schema(cfg);
    for e in &schema {
        w.get_shaped(&e.name, &e.shape)?;
    }
    if w.len() != schema.len() {
        let extra = w.names().find(|n| !schema.iter().any(|e| e.name == *n)).unwrap_or("<unknown>");
        return Err(Error::Container { entry: extra.to_string(), msg: "not used by this configuration".into() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams {
    /// `[3, 16, 16, c, d]`
    pub kernel: Tensor,
    pub bias: Tensor,
    /// `[1, d]`, prepended to every frame.
    pub class_token: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub backbone: BackboneParams,
    pub local: Vec<LocalBlockParams>,
    pub global: GlobalBlockParams,
    pub fusion: FusionParams,
}

struct Lookup<'a>(&'a WeightContainer);

impl Lookup<'_> {
    fn t(&self, name: &str) -> Result<Tensor> {
        self.0.get(name).cloned()
    }

    fn ln(&self, prefix: &str) -> Result<LayerNormParams> {
        Ok(LayerNormParams { gamma: self.t(&format!("{prefix}.gamma"))?, beta: self.t(&format!("{prefix}.beta"))? })
    }

    fn ffn(&self, prefix: &str) -> Result<FfnParams> {
        Ok(FfnParams {
            w_a: self.t(&format!("{prefix}.w_a"))?,
            b_a: self.t(&format!("{prefix}.b_a"))?,
            w_b: self.t(&format!("{prefix}.w_b"))?,
            b_b: self.t(&format!("{prefix}.b_b"))?,
        })
    }

    fn sa(&self, prefix: &str, heads: usize) -> Result<MhraParams> {
        Ok(MhraParams {
            heads,
            value: self.t(&format!("{prefix}.value"))?,
            fusion: self.t(&format!("{prefix}.fusion"))?,
            affinity: Affinity::SelfAttention {
                query: self.t(&format!("{prefix}.query"))?,
                key: self.t(&format!("{prefix}.key"))?,
            },
        })
    }

    fn meaa(&self, prefix: &str) -> Result<(LayerNormParams, MeaaParams)> {
        let p = MeaaParams {
            query: self.t(&format!("{prefix}.q"))?,
            wq: self.t(&format!("{prefix}.wq"))?,
            wk: self.t(&format!("{prefix}.wk"))?,
            w_a: self.t(&format!("{prefix}.w_a"))?,
            w1: self.t(&format!("{prefix}.w1"))?,
            b1: self.t(&format!("{prefix}.b1"))?,
            w2: self.t(&format!("{prefix}.w2"))?,
            b2: self.t(&format!("{prefix}.b2"))?,
        };
        Ok((self.ln(&format!("{prefix}.ln_q"))?, p))
    }

    fn eaa(&self, prefix: &str) -> Result<EaaParams> {
        Ok(EaaParams {
            wq: self.t(&format!("{prefix}.wq"))?,
            wk: self.t(&format!("{prefix}.wk"))?,
            w_a: self.t(&format!("{prefix}.w_a"))?,
            w1: self.t(&format!("{prefix}.w1"))?,
            b1: self.t(&format!("{prefix}.b1"))?,
            w2: self.t(&format!("{prefix}.w2"))?,
            b2: self.t(&format!("{prefix}.b2"))?,
        })
    }
}

impl ModelParams {
    /// Typed parameters for `cfg`. The container must match the schema exactly
    /// and hold tensors of the configured precision.
    pub fn from_container(w: &WeightContainer, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        check_container(w, cfg)?;
        if let Some((name, _)) = w.iter().find(|(_, t)| t.precision() != cfg.precision) {
            return Err(Error::Container {
                entry: name.to_string(),
                msg: format!("precision differs from configured {}", cfg.precision.name()),
            });
        }
        let l = Lookup(w);
        let local = (0..cfg.local_depth)
            .map(|i| {
                let p = format!("local.{i}");
                let attn = match cfg.local_attention {
                    AttentionKind::SelfAttention => {
                        LocalAttention::SelfAttention(l.sa(&format!("{p}.attn"), cfg.heads)?)
                    }
                    AttentionKind::Meaa => {
                        let (ln_query, params) = l.meaa(&format!("{p}.attn"))?;
                        LocalAttention::Meaa { ln_query, params }
                    }
                    AttentionKind::EaaOriginal => LocalAttention::EaaOriginal(l.eaa(&format!("{p}.attn"))?),
                };
                Ok(LocalBlockParams {
                    ln1: l.ln(&format!("{p}.ln1"))?,
                    lt: MhraParams {
                        heads: cfg.heads,
                        value: l.t(&format!("{p}.lt.value"))?,
                        fusion: l.t(&format!("{p}.lt.fusion"))?,
                        affinity: Affinity::LocalTemporal { kernel: l.t(&format!("{p}.lt.kernel"))? },
                    },
                    ln2: l.ln(&format!("{p}.ln2"))?,
                    attn,
                    ln3: l.ln(&format!("{p}.ln3"))?,
                    ffn: l.ffn(&format!("{p}.ffn"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let attn = match cfg.global_attention {
            AttentionKind::SelfAttention => GlobalAttention::SelfAttention(l.sa("global.attn", cfg.heads)?),
            AttentionKind::Meaa => {
                let (ln_query, params) = l.meaa("global.attn")?;
                GlobalAttention::Meaa { ln_query, params }
            }
            AttentionKind::EaaOriginal => GlobalAttention::EaaOriginal(l.eaa("global.attn")?),
        };
        Ok(ModelParams {
            backbone: BackboneParams {
                kernel: l.t("backbone.kernel")?,
                bias: l.t("backbone.bias")?,
                class_token: l.t("backbone.class_token")?,
            },
            local,
            global: GlobalBlockParams {
                dpe: l.t("global.dpe")?,
                ln_tokens: l.ln("global.ln")?,
                attn,
                ln_ffn: l.ln("global.ln_ffn")?,
                ffn: l.ffn("global.ffn")?,
            },
            fusion: FusionParams { beta: l.t("fusion.beta")?, proj: l.t("fusion.proj")?, bias: l.t("fusion.bias")? },
        })
    }
}
