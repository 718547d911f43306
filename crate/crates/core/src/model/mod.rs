//! End-to-end model: configuration, parameters, persistence and the forward pass.

pub mod config;
pub mod forward;
pub mod params;
pub mod weights;

pub use config::ModelConfig;
pub use forward::{backbone_forward, forward, forward_traced, ForwardTrace};
pub use params::{init_weights, ModelParams};
pub use weights::WeightContainer;
