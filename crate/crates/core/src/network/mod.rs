//! Deraining backbone: stacked sub-networks of gated residual blocks, dense
//! fusion connections and graph-feature injections.

mod blocks;
mod checkpoint;
mod config;
mod model;

pub use blocks::{ChannelGate, CtResBlock, Fusion, Injection};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use config::{AttentionVariant, MsgnnConfig, Scales};
pub use model::{param_count, ForwardOutput, Layers, Msgnn};

pub(crate) use config::{parse, parse_bool};
