//! The attribute-aware attention model and its ablation variants.

mod config;
mod forward;
mod params;

pub use config::{A3MConfig, ConvLayerSpec, Variant};
pub use forward::{
    attribute_branch, attribute_guided_attention, category_branch, category_guided_attention,
    combine_loss_terms, combined_loss, embedding_of, forward_full, forward_shared,
    forward_with_overrides, AttentionState, ForwardOverrides,
};
pub use params::{A3MParams, ConvLayer, LinearHead, ParamNodes, CHECKPOINT_MAGIC};
