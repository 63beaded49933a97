//! Attribute-aware attention model (A3M) on a minimal 64-bit tensor engine.
//!
//! The crate is organized in four layers:
//!
//! - [`tensor`], [`tape`], [`gradcheck`], [`optim`], [`rng`]: a dense-tensor
//!   compute engine with reverse-mode differentiation, finite-difference
//!   verification, deterministic RNG, and SGD with momentum.
//! - [`model`]: the A3M architecture itself — shared convolutional backbone,
//!   category and attribute branches, the reciprocal attention modules, and
//!   the combined multi-task loss, plus its ablation variants.
//! - [`data`]: a procedural attributed-image generator with ground-truth
//!   attribute boxes, dataset splits, and manifest/image file formats.
//! - [`train`] and [`eval`]: the training loop, classification accuracy,
//!   re-id mAP/CMC, Recall@K, NMI via seeded k-means, attention
//!   localization scoring, and the ablation harness.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{DataError, ModelError, TensorError, TrainError};
pub use gradcheck::{grad_check, GradCheckConfig};
pub use optim::SgdState;
pub use rng::Rng;
pub use tape::{softmax, Tape, TensorId};
pub use tensor::Tensor;
