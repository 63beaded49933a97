//! Evaluation: classification accuracy, ranking metrics, clustering quality,
//! and attention localization.

pub mod classify;
pub mod clustering;
pub mod localization;
pub mod report;
pub mod retrieval;

pub use classify::{argmax, compute_embeddings, evaluate_classification, ClassificationResult};
pub use clustering::{kmeans, nmi, nmi_from_assignments};
pub use localization::{
    attention_localization_score, attention_masks, mask_lift, upsample_nearest, AttentionMaps,
    LocalizationScore,
};
pub use report::{mean_report, MetricsReport};
pub use retrieval::{euclidean, recall_at_k, reid_map_cmc, EmbeddedItem, CMC_RANKS};
