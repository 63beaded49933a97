//! The A3M forward pass: shared backbone, category and attribute branches,
//! the attribute-category reciprocal attention modules, and the combined
//! multi-task loss.
//!
//! Notation used in field names: `V` is the `d x L` category feature map
//! (one column per spatial region), `a_k` the per-attribute embeddings,
//! `m_k` the per-attribute region masks, `m_region` their max-merge,
//! `s_attr` the attribute weights driven by the category embedding, and
//! `f_final = f_region + f_attr` the fused recognition feature.

use crate::error::ModelError;
use crate::model::config::{A3MConfig, Variant};
use crate::model::params::ParamNodes;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Test-facing switches that force either attention vector to all-ones
/// regardless of variant. Combined with the variant's own behaviour these
/// realize the ablation equivalences (e.g. the full model with both vectors
/// forced equals `Baseline2` bitwise).
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOverrides {
    pub force_uniform_region_weights: bool,
    pub force_uniform_attr_weights: bool,
}

/// Everything one forward pass produces. Attention fields are `None` for
/// variants that do not compute them (`Baseline1` has no attribute side at
/// all; uniform-weight variants skip the sigmoid masks they ignore).
#[derive(Debug, Clone)]
pub struct AttentionState {
    /// Shared feature map grid `(h, w)`; `L = h * w`.
    pub feature_grid: (usize, usize),
    /// Category feature map reshaped to `[d, L]`.
    pub v_matrix: TensorId,
    /// Pooled category embedding `[d]`.
    pub v_category: TensorId,
    /// Per-attribute embeddings `[d]`, length `K`.
    pub attr_embeddings: Vec<TensorId>,
    /// Attribute embeddings stacked as columns `[d, K]`.
    pub attr_matrix: Option<TensorId>,
    /// Per-attribute region masks `[L, 1]`, entries in (0, 1).
    pub attr_masks: Vec<TensorId>,
    /// Max-merged region mask `[L, 1]` (all-ones under uniform weighting).
    pub region_mask: Option<TensorId>,
    /// Attribute attention weights `[K, 1]` (all-ones under uniform weighting).
    pub attr_weights: Option<TensorId>,
    /// Attention-weighted regional feature `[d]`.
    pub f_region: Option<TensorId>,
    /// Attention-weighted attribute feature `[d]`.
    pub f_attr: Option<TensorId>,
    /// Final recognition embedding `[d]`. For `Baseline1` this is the
    /// category embedding itself.
    pub f_final: TensorId,
    pub logits_category: TensorId,
    /// Per-attribute classifier logits, length `K`.
    pub logits_attr: Vec<TensorId>,
    /// Logits of the fused classifier; for `Baseline1`, the category logits.
    pub logits_final: TensorId,
}

fn conv_block(
    tape: &mut Tape,
    x: TensorId,
    kernel: TensorId,
    bias: TensorId,
    stride: usize,
    pad: usize,
    relu: bool,
) -> Result<TensorId, ModelError> {
    let padded = if pad > 0 { tape.pad2d(x, pad)? } else { x };
    let conv = tape.conv2d(padded, kernel, stride)?;
    let biased = tape.channel_bias(conv, bias)?;
    Ok(if relu { tape.relu(biased) } else { biased })
}

/// Linear classifier: `weight [C, d] x v [d] + bias [C]`, returned as `[C]`.
fn linear_head(
    tape: &mut Tape,
    weight: TensorId,
    bias: TensorId,
    v: TensorId,
) -> Result<TensorId, ModelError> {
    let d = tape.value(v).numel();
    let col = tape.reshape(v, vec![d, 1])?;
    let prod = tape.matmul(weight, col)?;
    let classes = tape.shape(prod)[0];
    let flat = tape.reshape(prod, vec![classes])?;
    Ok(tape.add(flat, bias)?)
}

/// Run the shared backbone: stacked (pad, conv, bias, ReLU) blocks.
pub fn forward_shared(
    tape: &mut Tape,
    params: &ParamNodes,
    image: TensorId,
    config: &A3MConfig,
) -> Result<TensorId, ModelError> {
    let expect = [config.input_shape.0, config.input_shape.1, config.input_shape.2];
    if tape.shape(image) != expect {
        return Err(ModelError::Tensor(
            crate::error::TensorError::DimensionMismatch {
                op: "forward_shared (input image)",
                lhs: tape.shape(image).to_vec(),
                rhs: expect.to_vec(),
            },
        ));
    }
    let mut x = image;
    for (layer_spec, (kernel, bias)) in config.backbone.iter().zip(&params.backbone) {
        x = conv_block(tape, x, *kernel, *bias, layer_spec.stride, layer_spec.pad, true)?;
    }
    Ok(x)
}

/// Category branch: 1x1 conv to `d` channels, flatten to `V [d, L]`, pool to
/// the category embedding, classify.
pub fn category_branch(
    tape: &mut Tape,
    params: &ParamNodes,
    shared: TensorId,
    config: &A3MConfig,
) -> Result<(TensorId, TensorId, TensorId), ModelError> {
    let (kernel, bias) = params.category_conv;
    let map = conv_block(tape, shared, kernel, bias, 1, 0, config.relu_branch_convs)?;
    let s = tape.shape(map).to_vec();
    let (d, l) = (s[0], s[1] * s[2]);
    let v_matrix = tape.reshape(map, vec![d, l])?;
    let v_category = tape.global_avg_pool(map)?;
    let (w, b) = params.category_head;
    let logits = linear_head(tape, w, b, v_category)?;
    Ok((v_matrix, v_category, logits))
}

/// One attribute branch: 1x1 conv, pool to the attribute embedding, classify.
pub fn attribute_branch(
    tape: &mut Tape,
    params: &ParamNodes,
    shared: TensorId,
    k: usize,
    config: &A3MConfig,
) -> Result<(TensorId, TensorId), ModelError> {
    if k >= params.attr_convs.len() {
        return Err(ModelError::Tensor(
            crate::error::TensorError::IndexOutOfRange {
                op: "attribute_branch",
                index: k,
                len: params.attr_convs.len(),
            },
        ));
    }
    let (kernel, bias) = params.attr_convs[k];
    let map = conv_block(tape, shared, kernel, bias, 1, 0, config.relu_branch_convs)?;
    let embedding = tape.global_avg_pool(map)?;
    let (w, b) = params.attr_heads[k];
    let logits = linear_head(tape, w, b, embedding)?;
    Ok((embedding, logits))
}

/// Attribute-guided attention: per-attribute masks `sigmoid(Vᵀ a_k)` over the
/// `L` regions, max-merged, then used to average the columns of `V`.
///
/// Returns `(attr_masks, region_mask, f_region)`.
pub fn attribute_guided_attention(
    tape: &mut Tape,
    v_matrix: TensorId,
    attr_embeddings: &[TensorId],
) -> Result<(Vec<TensorId>, TensorId, TensorId), ModelError> {
    let d = tape.shape(v_matrix)[0];
    let l = tape.shape(v_matrix)[1];
    let vt = tape.transpose(v_matrix)?;
    let mut masks = Vec::with_capacity(attr_embeddings.len());
    for &a in attr_embeddings {
        if tape.value(a).numel() != d {
            return Err(ModelError::Tensor(
                crate::error::TensorError::DimensionMismatch {
                    op: "attribute_guided_attention",
                    lhs: vec![d, l],
                    rhs: tape.shape(a).to_vec(),
                },
            ));
        }
        let col = tape.reshape(a, vec![d, 1])?;
        let scores = tape.matmul(vt, col)?;
        masks.push(tape.sigmoid(scores));
    }
    let region_mask = tape.elementwise_max(&masks)?;
    let f_region = weighted_region_feature(tape, v_matrix, region_mask)?;
    Ok((masks, region_mask, f_region))
}

/// `f_region = (1/L) V m`, returned as `[d]`.
fn weighted_region_feature(
    tape: &mut Tape,
    v_matrix: TensorId,
    mask: TensorId,
) -> Result<TensorId, ModelError> {
    let (d, l) = (tape.shape(v_matrix)[0], tape.shape(v_matrix)[1]);
    let prod = tape.matmul(v_matrix, mask)?;
    let scaled = tape.scale(prod, 1.0 / l as f64);
    Ok(tape.reshape(scaled, vec![d])?)
}

/// Category-guided attention: weights `sigmoid(Aᵀ v_category)` over the `K`
/// attribute embeddings, then `f_attr = (1/K) A s`.
///
/// Returns `(attr_weights, f_attr)`.
pub fn category_guided_attention(
    tape: &mut Tape,
    attr_matrix: TensorId,
    v_category: TensorId,
) -> Result<(TensorId, TensorId), ModelError> {
    let (d, k) = (tape.shape(attr_matrix)[0], tape.shape(attr_matrix)[1]);
    if tape.value(v_category).numel() != d {
        return Err(ModelError::Tensor(
            crate::error::TensorError::DimensionMismatch {
                op: "category_guided_attention",
                lhs: vec![d, k],
                rhs: tape.shape(v_category).to_vec(),
            },
        ));
    }
    let at = tape.transpose(attr_matrix)?;
    let col = tape.reshape(v_category, vec![d, 1])?;
    let scores = tape.matmul(at, col)?;
    let weights = tape.sigmoid(scores);
    let f_attr = weighted_attr_feature(tape, attr_matrix, weights)?;
    Ok((weights, f_attr))
}

/// `f_attr = (1/K) A s`, returned as `[d]`.
fn weighted_attr_feature(
    tape: &mut Tape,
    attr_matrix: TensorId,
    weights: TensorId,
) -> Result<TensorId, ModelError> {
    let (d, k) = (tape.shape(attr_matrix)[0], tape.shape(attr_matrix)[1]);
    let prod = tape.matmul(attr_matrix, weights)?;
    let scaled = tape.scale(prod, 1.0 / k as f64);
    Ok(tape.reshape(scaled, vec![d])?)
}

/// Full forward pass under the configured variant.
pub fn forward_full(
    tape: &mut Tape,
    params: &ParamNodes,
    image: &Tensor,
    config: &A3MConfig,
) -> Result<AttentionState, ModelError> {
    forward_with_overrides(tape, params, image, config, ForwardOverrides::default())
}

/// Forward pass with explicit attention-clamp overrides on top of the
/// variant's own semantics.
pub fn forward_with_overrides(
    tape: &mut Tape,
    params: &ParamNodes,
    image: &Tensor,
    config: &A3MConfig,
    overrides: ForwardOverrides,
) -> Result<AttentionState, ModelError> {
    let image = tape.constant(image.clone());
    let shared = forward_shared(tape, params, image, config)?;
    let (v_matrix, v_category, logits_category) = category_branch(tape, params, shared, config)?;
    let (h, w) = config.feature_grid()?;
    let l = h * w;

    if config.variant == Variant::Baseline1 {
        return Ok(AttentionState {
            feature_grid: (h, w),
            v_matrix,
            v_category,
            attr_embeddings: Vec::new(),
            attr_matrix: None,
            attr_masks: Vec::new(),
            region_mask: None,
            attr_weights: None,
            f_region: None,
            f_attr: None,
            f_final: v_category,
            logits_category,
            logits_attr: Vec::new(),
            logits_final: logits_category,
        });
    }

    let k = config.num_attributes;
    let mut attr_embeddings = Vec::with_capacity(k);
    let mut logits_attr = Vec::with_capacity(k);
    for idx in 0..k {
        let (embedding, logits) = attribute_branch(tape, params, shared, idx, config)?;
        attr_embeddings.push(embedding);
        logits_attr.push(logits);
    }
    let attr_matrix = tape.concat_columns(&attr_embeddings)?;

    let uniform_region =
        config.variant.uniform_region_weights() || overrides.force_uniform_region_weights;
    let uniform_attr =
        config.variant.uniform_attr_weights() || overrides.force_uniform_attr_weights;

    let (attr_masks, region_mask, f_region) = if uniform_region {
        let ones = tape.constant(Tensor::new(vec![l, 1], vec![1.0; l]).expect("ones"));
        let f_region = weighted_region_feature(tape, v_matrix, ones)?;
        (Vec::new(), ones, f_region)
    } else {
        attribute_guided_attention(tape, v_matrix, &attr_embeddings)?
    };

    let (attr_weights, f_attr) = if uniform_attr {
        let ones = tape.constant(Tensor::new(vec![k, 1], vec![1.0; k]).expect("ones"));
        let f_attr = weighted_attr_feature(tape, attr_matrix, ones)?;
        (ones, f_attr)
    } else {
        category_guided_attention(tape, attr_matrix, v_category)?
    };

    let f_final = tape.add(f_region, f_attr)?;
    let (fw, fb) = params.final_head.expect("non-Baseline1 params carry a final head");
    let logits_final = linear_head(tape, fw, fb, f_final)?;

    Ok(AttentionState {
        feature_grid: (h, w),
        v_matrix,
        v_category,
        attr_embeddings,
        attr_matrix: Some(attr_matrix),
        attr_masks,
        region_mask: Some(region_mask),
        attr_weights: Some(attr_weights),
        f_region: Some(f_region),
        f_attr: Some(f_attr),
        f_final,
        logits_category,
        logits_attr,
        logits_final,
    })
}

/// Combine per-head cross-entropy terms:
/// `total = l_final + alpha * l_category + (beta / K) * sum_k l_attr_k`.
/// Terms with a zero coefficient are dropped rather than multiplied by zero.
pub fn combine_loss_terms(
    tape: &mut Tape,
    l_final: TensorId,
    l_category: TensorId,
    l_attr: &[TensorId],
    alpha: f64,
    beta: f64,
) -> Result<TensorId, ModelError> {
    let mut total = l_final;
    if alpha != 0.0 {
        let scaled = tape.scale(l_category, alpha);
        total = tape.add(total, scaled)?;
    }
    if beta != 0.0 && !l_attr.is_empty() {
        let mut attr_sum = l_attr[0];
        for &t in &l_attr[1..] {
            attr_sum = tape.add(attr_sum, t)?;
        }
        let scaled = tape.scale(attr_sum, beta / l_attr.len() as f64);
        total = tape.add(total, scaled)?;
    }
    Ok(total)
}

/// Combined training loss for one sample under the configured variant.
///
/// `Baseline1` reduces to the category cross-entropy; `NoAttrLabel` drops
/// the attribute supervision term.
pub fn combined_loss(
    tape: &mut Tape,
    state: &AttentionState,
    category_label: usize,
    attr_labels: &[usize],
    config: &A3MConfig,
) -> Result<TensorId, ModelError> {
    let classes = config.category_classes;
    if category_label >= classes {
        return Err(ModelError::LabelOutOfRange {
            what: "category".to_string(),
            label: category_label,
            cardinality: classes,
        });
    }
    if config.variant == Variant::Baseline1 {
        return Ok(tape.softmax_cross_entropy(state.logits_category, category_label)?);
    }
    if attr_labels.len() != config.num_attributes {
        return Err(ModelError::Config(format!(
            "expected {} attribute labels, got {}",
            config.num_attributes,
            attr_labels.len()
        )));
    }
    let l_final = tape.softmax_cross_entropy(state.logits_final, category_label)?;
    let l_category = tape.softmax_cross_entropy(state.logits_category, category_label)?;
    let beta = if config.variant == Variant::NoAttrLabel {
        0.0
    } else {
        config.beta
    };
    let mut l_attr = Vec::new();
    if beta != 0.0 {
        for (k, (&logits, &label)) in state.logits_attr.iter().zip(attr_labels).enumerate() {
            let cardinality = config.attr_cardinalities[k];
            if label >= cardinality {
                return Err(ModelError::LabelOutOfRange {
                    what: format!("attribute {k}"),
                    label,
                    cardinality,
                });
            }
            l_attr.push(tape.softmax_cross_entropy(logits, label)?);
        }
    }
    combine_loss_terms(tape, l_final, l_category, &l_attr, config.alpha, beta)
}

/// Recognition embedding used for retrieval and re-id: the fused final
/// feature (the category embedding for `Baseline1`).
pub fn embedding_of(tape: &Tape, state: &AttentionState) -> Vec<f64> {
    tape.data(state.f_final).to_vec()
}
