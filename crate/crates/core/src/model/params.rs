//! Learnable weights, initialization, and the `A3M1` checkpoint format.
//!
//! Parameter order is fixed and load-bearing: the backbone comes first so
//! that checkpoints of different variants trained from the same seed share
//! a byte-identical prefix, and serialization walks the same order.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::ModelError;
use crate::model::config::{A3MConfig, Variant};
use crate::rng::Rng;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Magic bytes opening every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"A3M1";

/// A convolution layer's weights: kernel `[C_out, C_in, k, k]` and bias `[C_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// A linear classifier head: weight `[classes, d]` and bias `[classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// All learnable weights of one model instance.
///
/// `Baseline1` carries no attribute branches and no final head; every other
/// variant carries the full set.
#[derive(Debug, Clone, PartialEq)]
pub struct A3MParams {
    pub backbone: Vec<ConvLayer>,
    /// 1x1 conv from shared channels to the category feature map.
    pub category_conv: ConvLayer,
    /// Category classifier over the pooled category embedding.
    pub category_head: LinearHead,
    /// Per-attribute 1x1 convs from shared channels to embeddings.
    pub attr_convs: Vec<ConvLayer>,
    /// Per-attribute classifier heads.
    pub attr_heads: Vec<LinearHead>,
    /// Classifier over the fused final feature; absent for `Baseline1`.
    pub final_head: Option<LinearHead>,
}

fn glorot_uniform(rng: &mut Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

fn init_conv(rng: &mut Rng, c_out: usize, c_in: usize, k: usize) -> ConvLayer {
    ConvLayer {
        kernel: glorot_uniform(rng, vec![c_out, c_in, k, k], c_in * k * k, c_out * k * k),
        bias: Tensor::zeros(vec![c_out]),
    }
}

fn init_head(rng: &mut Rng, classes: usize, dim: usize) -> LinearHead {
    LinearHead {
        weight: glorot_uniform(rng, vec![classes, dim], dim, classes),
        bias: Tensor::zeros(vec![classes]),
    }
}

impl A3MParams {
    /// Initialize from a seeded generator: uniform Glorot bounds for weights,
    /// zeros for biases. Draw order follows the declared parameter order.
    pub fn init(config: &A3MConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let mut c_in = config.input_shape.0;
        let mut backbone = Vec::with_capacity(config.backbone.len());
        for layer in &config.backbone {
            backbone.push(init_conv(rng, layer.out_channels, c_in, layer.kernel));
            c_in = layer.out_channels;
        }
        let shared = config.shared_channels();
        let d = config.embed_dim;
        let category_conv = init_conv(rng, d, shared, 1);
        let category_head = init_head(rng, config.category_classes, d);
        let (attr_convs, attr_heads, final_head) = if config.variant == Variant::Baseline1 {
            (Vec::new(), Vec::new(), None)
        } else {
            let convs: Vec<ConvLayer> = (0..config.num_attributes)
                .map(|_| init_conv(rng, d, shared, 1))
                .collect();
            let heads: Vec<LinearHead> = config
                .attr_cardinalities
                .iter()
                .map(|&c| init_head(rng, c, d))
                .collect();
            let final_head = Some(init_head(rng, config.category_classes, d));
            (convs, heads, final_head)
        };
        Ok(A3MParams {
            backbone,
            category_conv,
            category_head,
            attr_convs,
            attr_heads,
            final_head,
        })
    }

    /// All parameter tensors in declared order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.backbone {
            out.push(&layer.kernel);
            out.push(&layer.bias);
        }
        out.push(&self.category_conv.kernel);
        out.push(&self.category_conv.bias);
        out.push(&self.category_head.weight);
        out.push(&self.category_head.bias);
        for layer in &self.attr_convs {
            out.push(&layer.kernel);
            out.push(&layer.bias);
        }
        for head in &self.attr_heads {
            out.push(&head.weight);
            out.push(&head.bias);
        }
        if let Some(head) = &self.final_head {
            out.push(&head.weight);
            out.push(&head.bias);
        }
        out
    }

    /// Mutable view of all parameter tensors in declared order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in &mut self.backbone {
            out.push(&mut layer.kernel);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.category_conv.kernel);
        out.push(&mut self.category_conv.bias);
        out.push(&mut self.category_head.weight);
        out.push(&mut self.category_head.bias);
        for layer in &mut self.attr_convs {
            out.push(&mut layer.kernel);
            out.push(&mut layer.bias);
        }
        for head in &mut self.attr_heads {
            out.push(&mut head.weight);
            out.push(&mut head.bias);
        }
        if let Some(head) = &mut self.final_head {
            out.push(&mut head.weight);
            out.push(&mut head.bias);
        }
        out
    }

    pub fn total_len(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Register every parameter on a tape, preserving order. With
    /// `trainable` the leaves accumulate gradients on backward.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamNodes {
        let mut insert = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        ParamNodes {
            backbone: self
                .backbone
                .iter()
                .map(|l| (insert(&l.kernel), insert(&l.bias)))
                .collect(),
            category_conv: (insert(&self.category_conv.kernel), insert(&self.category_conv.bias)),
            category_head: (insert(&self.category_head.weight), insert(&self.category_head.bias)),
            attr_convs: self
                .attr_convs
                .iter()
                .map(|l| (insert(&l.kernel), insert(&l.bias)))
                .collect(),
            attr_heads: self
                .attr_heads
                .iter()
                .map(|h| (insert(&h.weight), insert(&h.bias)))
                .collect(),
            final_head: self
                .final_head
                .as_ref()
                .map(|h| (insert(&h.weight), insert(&h.bias))),
        }
    }

    /// Reassemble a [`ParamNodes`] from tape ids laid out in declared
    /// parameter order (the layout produced by [`ParamNodes::ids`] and by
    /// gradient-check drivers).
    pub fn nodes_from_ids(&self, ids: &[TensorId]) -> ParamNodes {
        assert_eq!(ids.len(), self.tensors().len(), "id count mismatch");
        let mut iter = ids.iter().copied();
        let mut pair = || {
            let a = iter.next().unwrap();
            let b = iter.next().unwrap();
            (a, b)
        };
        ParamNodes {
            backbone: (0..self.backbone.len()).map(|_| pair()).collect(),
            category_conv: pair(),
            category_head: pair(),
            attr_convs: (0..self.attr_convs.len()).map(|_| pair()).collect(),
            attr_heads: (0..self.attr_heads.len()).map(|_| pair()).collect(),
            final_head: self.final_head.as_ref().map(|_| pair()),
        }
    }

    /// Serialize as magic bytes followed by little-endian f64 data in
    /// declared parameter order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 8 * self.total_len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for t in self.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let bytes = self.to_bytes();
        let mut f = std::fs::File::create(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        f.write_all(&bytes)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Load a checkpoint for a known configuration. The file length must
    /// match the configuration's parameter count exactly.
    pub fn load(path: &Path, config: &A3MConfig) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes, config)
    }

    pub fn from_bytes(bytes: &[u8], config: &A3MConfig) -> Result<Self, ModelError> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint(
                "missing A3M1 magic bytes".to_string(),
            ));
        }
        // Template gives the expected shapes; data is overwritten below.
        let mut rng = Rng::new(0);
        let mut params = A3MParams::init(config, &mut rng)?;
        let expected = params.total_len();
        let found = (bytes.len() - 4) / 8;
        if bytes.len() != 4 + 8 * expected {
            return Err(ModelError::Checkpoint(format!(
                "parameter count mismatch: config implies {expected} values, file holds {found}"
            )));
        }
        let mut offset = 4;
        for t in params.tensors_mut() {
            for v in t.data_mut() {
                let mut buf = [0u8; 8];
                buf.copy_from_slice(&bytes[offset..offset + 8]);
                *v = f64::from_le_bytes(buf);
                offset += 8;
            }
        }
        Ok(params)
    }
}

/// Tape handles for registered parameters, mirroring [`A3MParams`].
#[derive(Debug, Clone)]
pub struct ParamNodes {
    pub backbone: Vec<(TensorId, TensorId)>,
    pub category_conv: (TensorId, TensorId),
    pub category_head: (TensorId, TensorId),
    pub attr_convs: Vec<(TensorId, TensorId)>,
    pub attr_heads: Vec<(TensorId, TensorId)>,
    pub final_head: Option<(TensorId, TensorId)>,
}

impl ParamNodes {
    /// Ids in declared parameter order, aligned with [`A3MParams::tensors`].
    pub fn ids(&self) -> Vec<TensorId> {
        let mut out = Vec::new();
        for (k, b) in &self.backbone {
            out.push(*k);
            out.push(*b);
        }
        out.push(self.category_conv.0);
        out.push(self.category_conv.1);
        out.push(self.category_head.0);
        out.push(self.category_head.1);
        for (k, b) in &self.attr_convs {
            out.push(*k);
            out.push(*b);
        }
        for (w, b) in &self.attr_heads {
            out.push(*w);
            out.push(*b);
        }
        if let Some((w, b)) = &self.final_head {
            out.push(*w);
            out.push(*b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> A3MConfig {
        A3MConfig::toy(4, vec![3, 3, 2, 2], 24)
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let cfg = toy_config();
        let a = A3MParams::init(&cfg, &mut Rng::new(3)).unwrap();
        let b = A3MParams::init(&cfg, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let cfg = toy_config();
        let params = A3MParams::init(&cfg, &mut Rng::new(8)).unwrap();
        let bytes = params.to_bytes();
        let loaded = A3MParams::from_bytes(&bytes, &cfg).unwrap();
        assert_eq!(params, loaded);
        assert_eq!(bytes, loaded.to_bytes());
    }

    #[test]
    fn checkpoint_length_mismatch_reports_counts() {
        let cfg = toy_config();
        let params = A3MParams::init(&cfg, &mut Rng::new(8)).unwrap();
        let mut bytes = params.to_bytes();
        bytes.truncate(bytes.len() - 8);
        let err = A3MParams::from_bytes(&bytes, &cfg).unwrap_err();
        assert!(err.to_string().contains("mismatch"));
    }

    #[test]
    fn baseline1_shares_backbone_init_with_full_model() {
        let mut cfg1 = toy_config();
        cfg1.variant = Variant::Baseline1;
        let cfg2 = toy_config();
        let p1 = A3MParams::init(&cfg1, &mut Rng::new(11)).unwrap();
        let p2 = A3MParams::init(&cfg2, &mut Rng::new(11)).unwrap();
        assert_eq!(p1.backbone, p2.backbone);
        assert_eq!(p1.category_conv, p2.category_conv);
        assert_eq!(p1.category_head, p2.category_head);
        // serialized prefix agrees byte-for-byte
        let b1 = p1.to_bytes();
        let b2 = p2.to_bytes();
        assert!(b1.len() < b2.len());
        assert_eq!(&b1[..], &b2[..b1.len()]);
    }

    #[test]
    fn biases_init_to_zero() {
        let params = A3MParams::init(&toy_config(), &mut Rng::new(0)).unwrap();
        assert!(params.backbone[0].bias.data().iter().all(|&v| v == 0.0));
        assert!(params.category_head.bias.data().iter().all(|&v| v == 0.0));
    }
}
