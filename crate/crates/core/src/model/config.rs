//! Architecture hyperparameters and ablation variants.

use crate::error::ModelError;

/// Model variants used in the ablation grid.
///
/// - `Baseline1`: category-only CNN; no attribute machinery at all.
/// - `Baseline2`: both attention weight vectors replaced by all-ones, so
///   regional and attribute features are plain means.
/// - `Att1`: attribute-side weights forced to ones; region attention kept.
/// - `Att2`: region-side weights forced to ones; attribute attention kept.
/// - `NoAttrLabel`: full architecture, but the attribute supervision term
///   is dropped from the loss (attribute embeddings learn unsupervised).
/// - `A3M`: the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    A3M,
    Baseline1,
    Baseline2,
    Att1,
    Att2,
    NoAttrLabel,
}

impl Variant {
    /// Canonical lowercase token used in config files and CSV output.
    pub fn token(self) -> &'static str {
        match self {
            Variant::A3M => "a3m",
            Variant::Baseline1 => "baseline1",
            Variant::Baseline2 => "baseline2",
            Variant::Att1 => "att1",
            Variant::Att2 => "att2",
            Variant::NoAttrLabel => "noattrlabel",
        }
    }

    pub fn parse(s: &str) -> Result<Variant, ModelError> {
        match s.to_ascii_lowercase().as_str() {
            "a3m" => Ok(Variant::A3M),
            "baseline1" => Ok(Variant::Baseline1),
            "baseline2" => Ok(Variant::Baseline2),
            "att1" => Ok(Variant::Att1),
            "att2" => Ok(Variant::Att2),
            "noattrlabel" => Ok(Variant::NoAttrLabel),
            other => Err(ModelError::Config(format!("unknown variant `{other}`"))),
        }
    }

    /// Grid order for ablation tables: baselines first, full model last.
    pub fn ablation_order() -> [Variant; 6] {
        [
            Variant::Baseline1,
            Variant::Baseline2,
            Variant::Att1,
            Variant::Att2,
            Variant::NoAttrLabel,
            Variant::A3M,
        ]
    }

    /// True when the forward pass replaces the region attention mask with
    /// all-ones weights.
    pub fn uniform_region_weights(self) -> bool {
        matches!(self, Variant::Baseline2 | Variant::Att2)
    }

    /// True when the forward pass replaces the attribute attention weights
    /// with all-ones weights.
    pub fn uniform_attr_weights(self) -> bool {
        matches!(self, Variant::Baseline2 | Variant::Att1)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

/// One backbone convolution layer: `kernel x kernel`, zero padding `pad`,
/// then ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

/// All architecture hyperparameters.
#[derive(Debug, Clone)]
pub struct A3MConfig {
    /// Input image shape `(channels, height, width)`.
    pub input_shape: (usize, usize, usize),
    /// Shared backbone; the last layer's channel count feeds the branches.
    pub backbone: Vec<ConvLayerSpec>,
    /// Embedding dimension `d` shared by category and attribute branches.
    pub embed_dim: usize,
    /// Number of attributes `K`.
    pub num_attributes: usize,
    /// Number of categories.
    pub category_classes: usize,
    /// Per-attribute label cardinalities, length `K`.
    pub attr_cardinalities: Vec<usize>,
    /// Weight of the category-branch loss term.
    pub alpha: f64,
    /// Weight of the mean attribute loss term.
    pub beta: f64,
    pub variant: Variant,
    /// Apply ReLU after the 1x1 branch convolutions. Off by default: linear
    /// branches keep the attention inner products interpretable and make the
    /// uniform-weight ablations exact means.
    pub relu_branch_convs: bool,
}

impl A3MConfig {
    /// Desk-scale defaults: 16x16x3 input, two stride-2 3x3 conv layers
    /// (3 -> 16 -> 32 channels, pad 1), d = 32.
    pub fn toy(num_attributes: usize, attr_cardinalities: Vec<usize>, categories: usize) -> Self {
        A3MConfig {
            input_shape: (3, 16, 16),
            backbone: vec![
                ConvLayerSpec {
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                    pad: 1,
                },
                ConvLayerSpec {
                    out_channels: 32,
                    kernel: 3,
                    stride: 2,
                    pad: 1,
                },
            ],
            embed_dim: 32,
            num_attributes,
            category_classes: categories,
            attr_cardinalities,
            alpha: 0.5,
            beta: 0.5,
            variant: Variant::A3M,
            relu_branch_convs: false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.category_classes < 2 {
            return Err(ModelError::Config(
                "category_classes must be at least 2".to_string(),
            ));
        }
        if self.embed_dim == 0 {
            return Err(ModelError::Config("embed_dim must be positive".to_string()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(ModelError::Config(
                "alpha and beta must be non-negative".to_string(),
            ));
        }
        if self.variant != Variant::Baseline1 {
            if self.num_attributes == 0 {
                return Err(ModelError::Config(
                    "num_attributes must be at least 1 for attribute-aware variants".to_string(),
                ));
            }
            if self.attr_cardinalities.len() != self.num_attributes {
                return Err(ModelError::Config(format!(
                    "attr_cardinalities has {} entries, expected {}",
                    self.attr_cardinalities.len(),
                    self.num_attributes
                )));
            }
            if let Some(c) = self.attr_cardinalities.iter().find(|&&c| c < 2) {
                return Err(ModelError::Config(format!(
                    "attribute cardinality {c} is below 2"
                )));
            }
        }
        for layer in &self.backbone {
            if layer.out_channels == 0 || layer.kernel == 0 || layer.stride == 0 {
                return Err(ModelError::Config(
                    "backbone layer extents must be positive".to_string(),
                ));
            }
        }
        self.feature_grid()?;
        Ok(())
    }

    /// Channel count of the shared feature map entering the branches.
    pub fn shared_channels(&self) -> usize {
        self.backbone
            .last()
            .map(|l| l.out_channels)
            .unwrap_or(self.input_shape.0)
    }

    /// Spatial size `(h, w)` of the shared feature map; `L = h * w`.
    pub fn feature_grid(&self) -> Result<(usize, usize), ModelError> {
        let (_, mut h, mut w) = self.input_shape;
        for (idx, layer) in self.backbone.iter().enumerate() {
            let hp = h + 2 * layer.pad;
            let wp = w + 2 * layer.pad;
            if layer.kernel > hp || layer.kernel > wp {
                return Err(ModelError::Config(format!(
                    "backbone layer {idx}: kernel {} exceeds padded input {}x{}",
                    layer.kernel, hp, wp
                )));
            }
            h = (hp - layer.kernel) / layer.stride + 1;
            w = (wp - layer.kernel) / layer.stride + 1;
        }
        if h == 0 || w == 0 {
            return Err(ModelError::Config(
                "backbone collapses the spatial grid to zero".to_string(),
            ));
        }
        Ok((h, w))
    }

    pub fn num_regions(&self) -> Result<usize, ModelError> {
        let (h, w) = self.feature_grid()?;
        Ok(h * w)
    }
}
