//! Training loop, in-memory datasets, and the ablation/sweep harnesses.

use std::path::Path;

use rayon::prelude::*;

use crate::data::{DatasetManifest, Split, SyntheticSample, SyntheticSpec};
use crate::error::{DataError, TrainError};
use crate::eval::{self, evaluate_classification, mean_report, EmbeddedItem, MetricsReport};
use crate::model::{combined_loss, forward_full, A3MConfig, A3MParams, Variant};
use crate::optim::SgdState;
use crate::rng::Rng;
use crate::tape::{Tape, TensorId};
use crate::tensor::{chw_offset, Tensor};

/// Training hyperparameters. The learning rate multiplies by
/// `lr_drop_factor` from epoch `lr_drop_epoch` (0-based) onward.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_epoch: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub random_flip: bool,
    /// Zero-pad by this many pixels, then crop back at a random offset.
    pub crop_pad: usize,
}

impl TrainConfig {
    /// Desk-scale defaults: 20 epochs, batch 16, lr 0.01 dropping 10x at
    /// epoch 15.
    pub fn toy(seed: u64) -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.01,
            lr_drop_factor: 0.1,
            lr_drop_epoch: 15,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed,
            random_flip: false,
            crop_pad: 0,
        }
    }

    /// Full-scale schedule: 60 epochs, batch 32, lr 1e-3 dropping 10x for
    /// the last 10 epochs.
    pub fn paper_scale(seed: u64) -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_drop_factor: 0.1,
            lr_drop_epoch: 50,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed,
            random_flip: true,
            crop_pad: 1,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Validation("batch_size must be positive".to_string()));
        }
        if self.learning_rate < 0.0 {
            return Err(TrainError::Validation(
                "learning rate must be non-negative".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Validation("momentum must lie in [0, 1)".to_string()));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::Validation(
                "weight decay must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// An in-memory labeled dataset with split tags.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub categories: Vec<usize>,
    pub attr_labels: Vec<Vec<usize>>,
    pub splits: Vec<Split>,
    pub num_categories: usize,
    pub attr_names: Vec<String>,
    pub attr_cardinalities: Vec<usize>,
    /// `(C, H, W)`.
    pub image_shape: (usize, usize, usize),
}

impl Dataset {
    pub fn from_samples(
        samples: &[SyntheticSample],
        splits: Vec<Split>,
        spec: &SyntheticSpec,
    ) -> Self {
        assert_eq!(samples.len(), splits.len());
        Dataset {
            images: samples.iter().map(|s| s.image.clone()).collect(),
            categories: samples.iter().map(|s| s.category).collect(),
            attr_labels: samples.iter().map(|s| s.attr_labels.clone()).collect(),
            splits,
            num_categories: spec.num_categories(),
            attr_names: spec.attributes.iter().map(|a| a.name.clone()).collect(),
            attr_cardinalities: spec.cardinalities(),
            image_shape: (3, spec.image_height, spec.image_width),
        }
    }

    /// Load a manifest and every referenced image.
    pub fn from_manifest(path: &Path) -> Result<Self, DataError> {
        let manifest = DatasetManifest::read(path)?;
        let mut images = Vec::with_capacity(manifest.rows.len());
        for row in &manifest.rows {
            images.push(manifest.load_image(path, row)?);
        }
        Ok(Dataset {
            categories: manifest.rows.iter().map(|r| r.category).collect(),
            attr_labels: manifest.rows.iter().map(|r| r.attr_labels.clone()).collect(),
            splits: manifest.rows.iter().map(|r| r.split).collect(),
            num_categories: manifest.num_categories,
            attr_names: manifest.attr_names.clone(),
            attr_cardinalities: manifest.attr_cardinalities.clone(),
            image_shape: manifest.image_shape,
            images,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        crate::data::indices_of(&self.splits, split)
    }

    /// Check that a model configuration matches this dataset's shapes.
    pub fn check_config(&self, config: &A3MConfig) -> Result<(), TrainError> {
        if config.input_shape != self.image_shape {
            return Err(TrainError::Validation(format!(
                "model input shape {:?} does not match dataset images {:?}",
                config.input_shape, self.image_shape
            )));
        }
        if config.category_classes != self.num_categories {
            return Err(TrainError::Validation(format!(
                "model has {} categories, dataset has {}",
                config.category_classes, self.num_categories
            )));
        }
        if config.variant != Variant::Baseline1
            && config.attr_cardinalities != self.attr_cardinalities
        {
            return Err(TrainError::Validation(format!(
                "model attribute cardinalities {:?} do not match dataset {:?}",
                config.attr_cardinalities, self.attr_cardinalities
            )));
        }
        Ok(())
    }
}

/// Horizontal flip of a `[C, H, W]` image.
pub fn flip_horizontal(image: &Tensor) -> Tensor {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut data = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                data[chw_offset(w, h, ch, y, x)] =
                    image.data()[chw_offset(w, h, ch, y, w - 1 - x)];
            }
        }
    }
    Tensor::new(s.to_vec(), data).expect("flip shape")
}

/// Zero-pad by `pad` on every side, then crop back to the original size at
/// offset `(dy, dx)`, both in `[0, 2*pad]`. The centered offset `(pad, pad)`
/// is the identity.
pub fn crop_shift(image: &Tensor, pad: usize, dy: usize, dx: usize) -> Tensor {
    let s = image.shape();
    let (c, h, w) = (s[0], s[1], s[2]);
    let mut data = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let sy = y + dy;
                let sx = x + dx;
                if sy >= pad && sy < h + pad && sx >= pad && sx < w + pad {
                    data[chw_offset(w, h, ch, y, x)] =
                        image.data()[chw_offset(w, h, ch, sy - pad, sx - pad)];
                }
            }
        }
    }
    Tensor::new(s.to_vec(), data).expect("crop shape")
}

fn augment(image: &Tensor, cfg: &TrainConfig, rng: &mut Rng) -> Tensor {
    if !cfg.random_flip && cfg.crop_pad == 0 {
        return image.clone();
    }
    let mut out = image.clone();
    if cfg.random_flip && rng.next_f64() < 0.5 {
        out = flip_horizontal(&out);
    }
    if cfg.crop_pad > 0 {
        let dy = rng.index(2 * cfg.crop_pad + 1);
        let dx = rng.index(2 * cfg.crop_pad + 1);
        out = crop_shift(&out, cfg.crop_pad, dy, dx);
    }
    out
}

/// A finished training run: final weights and per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: A3MParams,
    pub loss_curve: Vec<f64>,
}

/// Train a model on the dataset's `Train` split: shuffled mini-batches,
/// combined loss, SGD with momentum, stepped learning-rate schedule.
/// Fully deterministic in `(config, dataset, train_config)`.
pub fn train(
    config: &A3MConfig,
    dataset: &Dataset,
    train_config: &TrainConfig,
) -> Result<TrainOutput, TrainError> {
    train_config.validate()?;
    config.validate().map_err(TrainError::Model)?;
    dataset.check_config(config)?;
    let train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::Validation("dataset has no training rows".to_string()));
    }

    let mut rng = Rng::new(train_config.seed);
    let mut params = A3MParams::init(config, &mut rng).map_err(TrainError::Model)?;
    let mut optimizer = SgdState::new(
        train_config.learning_rate,
        train_config.momentum,
        train_config.weight_decay,
        &params.tensors(),
    );

    let mut loss_curve = Vec::with_capacity(train_config.epochs);
    for epoch in 0..train_config.epochs {
        optimizer.learning_rate = if epoch >= train_config.lr_drop_epoch {
            train_config.learning_rate * train_config.lr_drop_factor
        } else {
            train_config.learning_rate
        };
        let mut order = train_idx.clone();
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(train_config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let nodes = params.register(&mut tape, true);
            let mut total: Option<TensorId> = None;
            let mut sample_losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let image = augment(&dataset.images[i], train_config, &mut rng);
                let state = forward_full(&mut tape, &nodes, &image, config)?;
                let loss = combined_loss(
                    &mut tape,
                    &state,
                    dataset.categories[i],
                    &dataset.attr_labels[i],
                    config,
                )?;
                sample_losses.push((i, loss));
                total = Some(match total {
                    Some(t) => tape.add(t, loss)?,
                    None => loss,
                });
            }
            let mean = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64);
            let loss_value = tape.value(mean).item().map_err(TrainError::from)?;
            if !loss_value.is_finite() {
                let term = sample_losses
                    .iter()
                    .find(|(_, l)| !tape.value(*l).item().unwrap_or(f64::NAN).is_finite())
                    .map(|(i, _)| format!("sample {i} combined loss"))
                    .unwrap_or_else(|| "batch mean".to_string());
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    term,
                });
            }
            tape.backward(mean).map_err(TrainError::from)?;
            let grads: Vec<Vec<f64>> = nodes
                .ids()
                .iter()
                .map(|&id| tape.grad(id).expect("trainable leaf").to_vec())
                .collect();
            optimizer
                .step(&mut params.tensors_mut(), &grads)
                .map_err(TrainError::from)?;
            epoch_loss += loss_value * batch.len() as f64;
        }
        loss_curve.push(epoch_loss / train_idx.len() as f64);
    }
    Ok(TrainOutput { params, loss_curve })
}

/// Metric options for [`evaluate_on_split`].
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub recall_ks: Vec<usize>,
    pub kmeans_seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            recall_ks: vec![1, 2, 4, 8],
            kmeans_seed: 13,
        }
    }
}

/// Full metric sweep on one split: classification accuracy, leave-one-out
/// mAP/CMC with the split's samples as both queries and gallery, Recall@K,
/// and k-means NMI with one cluster per distinct label.
pub fn evaluate_on_split(
    params: &A3MParams,
    config: &A3MConfig,
    dataset: &Dataset,
    split: Split,
    options: &EvalOptions,
) -> Result<MetricsReport, TrainError> {
    let started = std::time::Instant::now();
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(TrainError::Validation(format!("dataset has no {split} rows")));
    }
    let images: Vec<Tensor> = idx.iter().map(|&i| dataset.images[i].clone()).collect();
    let categories: Vec<usize> = idx.iter().map(|&i| dataset.categories[i]).collect();
    let attr_labels: Vec<Vec<usize>> =
        idx.iter().map(|&i| dataset.attr_labels[i].clone()).collect();

    let classification =
        evaluate_classification(params, config, &images, &categories, &attr_labels)
            .map_err(TrainError::Model)?;
    let embeddings =
        eval::compute_embeddings(params, config, &images).map_err(TrainError::Model)?;
    let items: Vec<EmbeddedItem> = embeddings
        .into_iter()
        .zip(&categories)
        .zip(&idx)
        .map(|((embedding, &label), &sample_id)| EmbeddedItem {
            embedding,
            label,
            sample_id,
        })
        .collect();

    let (map, cmc) = eval::reid_map_cmc(&items, &items)?;
    let recall_at = eval::recall_at_k(&items, &options.recall_ks)?;
    let mut distinct = categories.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let points: Vec<Vec<f64>> = items.iter().map(|i| i.embedding.clone()).collect();
    let nmi = eval::nmi(&points, &categories, distinct.len(), options.kmeans_seed);

    Ok(MetricsReport {
        accuracy: Some(classification.accuracy),
        attr_accuracy: classification.attr_accuracy,
        map: Some(map),
        cmc: Some(cmc),
        recall_at,
        nmi: Some(nmi),
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One ablation run's outcome.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub report: MetricsReport,
    pub params: A3MParams,
}

/// Grid of ablation runs plus per-variant means over seeds.
#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub means: Vec<(Variant, MetricsReport)>,
}

impl AblationTable {
    pub fn mean_accuracy(&self, variant: Variant) -> f64 {
        self.means
            .iter()
            .find(|(v, _)| *v == variant)
            .and_then(|(_, r)| r.accuracy)
            .unwrap_or(f64::NAN)
    }

    /// CSV with one row per (variant, seed) plus one mean row per variant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,seed,accuracy,mAP,r1,nmi\n");
        let cells = |r: &MetricsReport| {
            format!(
                "{:.6},{:.6},{:.6},{:.6}",
                r.accuracy.unwrap_or(f64::NAN),
                r.map.unwrap_or(f64::NAN),
                r.cmc.map(|c| c[0]).unwrap_or(f64::NAN),
                r.nmi.unwrap_or(f64::NAN),
            )
        };
        for row in &self.rows {
            out.push_str(&format!("{},{},{}\n", row.variant, row.seed, cells(&row.report)));
        }
        for (variant, report) in &self.means {
            out.push_str(&format!("{variant},mean,{}\n", cells(report)));
        }
        out
    }
}

/// Train and evaluate every ablation variant with every seed. Runs are
/// independent and execute in parallel; results are merged in grid order so
/// the outcome is deterministic.
pub fn run_ablation(
    dataset: &Dataset,
    base_config: &A3MConfig,
    train_config: &TrainConfig,
    seeds: &[u64],
) -> Result<AblationTable, TrainError> {
    if seeds.is_empty() {
        return Err(TrainError::Validation(
            "ablation needs at least one seed".to_string(),
        ));
    }
    let grid: Vec<(Variant, u64)> = Variant::ablation_order()
        .into_iter()
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows: Result<Vec<AblationRow>, TrainError> = grid
        .par_iter()
        .map(|&(variant, seed)| {
            let mut config = base_config.clone();
            config.variant = variant;
            let mut tc = train_config.clone();
            tc.seed = seed;
            let output = train(&config, dataset, &tc)?;
            let report = evaluate_on_split(
                &output.params,
                &config,
                dataset,
                Split::Test,
                &EvalOptions::default(),
            )?;
            Ok(AblationRow {
                variant,
                seed,
                report,
                params: output.params,
            })
        })
        .collect();
    let rows = rows?;
    let means = Variant::ablation_order()
        .into_iter()
        .map(|variant| {
            let reports: Vec<MetricsReport> = rows
                .iter()
                .filter(|r| r.variant == variant)
                .map(|r| r.report.clone())
                .collect();
            (variant, mean_report(&reports))
        })
        .collect();
    Ok(AblationTable { rows, means })
}

/// One sweep cell: trade-off weights and the resulting test accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub accuracy: f64,
}

/// Train the configured variant once per (alpha, beta) pair at a fixed seed
/// and report test accuracy. Parallel over cells, deterministic output order.
pub fn run_sweep(
    dataset: &Dataset,
    base_config: &A3MConfig,
    train_config: &TrainConfig,
    alphas: &[f64],
    betas: &[f64],
) -> Result<Vec<SweepRow>, TrainError> {
    if alphas.is_empty() || betas.is_empty() {
        return Err(TrainError::Validation("sweep grids must be non-empty".to_string()));
    }
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    grid.par_iter()
        .map(|&(alpha, beta)| {
            let mut config = base_config.clone();
            config.alpha = alpha;
            config.beta = beta;
            let output = train(&config, dataset, train_config)?;
            let idx = dataset.indices(Split::Test);
            let images: Vec<Tensor> = idx.iter().map(|&i| dataset.images[i].clone()).collect();
            let categories: Vec<usize> = idx.iter().map(|&i| dataset.categories[i]).collect();
            let attr_labels: Vec<Vec<usize>> =
                idx.iter().map(|&i| dataset.attr_labels[i].clone()).collect();
            let result = evaluate_classification(
                &output.params,
                &config,
                &images,
                &categories,
                &attr_labels,
            )
            .map_err(TrainError::Model)?;
            Ok(SweepRow {
                alpha,
                beta,
                accuracy: result.accuracy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, split_classification};

    fn tiny_dataset(seed: u64) -> (Dataset, SyntheticSpec) {
        let mut spec = SyntheticSpec::default_toy();
        spec.codebook.truncate(4);
        spec.samples_per_category = 6;
        spec.seed = seed;
        let samples = generate(&spec).unwrap();
        let tags = split_classification(&samples, 0.5, &mut Rng::new(1)).unwrap();
        (Dataset::from_samples(&samples, tags, &spec), spec)
    }

    fn tiny_config(spec: &SyntheticSpec) -> A3MConfig {
        let mut config = A3MConfig::toy(
            spec.num_attributes(),
            spec.cardinalities(),
            spec.num_categories(),
        );
        // smaller network keeps these unit tests quick
        config.embed_dim = 8;
        config.backbone[0].out_channels = 4;
        config.backbone[1].out_channels = 8;
        config
    }

    #[test]
    fn zero_learning_rate_leaves_params_at_init() {
        let (dataset, spec) = tiny_dataset(2);
        let config = tiny_config(&spec);
        let mut tc = TrainConfig::toy(3);
        tc.epochs = 2;
        tc.learning_rate = 0.0;
        let output = train(&config, &dataset, &tc).unwrap();
        let init = A3MParams::init(&config, &mut Rng::new(3)).unwrap();
        assert_eq!(output.params, init);
    }

    #[test]
    fn same_seed_gives_bitwise_identical_runs() {
        let (dataset, spec) = tiny_dataset(4);
        let config = tiny_config(&spec);
        let mut tc = TrainConfig::toy(7);
        tc.epochs = 3;
        let a = train(&config, &dataset, &tc).unwrap();
        let b = train(&config, &dataset, &tc).unwrap();
        assert_eq!(a.params, b.params);
        let bits = |c: &[f64]| c.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.loss_curve), bits(&b.loss_curve));
    }

    #[test]
    fn training_reduces_loss_on_tiny_task() {
        let (dataset, spec) = tiny_dataset(5);
        let config = tiny_config(&spec);
        let mut tc = TrainConfig::toy(11);
        tc.epochs = 8;
        let output = train(&config, &dataset, &tc).unwrap();
        assert!(
            output.loss_curve.last().unwrap() < output.loss_curve.first().unwrap(),
            "loss curve {:?}",
            output.loss_curve
        );
    }

    #[test]
    fn config_dataset_mismatch_is_named() {
        let (dataset, spec) = tiny_dataset(6);
        let mut config = tiny_config(&spec);
        config.category_classes = 99;
        let err = train(&config, &dataset, &TrainConfig::toy(0)).unwrap_err();
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = Rng::new(8);
        let image = Tensor::new(vec![3, 4, 5], (0..60).map(|_| rng.next_f64()).collect()).unwrap();
        assert!(flip_horizontal(&flip_horizontal(&image)).bitwise_eq(&image));
    }

    #[test]
    fn centered_crop_shift_is_identity() {
        let mut rng = Rng::new(9);
        let image = Tensor::new(vec![1, 3, 3], (0..9).map(|_| rng.next_f64()).collect()).unwrap();
        assert!(crop_shift(&image, 1, 1, 1).bitwise_eq(&image));
    }

    #[test]
    fn crop_shift_moves_content() {
        let image = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let shifted = crop_shift(&image, 1, 0, 0);
        assert_eq!(shifted.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn ablation_csv_shape() {
        let (dataset, spec) = tiny_dataset(10);
        let mut config = tiny_config(&spec);
        config.embed_dim = 4;
        let mut tc = TrainConfig::toy(0);
        tc.epochs = 1;
        let table = run_ablation(&dataset, &config, &tc, &[0, 1]).unwrap();
        assert_eq!(table.rows.len(), 12);
        assert_eq!(table.means.len(), 6);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 1 + 12 + 6);
        assert!(csv.starts_with("variant,seed,accuracy,mAP,r1,nmi\n"));
        let variants: Vec<&str> = csv
            .lines()
            .skip(1)
            .take(12)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(variants[0], "baseline1");
        assert_eq!(variants[2], "baseline2");
        assert_eq!(variants[10], "a3m");
    }
}
