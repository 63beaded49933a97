//! Attention localization: does the attribute-guided attention mass land on
//! the ground-truth attribute regions?
//!
//! Masks live on the `h x w` feature grid and are upsampled to pixel space
//! by nearest-neighbour cell mapping, so cell-to-pixel correspondence is
//! exact. The score is a lift over a uniform mask: attention mass inside
//! the box divided by the box's area fraction; 1.0 is chance.

use crate::data::{AttrBox, SyntheticSample};
use crate::error::ModelError;
use crate::model::{forward_full, A3MConfig, A3MParams};
use crate::tape::Tape;

/// Per-attribute attention masks plus the merged region mask for one image,
/// each a row-major `h x w` grid.
#[derive(Debug, Clone)]
pub struct AttentionMaps {
    pub grid: (usize, usize),
    pub per_attr: Vec<Vec<f64>>,
    pub region: Vec<f64>,
}

/// Extract attention masks for one image. Only variants that actually
/// compute the sigmoid region masks qualify; variants with uniform region
/// weights are rejected.
pub fn attention_masks(
    params: &A3MParams,
    config: &A3MConfig,
    image: &crate::tensor::Tensor,
) -> Result<AttentionMaps, ModelError> {
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape, false);
    let state = forward_full(&mut tape, &nodes, image, config)?;
    if state.attr_masks.is_empty() {
        return Err(ModelError::Config(format!(
            "variant {} has no attention maps",
            config.variant
        )));
    }
    let region = state.region_mask.expect("masks imply a region mask");
    Ok(AttentionMaps {
        grid: state.feature_grid,
        per_attr: state
            .attr_masks
            .iter()
            .map(|&m| tape.data(m).to_vec())
            .collect(),
        region: tape.data(region).to_vec(),
    })
}

/// Nearest-neighbour upsampling from an `h x w` grid to `out_h x out_w`
/// pixels; pixel `(y, x)` reads cell `(y*h/out_h, x*w/out_w)`.
pub fn upsample_nearest(
    mask: &[f64],
    (h, w): (usize, usize),
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    assert_eq!(mask.len(), h * w);
    let mut out = vec![0.0; out_h * out_w];
    for y in 0..out_h {
        let cy = (y * h / out_h).min(h - 1);
        for x in 0..out_w {
            let cx = (x * w / out_w).min(w - 1);
            out[y * out_w + x] = mask[cy * w + cx];
        }
    }
    out
}

/// Lift of one pixel-space mask w.r.t. a box: mass fraction inside the box
/// divided by the box's area fraction.
pub fn mask_lift(mask: &[f64], out_h: usize, out_w: usize, bx: &AttrBox) -> Option<f64> {
    if bx.area() == 0 {
        return None;
    }
    let total: f64 = mask.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut inside = 0.0;
    for y in bx.y0..bx.y0 + bx.height {
        for x in bx.x0..bx.x0 + bx.width {
            inside += mask[y * out_w + x];
        }
    }
    let area_fraction = bx.area() as f64 / (out_h * out_w) as f64;
    Some((inside / total) / area_fraction)
}

/// Pixel midpoint of the feature-grid cell `cell` (row-major), under the
/// upsampling used by [`upsample_nearest`].
fn cell_center(cell: usize, (h, w): (usize, usize), out_h: usize, out_w: usize) -> (usize, usize) {
    let (cy, cx) = (cell / w, cell % w);
    let ys: Vec<usize> = (0..out_h).filter(|&y| (y * h / out_h).min(h - 1) == cy).collect();
    let xs: Vec<usize> = (0..out_w).filter(|&x| (x * w / out_w).min(w - 1) == cx).collect();
    (
        (ys[0] + ys[ys.len() - 1]) / 2,
        (xs[0] + xs[xs.len() - 1]) / 2,
    )
}

#[derive(Debug, Clone)]
pub struct LocalizationScore {
    /// Mean lift per attribute over the scored samples.
    pub lift_per_attr: Vec<f64>,
    pub mean_lift: f64,
    /// Fraction of (sample, attribute) pairs whose peak attention cell has
    /// its pixel-block center inside the ground-truth box.
    pub peak_in_box_rate: f64,
    /// Samples skipped for degenerate boxes.
    pub skipped: usize,
}

/// Score attention localization over samples carrying ground-truth boxes.
pub fn attention_localization_score(
    params: &A3MParams,
    config: &A3MConfig,
    samples: &[SyntheticSample],
) -> Result<LocalizationScore, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::Config("no samples to score".to_string()));
    }
    let (_, out_h, out_w) = config.input_shape;
    let k = config.num_attributes;
    let mut lift_sums = vec![0.0; k];
    let mut lift_counts = vec![0usize; k];
    let mut peaks_in = 0usize;
    let mut peaks_total = 0usize;
    let mut skipped = 0usize;
    for sample in samples {
        let maps = attention_masks(params, config, &sample.image)?;
        let mut sample_ok = true;
        for (attr, mask) in maps.per_attr.iter().enumerate() {
            let pixel_mask = upsample_nearest(mask, maps.grid, out_h, out_w);
            match mask_lift(&pixel_mask, out_h, out_w, &sample.attr_boxes[attr]) {
                Some(lift) => {
                    lift_sums[attr] += lift;
                    lift_counts[attr] += 1;
                }
                None => {
                    sample_ok = false;
                    continue;
                }
            }
            let peak = crate::eval::classify::argmax(mask);
            let (py, px) = cell_center(peak, maps.grid, out_h, out_w);
            peaks_total += 1;
            if sample.attr_boxes[attr].contains(py, px) {
                peaks_in += 1;
            }
        }
        if !sample_ok {
            skipped += 1;
        }
    }
    let lift_per_attr: Vec<f64> = lift_sums
        .iter()
        .zip(&lift_counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mean_lift = lift_per_attr.iter().sum::<f64>() / k.max(1) as f64;
    Ok(LocalizationScore {
        lift_per_attr,
        mean_lift,
        peak_in_box_rate: if peaks_total > 0 {
            peaks_in as f64 / peaks_total as f64
        } else {
            0.0
        },
        skipped,
    })
}
