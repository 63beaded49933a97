//! Procedural rendering of attributed images.
//!
//! Each attribute owns one cell of a near-square grid over the image. The
//! attribute's value picks a visual pattern rendered inside a patch of that
//! cell: a color fill, a stripe orientation, or a bright-blob count,
//! cycling by attribute index. The patch's placement jitters inside the
//! cell and its brightness jitters per sample; the background is uniform
//! noise. The rendered patch rectangle is recorded as the ground-truth
//! attribute box.

use crate::data::spec::{attribute_grid, SyntheticSpec};
use crate::error::DataError;
use crate::rng::Rng;
use crate::tensor::{chw_offset, Tensor};

/// Axis-aligned pixel rectangle, `[y0, y0+height) x [x0, x0+width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttrBox {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl AttrBox {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y0 && y < self.y0 + self.height && x >= self.x0 && x < self.x0 + self.width
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// One generated image with its labels and ground-truth attribute boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// `[3, H, W]` image with values in `[0, 1]`.
    pub image: Tensor,
    pub category: usize,
    pub attr_labels: Vec<usize>,
    pub attr_boxes: Vec<AttrBox>,
}

const PALETTE: [[f64; 3]; 8] = [
    [0.95, 0.15, 0.15],
    [0.15, 0.95, 0.15],
    [0.15, 0.15, 0.95],
    [0.95, 0.95, 0.15],
    [0.95, 0.15, 0.95],
    [0.15, 0.95, 0.95],
    [0.95, 0.55, 0.15],
    [0.55, 0.15, 0.95],
];

/// Margin kept around each patch inside its grid cell; doubles as the
/// translation jitter range.
const CELL_MARGIN: usize = 2;

/// Generate the full dataset: `samples_per_category` images per codebook
/// category, in category-major order, deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<SyntheticSample>, DataError> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.num_categories() * spec.samples_per_category);
    for (category, tuple) in spec.codebook.iter().enumerate() {
        for _ in 0..spec.samples_per_category {
            out.push(render_sample(spec, category, tuple, &mut rng));
        }
    }
    Ok(out)
}

fn render_sample(
    spec: &SyntheticSpec,
    category: usize,
    tuple: &[usize],
    rng: &mut Rng,
) -> SyntheticSample {
    let (h, w) = (spec.image_height, spec.image_width);
    let mut data = vec![0.0; 3 * h * w];
    for v in &mut data {
        *v = spec.noise_level * rng.next_f64();
    }

    let k = spec.num_attributes();
    let (rows, cols) = attribute_grid(k);
    let (cell_h, cell_w) = (h / rows, w / cols);
    let mut boxes = Vec::with_capacity(k);
    for (attr, &value) in tuple.iter().enumerate() {
        let (row, col) = (attr / cols, attr % cols);
        let patch_h = cell_h - CELL_MARGIN;
        let patch_w = cell_w - CELL_MARGIN;
        let (dy, dx, brightness) = if spec.jitter {
            (
                rng.index(CELL_MARGIN + 1),
                rng.index(CELL_MARGIN + 1),
                rng.uniform(0.75, 1.0),
            )
        } else {
            (CELL_MARGIN / 2, CELL_MARGIN / 2, 1.0)
        };
        let patch = AttrBox {
            y0: row * cell_h + dy,
            x0: col * cell_w + dx,
            height: patch_h,
            width: patch_w,
        };
        render_pattern(&mut data, h, w, attr, value, &patch, brightness);
        boxes.push(patch);
    }

    SyntheticSample {
        image: Tensor::new(vec![3, h, w], data).expect("image shape"),
        category,
        attr_labels: tuple.to_vec(),
        attr_boxes: boxes,
    }
}

fn put(data: &mut [f64], h: usize, w: usize, y: usize, x: usize, rgb: [f64; 3], brightness: f64) {
    for (c, v) in rgb.iter().enumerate() {
        data[chw_offset(w, h, c, y, x)] = v * brightness;
    }
}

fn render_pattern(
    data: &mut [f64],
    h: usize,
    w: usize,
    attr: usize,
    value: usize,
    patch: &AttrBox,
    brightness: f64,
) {
    match attr % 3 {
        // solid color fill
        0 => {
            let rgb = PALETTE[value % PALETTE.len()];
            for y in patch.y0..patch.y0 + patch.height {
                for x in patch.x0..patch.x0 + patch.width {
                    put(data, h, w, y, x, rgb, brightness);
                }
            }
        }
        // stripes: orientation selected by value; period 4, phase anchored
        // to the image grid so translation jitter moves the patch boundary
        // but not the stripe phase
        1 => {
            let bright = [0.95, 0.95, 0.95];
            let dark = [0.08, 0.08, 0.08];
            for y in patch.y0..patch.y0 + patch.height {
                for x in patch.x0..patch.x0 + patch.width {
                    let on = match value % 4 {
                        0 => y % 4 < 2,
                        1 => x % 4 < 2,
                        2 => (y + x) % 4 < 2,
                        _ => (y + 4 * w - x) % 4 < 2,
                    };
                    put(data, h, w, y, x, if on { bright } else { dark }, brightness);
                }
            }
        }
        // bright blobs: count = value + 1, fixed slots inside the patch
        _ => {
            let rgb = [0.9, 0.9, 0.9];
            let slots = [(0usize, 0usize), (1, 1), (0, 1), (1, 0)];
            let blob = 2usize;
            for slot in 0..(value + 1).min(slots.len()) {
                let (sy, sx) = slots[slot];
                let y0 = patch.y0 + sy * (patch.height - blob);
                let x0 = patch.x0 + sx * (patch.width - blob);
                for y in y0..y0 + blob {
                    for x in x0..x0 + blob {
                        put(data, h, w, y, x, rgb, brightness);
                    }
                }
            }
        }
    }
}

/// Nearest-centroid classifier on raw pixels; used as a learnability oracle
/// for generated datasets.
pub fn nearest_centroid_accuracy(
    train: &[&SyntheticSample],
    test: &[&SyntheticSample],
    num_categories: usize,
) -> f64 {
    assert!(!train.is_empty() && !test.is_empty());
    let dim = train[0].image.numel();
    let mut centroids = vec![vec![0.0; dim]; num_categories];
    let mut counts = vec![0usize; num_categories];
    for s in train {
        counts[s.category] += 1;
        for (acc, v) in centroids[s.category].iter_mut().zip(s.image.data()) {
            *acc += v;
        }
    }
    for (centroid, &count) in centroids.iter_mut().zip(&counts) {
        if count > 0 {
            for v in centroid.iter_mut() {
                *v /= count as f64;
            }
        }
    }
    let mut correct = 0usize;
    for s in test {
        let mut best = (f64::INFINITY, 0usize);
        for (cat, centroid) in centroids.iter().enumerate() {
            if counts[cat] == 0 {
                continue;
            }
            let dist: f64 = centroid
                .iter()
                .zip(s.image.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best.0 {
                best = (dist, cat);
            }
        }
        if best.1 == s.category {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}
