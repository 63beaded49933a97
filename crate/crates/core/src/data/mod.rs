//! Procedural attributed-image datasets: generation, splits, and file I/O.

mod generate;
mod image_io;
mod manifest;
mod spec;
mod split;

pub use generate::{generate, nearest_centroid_accuracy, AttrBox, SyntheticSample};
pub use image_io::{
    read_img1, read_pgm, read_ppm, write_img1, write_pgm, write_ppm, ImageFormat, IMG1_MAGIC,
};
pub use manifest::{write_dataset, DatasetManifest, ManifestRow};
pub use spec::{attribute_grid, enumerate_tuples, AttributeSpec, SyntheticSpec};
pub use split::{indices_of, split_classification, split_reid, split_retrieval, Split};
