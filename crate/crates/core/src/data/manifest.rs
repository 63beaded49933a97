//! Dataset manifest: a line-oriented UTF-8 CSV with `#`-prefixed header
//! lines, one row per sample. Paths are relative to the manifest file.
//!
//! ```text
//! #A3M-MANIFEST v1,K=4
//! #image 3x16x16
//! #categories 24
//! #attr color,3
//! ...
//! img/c000_s000.img1,train,0,0,0,0,0
//! ```

use std::path::{Path, PathBuf};

use crate::data::split::Split;
use crate::error::DataError;
use crate::tensor::Tensor;

/// One manifest row: file path (relative), split tag, category, K attribute
/// labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub split: Split,
    pub category: usize,
    pub attr_labels: Vec<usize>,
}

/// Parsed manifest: attribute schema, image shape, category count, rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub attr_names: Vec<String>,
    pub attr_cardinalities: Vec<usize>,
    /// `(C, H, W)`.
    pub image_shape: (usize, usize, usize),
    pub num_categories: usize,
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn num_attributes(&self) -> usize {
        self.attr_names.len()
    }

    /// Serialize to the manifest text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#A3M-MANIFEST v1,K={}\n", self.num_attributes()));
        let (c, h, w) = self.image_shape;
        out.push_str(&format!("#image {c}x{h}x{w}\n"));
        out.push_str(&format!("#categories {}\n", self.num_categories));
        for (name, card) in self.attr_names.iter().zip(&self.attr_cardinalities) {
            out.push_str(&format!("#attr {name},{card}\n"));
        }
        for row in &self.rows {
            out.push_str(&format!("{},{},{}", row.path, row.split, row.category));
            for &label in &row.attr_labels {
                out.push_str(&format!(",{label}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_text()).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Parse and validate a manifest. Labels must respect the declared
    /// cardinalities and every referenced image file must exist.
    pub fn read(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let manifest = Self::parse(&text, path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for (line_no, row) in manifest.rows.iter().enumerate() {
            let file = dir.join(&row.path);
            if !file.is_file() {
                return Err(DataError::Io {
                    path: file.display().to_string(),
                    source: std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("referenced from manifest line {}", manifest.header_lines() + line_no + 1),
                    ),
                });
            }
        }
        Ok(manifest)
    }

    fn header_lines(&self) -> usize {
        3 + self.num_attributes()
    }

    /// Parse manifest text. `origin` is used only for error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, DataError> {
        let err = |line: usize, message: String| DataError::Parse {
            path: origin.display().to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();

        let (_, first) = lines
            .next()
            .ok_or_else(|| err(1, "empty manifest".to_string()))?;
        let k: usize = first
            .strip_prefix("#A3M-MANIFEST v1,K=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(1, format!("bad manifest header `{first}`")))?;

        let mut image_shape = None;
        let mut num_categories = None;
        let mut attr_names = Vec::new();
        let mut attr_cardinalities = Vec::new();
        let mut rows = Vec::new();

        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(dims) = rest.strip_prefix("image ") {
                    let parts: Vec<usize> = dims
                        .split('x')
                        .map(|p| p.parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| err(line_no, format!("bad image dims `{dims}`")))?;
                    if parts.len() != 3 {
                        return Err(err(line_no, format!("bad image dims `{dims}`")));
                    }
                    image_shape = Some((parts[0], parts[1], parts[2]));
                } else if let Some(n) = rest.strip_prefix("categories ") {
                    num_categories = Some(
                        n.parse::<usize>()
                            .map_err(|_| err(line_no, format!("bad category count `{n}`")))?,
                    );
                } else if let Some(attr) = rest.strip_prefix("attr ") {
                    let (name, card) = attr
                        .split_once(',')
                        .ok_or_else(|| err(line_no, format!("bad attr header `{attr}`")))?;
                    attr_names.push(name.to_string());
                    attr_cardinalities.push(
                        card.parse::<usize>()
                            .map_err(|_| err(line_no, format!("bad cardinality `{card}`")))?,
                    );
                } else {
                    return Err(err(line_no, format!("unknown header line `{line}`")));
                }
                continue;
            }

            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 + k {
                return Err(err(
                    line_no,
                    format!("expected {} fields, found {}", 3 + k, fields.len()),
                ));
            }
            let split = Split::parse(fields[1])
                .ok_or_else(|| err(line_no, format!("unknown split tag `{}`", fields[1])))?;
            let category = fields[2]
                .parse::<usize>()
                .map_err(|_| err(line_no, format!("bad category `{}`", fields[2])))?;
            let attr_labels: Vec<usize> = fields[3..]
                .iter()
                .map(|f| f.parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| err(line_no, "bad attribute label".to_string()))?;
            rows.push((line_no, ManifestRow {
                path: fields[0].to_string(),
                split,
                category,
                attr_labels,
            }));
        }

        let image_shape =
            image_shape.ok_or_else(|| err(1, "missing #image header".to_string()))?;
        let num_categories =
            num_categories.ok_or_else(|| err(1, "missing #categories header".to_string()))?;
        if attr_names.len() != k {
            return Err(err(
                1,
                format!("{} #attr headers for K={k}", attr_names.len()),
            ));
        }

        for (line_no, row) in &rows {
            if row.category >= num_categories {
                return Err(err(
                    *line_no,
                    format!("category {} out of range {num_categories}", row.category),
                ));
            }
            for (a, (&label, &card)) in row
                .attr_labels
                .iter()
                .zip(&attr_cardinalities)
                .enumerate()
            {
                if label >= card {
                    return Err(err(
                        *line_no,
                        format!("attribute {a} label {label} out of range {card}"),
                    ));
                }
            }
        }

        Ok(DatasetManifest {
            attr_names,
            attr_cardinalities,
            image_shape,
            num_categories,
            rows: rows.into_iter().map(|(_, r)| r).collect(),
        })
    }

    /// Load one row's image from disk, dispatching on file extension.
    pub fn load_image(&self, manifest_path: &Path, row: &ManifestRow) -> Result<Tensor, DataError> {
        let dir = manifest_path.parent().unwrap_or(Path::new("."));
        let file: PathBuf = dir.join(&row.path);
        let image = if row.path.ends_with(".ppm") {
            super::image_io::read_ppm(&file)?
        } else {
            super::image_io::read_img1(&file)?
        };
        let (c, h, w) = self.image_shape;
        if image.shape() != [c, h, w] {
            return Err(DataError::Image {
                path: file.display().to_string(),
                message: format!(
                    "image shape {:?} does not match manifest {c}x{h}x{w}",
                    image.shape()
                ),
            });
        }
        Ok(image)
    }
}

/// Write a generated dataset to disk: images under `dir/img/`, manifest at
/// `dir/manifest.csv`. Returns the manifest that was written.
pub fn write_dataset(
    dir: &Path,
    samples: &[super::SyntheticSample],
    tags: &[super::Split],
    spec: &super::SyntheticSpec,
    format: super::ImageFormat,
) -> Result<DatasetManifest, DataError> {
    assert_eq!(samples.len(), tags.len());
    let img_dir = dir.join("img");
    std::fs::create_dir_all(&img_dir).map_err(|e| DataError::Io {
        path: img_dir.display().to_string(),
        source: e,
    })?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut per_category = vec![0usize; spec.num_categories()];
    for (sample, &tag) in samples.iter().zip(tags) {
        let ordinal = per_category[sample.category];
        per_category[sample.category] += 1;
        let name = format!(
            "img/c{:03}_s{:03}.{}",
            sample.category,
            ordinal,
            format.extension()
        );
        let file = dir.join(&name);
        match format {
            super::ImageFormat::Img1 => super::write_img1(&file, &sample.image)?,
            super::ImageFormat::Ppm => super::write_ppm(&file, &sample.image)?,
        }
        rows.push(ManifestRow {
            path: name,
            split: tag,
            category: sample.category,
            attr_labels: sample.attr_labels.clone(),
        });
    }
    let manifest = DatasetManifest {
        attr_names: spec.attributes.iter().map(|a| a.name.clone()).collect(),
        attr_cardinalities: spec.cardinalities(),
        image_shape: (3, spec.image_height, spec.image_width),
        num_categories: spec.num_categories(),
        rows,
    };
    manifest.write(&dir.join("manifest.csv"))?;
    Ok(manifest)
}
