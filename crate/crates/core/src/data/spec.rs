//! Generator specification: attribute schema, category codebook, rendering
//! parameters.

use crate::error::DataError;

/// One attribute's name and label cardinality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSpec {
    pub name: String,
    pub cardinality: usize,
}

/// Full specification of a synthetic dataset. Generation is a pure function
/// of this struct, seed included.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub attributes: Vec<AttributeSpec>,
    pub image_height: usize,
    pub image_width: usize,
    /// Category codebook: one attribute-value tuple per category. Tuples
    /// must be unique, so any two categories differ in at least one value.
    pub codebook: Vec<Vec<usize>>,
    /// Background noise amplitude in `[0, 1)`.
    pub noise_level: f64,
    pub samples_per_category: usize,
    /// Per-sample translation and brightness jitter inside each attribute
    /// region. Off makes all samples of a category identical at zero noise.
    pub jitter: bool,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Desk-scale default: 4 attributes with cardinalities (3, 3, 2, 2),
    /// the first 24 of the 36 possible tuples as categories (so many pairs
    /// differ in exactly one attribute), 16x16 images, 40 samples per
    /// category, noise 0.05.
    pub fn default_toy() -> Self {
        let attributes = vec![
            AttributeSpec { name: "color".to_string(), cardinality: 3 },
            AttributeSpec { name: "stripe".to_string(), cardinality: 3 },
            AttributeSpec { name: "blob".to_string(), cardinality: 2 },
            AttributeSpec { name: "tint".to_string(), cardinality: 2 },
        ];
        let cards: Vec<usize> = attributes.iter().map(|a| a.cardinality).collect();
        SyntheticSpec {
            attributes,
            image_height: 16,
            image_width: 16,
            codebook: enumerate_tuples(&cards).into_iter().take(24).collect(),
            noise_level: 0.05,
            samples_per_category: 40,
            jitter: true,
            seed: 7,
        }
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn num_categories(&self) -> usize {
        self.codebook.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.cardinality).collect()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let k = self.num_attributes();
        if k == 0 {
            return Err(spec_err("attributes", "at least one attribute required"));
        }
        for attr in &self.attributes {
            if attr.cardinality < 2 {
                return Err(spec_err(
                    "attributes",
                    format!("attribute `{}` needs cardinality >= 2", attr.name),
                ));
            }
        }
        if self.codebook.is_empty() {
            return Err(spec_err("codebook", "at least one category required"));
        }
        let mut seen = std::collections::HashSet::new();
        for (idx, tuple) in self.codebook.iter().enumerate() {
            if tuple.len() != k {
                return Err(spec_err(
                    "codebook",
                    format!("category {idx} has {} values, expected {k}", tuple.len()),
                ));
            }
            for (a, (&value, attr)) in tuple.iter().zip(&self.attributes).enumerate() {
                if value >= attr.cardinality {
                    return Err(spec_err(
                        "codebook",
                        format!(
                            "category {idx}: attribute {a} value {value} exceeds cardinality {}",
                            attr.cardinality
                        ),
                    ));
                }
            }
            if !seen.insert(tuple.clone()) {
                return Err(spec_err(
                    "codebook",
                    format!("duplicate attribute tuple at category {idx}"),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.noise_level) {
            return Err(spec_err("noise_level", "must lie in [0, 1)"));
        }
        if self.samples_per_category == 0 {
            return Err(spec_err("samples_per_category", "must be positive"));
        }
        let (rows, cols) = attribute_grid(k);
        if self.image_height / rows < 4 || self.image_width / cols < 4 {
            return Err(spec_err(
                "image_size",
                format!(
                    "image {}x{} too small for {k} attribute regions (need >= 4 pixels per cell)",
                    self.image_height, self.image_width
                ),
            ));
        }
        Ok(())
    }
}

fn spec_err(field: &str, message: impl Into<String>) -> DataError {
    DataError::Spec {
        field: field.to_string(),
        message: message.into(),
    }
}

/// All attribute-value tuples in lexicographic order.
pub fn enumerate_tuples(cardinalities: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = cardinalities.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut tuple = vec![0usize; cardinalities.len()];
    for _ in 0..total {
        out.push(tuple.clone());
        for pos in (0..cardinalities.len()).rev() {
            tuple[pos] += 1;
            if tuple[pos] < cardinalities[pos] {
                break;
            }
            tuple[pos] = 0;
        }
    }
    out
}

/// Layout of attribute regions: a near-square `(rows, cols)` grid with
/// `rows * cols >= k`.
pub fn attribute_grid(k: usize) -> (usize, usize) {
    let cols = (k as f64).sqrt().ceil() as usize;
    let rows = k.div_ceil(cols);
    (rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_toy_is_valid() {
        let spec = SyntheticSpec::default_toy();
        spec.validate().unwrap();
        assert_eq!(spec.num_categories(), 24);
        assert_eq!(spec.cardinalities(), vec![3, 3, 2, 2]);
    }

    #[test]
    fn tuples_enumerate_lexicographically() {
        let tuples = enumerate_tuples(&[2, 2]);
        assert_eq!(
            tuples,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
    }

    #[test]
    fn all_pairs_differ_in_at_least_one_value() {
        let tuples = enumerate_tuples(&[2, 2]);
        for i in 0..tuples.len() {
            for j in i + 1..tuples.len() {
                let hamming: usize = tuples[i]
                    .iter()
                    .zip(&tuples[j])
                    .filter(|(a, b)| a != b)
                    .count();
                assert!(hamming >= 1);
            }
        }
    }

    #[test]
    fn duplicate_codebook_tuple_rejected() {
        let mut spec = SyntheticSpec::default_toy();
        spec.codebook[1] = spec.codebook[0].clone();
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("codebook"));
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn grid_layouts() {
        assert_eq!(attribute_grid(1), (1, 1));
        assert_eq!(attribute_grid(2), (1, 2));
        assert_eq!(attribute_grid(4), (2, 2));
        assert_eq!(attribute_grid(5), (2, 3));
    }
}
