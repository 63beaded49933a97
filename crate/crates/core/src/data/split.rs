//! Dataset splits: stratified classification, disjoint-class retrieval, and
//! query/gallery re-id. All splits are partitions of their input and
//! deterministic in the supplied generator.

use crate::data::generate::SyntheticSample;
use crate::error::DataError;
use crate::rng::Rng;

/// Role of one sample in a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
    Query,
    Gallery,
}

impl Split {
    pub fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "query" => Some(Split::Query),
            "gallery" => Some(Split::Gallery),
            _ => None,
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

fn by_category(samples: &[SyntheticSample]) -> Vec<Vec<usize>> {
    let num_categories = samples.iter().map(|s| s.category).max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); num_categories];
    for (idx, s) in samples.iter().enumerate() {
        groups[s.category].push(idx);
    }
    groups
}

/// Stratified train/test split: within every category, a shuffled `ratio`
/// fraction (rounded) goes to train, the rest to test.
pub fn split_classification(
    samples: &[SyntheticSample],
    ratio: f64,
    rng: &mut Rng,
) -> Result<Vec<Split>, DataError> {
    if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
        return Err(DataError::Split(format!(
            "split ratio {ratio} must lie strictly between 0 and 1"
        )));
    }
    let mut tags = vec![Split::Test; samples.len()];
    for (category, group) in by_category(samples).into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        if group.len() < 2 {
            return Err(DataError::Split(format!(
                "category {category} has fewer than 2 samples"
            )));
        }
        let mut order = group;
        rng.shuffle(&mut order);
        let n_train = ((order.len() as f64 * ratio).round() as usize).clamp(1, order.len() - 1);
        for &idx in &order[..n_train] {
            tags[idx] = Split::Train;
        }
    }
    Ok(tags)
}

/// Disjoint-class retrieval split: the first half of the category indices
/// (rounded down) become training classes, the rest test classes.
pub fn split_retrieval(samples: &[SyntheticSample]) -> Result<Vec<Split>, DataError> {
    let groups = by_category(samples);
    let num_categories = groups.len();
    if num_categories < 2 {
        return Err(DataError::Split(
            "retrieval split needs at least 2 categories".to_string(),
        ));
    }
    let train_classes = num_categories / 2;
    let mut tags = vec![Split::Test; samples.len()];
    for (category, group) in groups.into_iter().enumerate() {
        let tag = if category < train_classes {
            Split::Train
        } else {
            Split::Test
        };
        for idx in group {
            tags[idx] = tag;
        }
    }
    Ok(tags)
}

/// Re-id split: identities (categories) split disjointly in half; within
/// each test identity the first `queries_per_id` samples become queries and
/// the remainder gallery.
pub fn split_reid(
    samples: &[SyntheticSample],
    queries_per_id: usize,
) -> Result<Vec<Split>, DataError> {
    if queries_per_id == 0 {
        return Err(DataError::Split("queries_per_id must be positive".to_string()));
    }
    let groups = by_category(samples);
    if groups.len() < 2 {
        return Err(DataError::Split(
            "re-id split needs at least 2 identities".to_string(),
        ));
    }
    let train_ids = groups.len() / 2;
    let mut tags = vec![Split::Train; samples.len()];
    for (identity, group) in groups.into_iter().enumerate() {
        if identity < train_ids {
            continue;
        }
        if group.len() <= queries_per_id {
            return Err(DataError::Split(format!(
                "identity {identity} has {} samples, needs more than {queries_per_id}",
                group.len()
            )));
        }
        for (pos, idx) in group.into_iter().enumerate() {
            tags[idx] = if pos < queries_per_id {
                Split::Query
            } else {
                Split::Gallery
            };
        }
    }
    Ok(tags)
}

/// Indices carrying a given tag, in sample order.
pub fn indices_of(tags: &[Split], split: Split) -> Vec<usize> {
    tags.iter()
        .enumerate()
        .filter_map(|(i, &t)| (t == split).then_some(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate::generate;
    use crate::data::spec::{enumerate_tuples, AttributeSpec, SyntheticSpec};

    fn spec_with(categories: usize, samples_per_category: usize) -> SyntheticSpec {
        let cards = vec![4, 4, 4, 4];
        SyntheticSpec {
            attributes: (0..4)
                .map(|i| AttributeSpec {
                    name: format!("a{i}"),
                    cardinality: 4,
                })
                .collect(),
            image_height: 16,
            image_width: 16,
            codebook: enumerate_tuples(&cards).into_iter().take(categories).collect(),
            noise_level: 0.0,
            samples_per_category,
            jitter: false,
            seed: 1,
        }
    }

    #[test]
    fn classification_split_is_stratified_half() {
        let samples = generate(&spec_with(4, 10)).unwrap();
        let tags = split_classification(&samples, 0.5, &mut Rng::new(5)).unwrap();
        for category in 0..4 {
            let train = samples
                .iter()
                .zip(&tags)
                .filter(|(s, &t)| s.category == category && t == Split::Train)
                .count();
            assert_eq!(train, 5);
        }
    }

    #[test]
    fn classification_split_is_a_partition() {
        let samples = generate(&spec_with(4, 7)).unwrap();
        let tags = split_classification(&samples, 0.6, &mut Rng::new(5)).unwrap();
        assert_eq!(tags.len(), samples.len());
        let train = indices_of(&tags, Split::Train);
        let test = indices_of(&tags, Split::Test);
        assert_eq!(train.len() + test.len(), samples.len());
        // per-class counts match within one sample
        for category in 0..4 {
            let n_train = train.iter().filter(|&&i| samples[i].category == category).count();
            let expect = 7.0 * 0.6;
            assert!((n_train as f64 - expect).abs() <= 1.0);
        }
    }

    #[test]
    fn classification_split_rejects_tiny_categories() {
        let samples = generate(&spec_with(3, 1)).unwrap();
        assert!(split_classification(&samples, 0.5, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn retrieval_split_halves_classes_disjointly() {
        let samples = generate(&spec_with(4, 3)).unwrap();
        let tags = split_retrieval(&samples).unwrap();
        for (s, t) in samples.iter().zip(&tags) {
            let expect = if s.category < 2 { Split::Train } else { Split::Test };
            assert_eq!(*t, expect);
        }
    }

    #[test]
    fn retrieval_split_mirrors_98_98_protocol() {
        let samples = generate(&spec_with(196, 2)).unwrap();
        let tags = split_retrieval(&samples).unwrap();
        let train_classes: std::collections::HashSet<usize> = indices_of(&tags, Split::Train)
            .into_iter()
            .map(|i| samples[i].category)
            .collect();
        let test_classes: std::collections::HashSet<usize> = indices_of(&tags, Split::Test)
            .into_iter()
            .map(|i| samples[i].category)
            .collect();
        assert_eq!(train_classes.len(), 98);
        assert_eq!(test_classes.len(), 98);
        assert!(train_classes.is_disjoint(&test_classes));
    }

    #[test]
    fn reid_split_counts() {
        let samples = generate(&spec_with(4, 4)).unwrap();
        let tags = split_reid(&samples, 1).unwrap();
        assert_eq!(indices_of(&tags, Split::Train).len(), 8);
        assert_eq!(indices_of(&tags, Split::Query).len(), 2);
        assert_eq!(indices_of(&tags, Split::Gallery).len(), 6);
    }

    #[test]
    fn reid_queries_have_gallery_matches() {
        let samples = generate(&spec_with(6, 5)).unwrap();
        let tags = split_reid(&samples, 2).unwrap();
        let queries = indices_of(&tags, Split::Query);
        let gallery = indices_of(&tags, Split::Gallery);
        assert!(queries
            .iter()
            .all(|&q| gallery.iter().any(|&g| samples[g].category == samples[q].category)));
        // disjoint by construction
        assert!(queries.iter().all(|q| !gallery.contains(q)));
    }

    #[test]
    fn reid_split_rejects_insufficient_samples() {
        let samples = generate(&spec_with(4, 2)).unwrap();
        assert!(split_reid(&samples, 2).is_err());
    }
}
