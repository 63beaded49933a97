//! Ranking metrics over embeddings: re-id mAP/CMC and Recall@K.
//!
//! All rankings use Euclidean distance, ascending, with ties broken by
//! gallery index so results are deterministic.

use crate::error::TrainError;

/// An embedded item: feature vector, class/identity label, and a unique
/// sample id used to exclude self-matches.
#[derive(Debug, Clone)]
pub struct EmbeddedItem {
    pub embedding: Vec<f64>,
    pub label: usize,
    pub sample_id: usize,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// CMC rank cutoffs reported by [`reid_map_cmc`].
pub const CMC_RANKS: [usize; 4] = [1, 5, 10, 20];

/// Re-id evaluation: for each query, rank the gallery (self-sample excluded)
/// by distance; average precision averages the precision at each relevant
/// hit's rank; CMC@r is the fraction of queries with a hit in the top r.
pub fn reid_map_cmc(
    queries: &[EmbeddedItem],
    gallery: &[EmbeddedItem],
) -> Result<(f64, [f64; 4]), TrainError> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(TrainError::Validation(
            "re-id evaluation needs non-empty query and gallery sets".to_string(),
        ));
    }
    let mut map = 0.0;
    let mut cmc_hits = [0usize; 4];
    for query in queries {
        let mut ranked: Vec<(f64, usize)> = gallery
            .iter()
            .enumerate()
            .filter(|(_, g)| g.sample_id != query.sample_id)
            .map(|(idx, g)| (euclidean(&query.embedding, &g.embedding), idx))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

        let relevant_total = ranked
            .iter()
            .filter(|(_, idx)| gallery[*idx].label == query.label)
            .count();
        if relevant_total == 0 {
            return Err(TrainError::Validation(format!(
                "query with label {} has no gallery match; average precision undefined",
                query.label
            )));
        }

        let mut hits = 0usize;
        let mut precision_sum = 0.0;
        let mut first_hit_rank = usize::MAX;
        for (rank0, (_, idx)) in ranked.iter().enumerate() {
            if gallery[*idx].label == query.label {
                hits += 1;
                precision_sum += hits as f64 / (rank0 + 1) as f64;
                if first_hit_rank == usize::MAX {
                    first_hit_rank = rank0 + 1;
                }
            }
        }
        map += precision_sum / relevant_total as f64;
        for (slot, &r) in CMC_RANKS.iter().enumerate() {
            if first_hit_rank <= r {
                cmc_hits[slot] += 1;
            }
        }
    }
    let n = queries.len() as f64;
    let cmc = [
        cmc_hits[0] as f64 / n,
        cmc_hits[1] as f64 / n,
        cmc_hits[2] as f64 / n,
        cmc_hits[3] as f64 / n,
    ];
    Ok((map / n, cmc))
}

/// Recall@K over a single embedded set: for each item, its K nearest
/// neighbours (self excluded by index); recall is the fraction of items
/// with at least one same-label neighbour in the top K.
pub fn recall_at_k(items: &[EmbeddedItem], ks: &[usize]) -> Result<Vec<(usize, f64)>, TrainError> {
    if items.len() < 2 {
        return Err(TrainError::Validation(
            "recall@K needs at least 2 samples".to_string(),
        ));
    }
    let max_k = ks.iter().copied().max().unwrap_or(0).min(items.len() - 1);
    let mut hit_counts = vec![0usize; ks.len()];
    for (i, item) in items.iter().enumerate() {
        let mut ranked: Vec<(f64, usize)> = items
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(j, other)| (euclidean(&item.embedding, &other.embedding), j))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        // rank of the first same-label neighbour, 1-based
        let first_match = ranked[..max_k.min(ranked.len())]
            .iter()
            .position(|(_, j)| items[*j].label == item.label)
            .map(|p| p + 1);
        if let Some(rank) = first_match {
            for (slot, &k) in ks.iter().enumerate() {
                if rank <= k {
                    hit_counts[slot] += 1;
                }
            }
        }
    }
    Ok(ks
        .iter()
        .zip(hit_counts)
        .map(|(&k, hits)| (k, hits as f64 / items.len() as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(embedding: Vec<f64>, label: usize, sample_id: usize) -> EmbeddedItem {
        EmbeddedItem {
            embedding,
            label,
            sample_id,
        }
    }

    #[test]
    fn unique_nearest_match_gives_perfect_ap() {
        let query = vec![item(vec![0.0, 0.0], 1, 100)];
        let gallery = vec![
            item(vec![0.1, 0.0], 1, 0),
            item(vec![5.0, 0.0], 2, 1),
            item(vec![6.0, 0.0], 2, 2),
            item(vec![7.0, 0.0], 3, 3),
            item(vec![8.0, 0.0], 3, 4),
        ];
        let (map, cmc) = reid_map_cmc(&query, &gallery).unwrap();
        assert_eq!(map, 1.0);
        assert_eq!(cmc, [1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_relevant_at_rank_two_gives_half_ap() {
        let query = vec![item(vec![0.0], 1, 100)];
        let gallery = vec![
            item(vec![0.1], 2, 0),
            item(vec![0.2], 1, 1),
            item(vec![0.3], 3, 2),
            item(vec![0.4], 4, 3),
        ];
        let (map, cmc) = reid_map_cmc(&query, &gallery).unwrap();
        assert_eq!(map, 0.5);
        assert_eq!(cmc[0], 0.0);
        assert_eq!(cmc[1], 1.0);
    }

    #[test]
    fn self_sample_is_excluded() {
        let query = vec![item(vec![0.0], 1, 7)];
        let gallery = vec![
            item(vec![0.0], 1, 7),  // same sample: must not count
            item(vec![1.0], 1, 8),
            item(vec![0.5], 2, 9),
        ];
        let (map, _) = reid_map_cmc(&query, &gallery).unwrap();
        // ranked: id9 at 0.5 (wrong), id8 at 1.0 (hit at rank 2)
        assert_eq!(map, 0.5);
    }

    #[test]
    fn query_without_gallery_match_is_an_error() {
        let query = vec![item(vec![0.0], 42, 100)];
        let gallery = vec![item(vec![1.0], 1, 0)];
        assert!(reid_map_cmc(&query, &gallery).is_err());
    }

    #[test]
    fn recall_two_same_label_samples() {
        let items = vec![item(vec![0.0], 1, 0), item(vec![1.0], 1, 1)];
        let recalls = recall_at_k(&items, &[1]).unwrap();
        assert_eq!(recalls, vec![(1, 1.0)]);
    }

    #[test]
    fn recall_all_unique_labels_is_zero() {
        let items = vec![
            item(vec![0.0], 0, 0),
            item(vec![1.0], 1, 1),
            item(vec![2.0], 2, 2),
        ];
        for (_, r) in recall_at_k(&items, &[1, 2]).unwrap() {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn distance_ties_break_by_index() {
        // two gallery items equidistant from the query; lower index wins
        let query = vec![item(vec![0.0], 1, 100)];
        let gallery = vec![item(vec![1.0], 2, 0), item(vec![-1.0], 1, 1)];
        let (map, cmc) = reid_map_cmc(&query, &gallery).unwrap();
        // wrong label ranks first by index, hit at rank 2
        assert_eq!(map, 0.5);
        assert_eq!(cmc[0], 0.0);
    }
}
