//! Seeded k-means and normalized mutual information.

use crate::rng::Rng;

/// K-means with k-means++ initialization. Deterministic given the seed;
/// runs until the squared center shift drops below `1e-9` or 100 iterations.
/// An empty cluster is re-seeded on the point farthest from its assigned
/// center rather than erroring.
pub fn kmeans(points: &[Vec<f64>], n_clusters: usize, seed: u64) -> Vec<usize> {
    assert!(n_clusters >= 1 && !points.is_empty());
    let n_clusters = n_clusters.min(points.len());
    let dim = points[0].len();
    let mut rng = Rng::new(seed);

    // k-means++ seeding: first center uniform, then proportional to the
    // squared distance to the nearest chosen center.
    let mut centers: Vec<Vec<f64>> = vec![points[rng.index(points.len())].clone()];
    let mut dist2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < n_clusters {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            rng.index(points.len())
        } else {
            let mut target = rng.next_f64() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in dist2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centers.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, centers.last().unwrap());
            if d < dist2[i] {
                dist2[i] = d;
            }
        }
    }

    let mut assignment = vec![0usize; points.len()];
    for _ in 0..100 {
        // assign, ties to the lowest center index
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(p, center);
                if d < best.0 {
                    best = (d, c);
                }
            }
            assignment[i] = best.1;
        }
        // recompute centers
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        // re-seed empty clusters on the farthest point
        for c in 0..centers.len() {
            if counts[c] == 0 {
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, sq_dist(p, &centers[assignment[i]])))
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap();
                sums[c] = points[far].clone();
                counts[c] = 1;
            }
        }
        let mut shift = 0.0_f64;
        for (c, (sum, &count)) in centers.iter_mut().zip(sums.iter().zip(&counts)) {
            let new: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
            shift = shift.max(sq_dist(c, &new));
            *c = new;
        }
        if shift < 1e-9 {
            break;
        }
    }
    // final assignment against converged centers
    for (i, p) in points.iter().enumerate() {
        let mut best = (f64::INFINITY, 0usize);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best.0 {
                best = (d, c);
            }
        }
        assignment[i] = best.1;
    }
    assignment
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Normalized mutual information between two labelings:
/// `I(a; b) / sqrt(H(a) H(b))` with natural logarithms, in `[0, 1]`.
/// Returns 0 when either labeling carries no information.
pub fn nmi_from_assignments(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(!a.is_empty());
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0usize; kb]; ka];
    let mut count_a = vec![0usize; ka];
    let mut count_b = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1;
        count_a[x] += 1;
        count_b[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            if joint[x][y] == 0 {
                continue;
            }
            let pxy = joint[x][y] as f64 / n;
            let px = count_a[x] as f64 / n;
            let py = count_b[y] as f64 / n;
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    let ha = entropy(&count_a, n);
    let hb = entropy(&count_b, n);
    if mi <= 0.0 || ha <= 0.0 || hb <= 0.0 {
        return 0.0;
    }
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Clustering quality of embeddings against ground-truth labels: k-means
/// into `n_clusters`, then NMI between the clustering and the labels.
pub fn nmi(embeddings: &[Vec<f64>], labels: &[usize], n_clusters: usize, seed: u64) -> f64 {
    let assignment = kmeans(embeddings, n_clusters, seed);
    nmi_from_assignments(&assignment, labels)
}
