//! k-means with k-means++ seeding, and matching of clusters to classes.

use rand::Rng;

/// Result of [`kmeans`].
#[derive(Debug, Clone)]
pub struct KMeans {
    /// `[k, d]` row-major.
    pub centroids: Vec<f64>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
    /// Number of times an empty cluster was re-seeded.
    pub reseeds: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[f64], d: usize) -> (usize, f64) {
    centroids
        .chunks(d)
        .enumerate()
        .map(|(j, c)| (j, sq_dist(p, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Clusters the rows of `points[n, d]` into `k` groups.
///
/// Seeding is k-means++; Lloyd iterations stop after `max_iter` or once no
/// centroid moves more than `tol`. A cluster left empty is re-seeded with
/// the point farthest from its current centroid.
///
/// # Panics
/// If `n < k`, `k == 0` or `points.len() != n·d`.
pub fn kmeans<R: Rng + ?Sized>(points: &[f64], n: usize, d: usize, k: usize, max_iter: usize, tol: f64, rng: &mut R) -> KMeans {
    assert!(k > 0 && n >= k, "k-means needs 1 <= k <= n (k={k}, n={n})");
    assert_eq!(points.len(), n * d);
    let row = |i: usize| &points[i * d..(i + 1) * d];

    let mut centroids = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut best_sq: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for _ in 1..k {
        let total: f64 = best_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in best_sq.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Guard against rounding leaving us on a zero-weight point.
            if best_sq[chosen] == 0.0 {
                chosen = best_sq.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, b) in best_sq.iter_mut().enumerate() {
            *b = b.min(sq_dist(row(i), &c));
        }
        centroids.extend_from_slice(&c);
    }

    let mut assignment = vec![0; n];
    let mut iterations = 0;
    let mut reseeds = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (j, dd) = nearest(row(i), &centroids, d);
            assignment[i] = j;
            dist[i] = dd;
        }
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let j = assignment[i];
            counts[j] += 1;
            for f in 0..d {
                sums[j * d + f] += points[i * d + f];
            }
        }
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            reseeds += 1;
            let far = (0..n)
                .filter(|&i| !taken[i] && counts[assignment[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                taken[i] = true;
                let old = assignment[i];
                counts[old] -= 1;
                for f in 0..d {
                    sums[old * d + f] -= points[i * d + f];
                    sums[j * d + f] = points[i * d + f];
                }
                counts[j] = 1;
                assignment[i] = j;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let new: Vec<f64> = (0..d).map(|f| sums[j * d + f] * inv).collect();
            shift = shift.max(sq_dist(&new, &centroids[j * d..(j + 1) * d]).sqrt());
            centroids[j * d..(j + 1) * d].copy_from_slice(&new);
        }
        if shift <= tol {
            break;
        }
    }
    for i in 0..n {
        assignment[i] = nearest(row(i), &centroids, d).0;
    }
    KMeans {
        centroids,
        assignment,
        iterations,
        reseeds,
    }
}

/// Greedy maximum-overlap matching of clusters to classes.
///
/// Repeatedly pairs the (cluster, class) cell with the largest positive
/// count among unused rows and columns; ties go to the lowest cluster, then
/// class. Returns, per class, the matched cluster if any.
pub fn match_clusters(assignment: &[usize], labels: &[usize], clusters: usize, classes: usize) -> Vec<Option<usize>> {
    let mut counts = vec![0usize; clusters * classes];
    for (&a, &y) in assignment.iter().zip(labels) {
        counts[a * classes + y] += 1;
    }
    let mut cluster_used = vec![false; clusters];
    let mut out = vec![None; classes];
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for c in 0..clusters {
            if cluster_used[c] {
                continue;
            }
            for y in 0..classes {
                let v = counts[c * classes + y];
                if out[y].is_some() || v == 0 {
                    continue;
                }
                if best.is_none_or(|(_, _, bv)| v > bv) {
                    best = Some((c, y, v));
                }
            }
        }
        let Some((c, y, _)) = best else { break };
        cluster_used[c] = true;
        out[y] = Some(c);
    }
    out
}

/// Cluster centers `[d, k]` (row-major, column `j` for class `j`) from
/// k-means over `embeddings[n, d]`, matched to the given labels.
///
/// A class left without a cluster takes the mean embedding of the samples
/// labeled with it, or, when it has none, an unused centroid.
pub fn init_cluster_centers<R: Rng + ?Sized>(embeddings: &[f64], n: usize, d: usize, labels: &[usize], k: usize, rng: &mut R) -> (Vec<f64>, KMeans) {
    let km = kmeans(embeddings, n, d, k, 100, 1e-4, rng);
    let matched = match_clusters(&km.assignment, labels, k, k);
    let mut unused: Vec<usize> = (0..k).filter(|c| !matched.contains(&Some(*c))).collect();
    unused.reverse();
    let mut centers = vec![0.0; d * k];
    for (class, m) in matched.iter().enumerate() {
        let col: Vec<f64> = match m {
            Some(c) => km.centroids[c * d..(c + 1) * d].to_vec(),
            None => {
                let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                if members.is_empty() {
                    let c = unused.pop().expect("an unmatched class leaves a cluster unused");
                    km.centroids[c * d..(c + 1) * d].to_vec()
                } else {
                    let mut mean = vec![0.0; d];
                    for &i in &members {
                        for f in 0..d {
                            mean[f] += embeddings[i * d + f];
                        }
                    }
                    mean.iter_mut().for_each(|v| *v /= members.len() as f64);
                    mean
                }
            }
        };
        for f in 0..d {
            centers[f * k + class] = col[f];
        }
    }
    (centers, km)
}
