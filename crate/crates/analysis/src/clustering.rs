//! Seeded k-means and evidence-accumulation consensus clustering.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{check_dims, sq_dist, AnalysisError, Result};

const MAX_LLOYD_ITERATIONS: usize = 300;

pub const DEFAULT_THRESHOLD: f64 = 0.10;

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    chosen = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            chosen.expect("positive total has a positive entry")
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Relabels so that clusters are numbered in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len();
                map.push((l, to));
                to
            }
        })
        .collect()
}

/// Lloyd's algorithm from a seeded k-means++ start. Labels are canonical.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(AnalysisError::Empty("kmeans"));
    }
    if k == 0 || k > points.len() {
        return Err(AnalysisError::InvalidK { k, n: points.len() });
    }
    let d = points[0].len();
    check_dims(points, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (label, p) in labels.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centroids);
            if *label != c {
                *label = c;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Restart the empty cluster at the point worst served by its centroid.
                let (far, far_d) = (0..points.len())
                    .map(|i| (i, sq_dist(&points[i], &centroids[labels[i]])))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("points non-empty");
                if far_d == 0.0 {
                    // Every point sits on its centroid; nothing left to split.
                    continue;
                }
                log::debug!("kmeans: cluster {c} empty, reseeding from point {far}");
                centroids[c] = points[far].clone();
                labels[far] = c;
                changed = true;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    Ok(canonical_labels(&labels))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusClustering {
    /// Pairwise fraction of runs in which two points shared a label.
    pub co_occurrence: Vec<Vec<f64>>,
    /// Point indices per cluster, each sorted, ordered by smallest member.
    pub clusters: Vec<Vec<usize>>,
    pub threshold: f64,
    pub runs: usize,
}

impl ConsensusClustering {
    /// Cluster number of every point.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.co_occurrence.len()];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = c;
            }
        }
        labels
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn run_seed(seed: u64, k: usize, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k as u64) << 32) | run as u64);
    rng.random()
}

/// Evidence accumulation over `runs_per_k` k-means runs for every k in
/// `k_values`. Points are clustered in a canonical order so the result does
/// not depend on input order.
pub fn consensus_cluster(
    points: &[Vec<f64>],
    k_values: &[usize],
    runs_per_k: usize,
    seed: u64,
    threshold: f64,
) -> Result<ConsensusClustering> {
    let n = points.len();
    if n == 0 {
        return Err(AnalysisError::Empty("consensus_cluster"));
    }
    check_dims(points, points[0].len())?;
    let ks: Vec<usize> = k_values.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
    if ks.is_empty() || runs_per_k == 0 {
        let k = k_values.first().copied().unwrap_or(0);
        return Err(AnalysisError::InvalidK { k, n });
    }
    if ks.len() < k_values.len() {
        log::warn!("consensus: skipping k values outside 1..={n}");
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lexicographic(&points[a], &points[b]));
    let sorted: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();

    let mut counts = vec![vec![0u32; n]; n];
    let mut total = 0u32;
    for &k in &ks {
        for run in 0..runs_per_k {
            let labels = kmeans(&sorted, k, run_seed(seed, k, run))?;
            for a in 0..n {
                for b in a..n {
                    if labels[a] == labels[b] {
                        counts[order[a]][order[b]] += 1;
                        if a != b {
                            counts[order[b]][order[a]] += 1;
                        }
                    }
                }
            }
            total += 1;
        }
    }
    let co_occurrence: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / total as f64).collect())
        .collect();

    let mut component = vec![usize::MAX; n];
    let mut clusters = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![start];
        let mut stack = vec![start];
        component[start] = id;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if component[j] == usize::MAX && co_occurrence[i][j] > threshold {
                    component[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    Ok(ConsensusClustering {
        co_occurrence,
        clusters,
        threshold,
        runs: total as usize,
    })
}
