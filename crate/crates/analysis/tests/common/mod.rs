#![allow(dead_code)]

use designloop::trace::{Transcripts, TokenUsage};
use designloop::validation::{ValidationOutcome, ValidationStatus};
use designloop::{DesignRecord, Strategy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn record(iteration: u32, strategy: Strategy, artifact: Option<&str>, score: Option<f64>) -> DesignRecord {
    let validation = match (artifact, score) {
        (None, _) => ValidationOutcome::no_code("no code block"),
        (Some(_), Some(_)) => ValidationOutcome::valid(0),
        (Some(_), None) => ValidationOutcome::failed(ValidationStatus::Incorrect, 0, "mismatch".into()),
    };
    DesignRecord {
        iteration,
        strategy,
        instructions: format!("step {iteration}"),
        artifact: artifact.map(str::to_string),
        validation,
        metrics: Vec::new(),
        score,
        transcripts: Transcripts::default(),
        tokens: TokenUsage::default(),
        wall_clock: 1.0,
    }
}

pub fn with_tokens(mut r: DesignRecord, s_in: u64, s_out: u64, i_in: u64, i_out: u64) -> DesignRecord {
    r.tokens = TokenUsage {
        strategist_in: s_in,
        strategist_out: s_out,
        implementor_in: i_in,
        implementor_out: i_out,
        estimated: false,
        strategist_calls: 1,
        implementor_calls: 1,
    };
    r
}

/// Two Gaussian blobs in the plane, `per_blob` points each.
pub fn blobs(seed: u64, per_blob: usize, separation: f64, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for blob in 0..2 {
        for _ in 0..per_blob {
            points.push(vec![blob as f64 * separation + noise.sample(&mut rng), noise.sample(&mut rng)]);
            truth.push(blob);
        }
    }
    (points, truth)
}

// Exact planar geometry on integer coordinates.

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise hull without collinear points.
pub fn monotone_chain(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<(i64, i64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(i64, i64)>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn inside_hull_exact(x: (i64, i64), points: &[(i64, i64)]) -> bool {
    let hull = monotone_chain(points);
    match hull.len() {
        1 => hull[0] == x,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            cross(a, b, x) == 0 && x.0 >= a.0.min(b.0) && x.0 <= a.0.max(b.0) && x.1 >= a.1.min(b.1) && x.1 <= a.1.max(b.1)
        }
        n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], x) >= 0),
    }
}

/// Exact reference for the design-point classifier on integer points:
/// true means exploitation.
pub fn exploits_exact(x: (i64, i64), points: &[(i64, i64)]) -> bool {
    let l = points.iter().map(|p| p.0.abs().max(p.1.abs())).max().unwrap();
    let d2 = points.iter().map(|p| (p.0 - x.0).pow(2) + (p.1 - x.1).pow(2)).min().unwrap();
    100 * d2 <= l * l || inside_hull_exact(x, points)
}

// Reference GP-UCB acquisition via an explicit Gauss-Jordan inverse.

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

pub fn reference_ucb(observed: &[(Vec<f64>, f64)], candidates: &[Vec<f64>], xi: f64, length_scale: f64, jitter: f64) -> Vec<f64> {
    let n = observed.len();
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / (2.0 * length_scale * length_scale)).exp()
    };
    let ys: Vec<f64> = observed.iter().map(|o| o.1).collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let z: Vec<f64> = ys.iter().map(|y| (y - mean) / sd).collect();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| k(&observed[i].0, &observed[j].0) + if i == j { jitter } else { 0.0 }).collect())
        .collect();
    let inv = invert(gram);
    candidates
        .iter()
        .map(|c| {
            let ks: Vec<f64> = observed.iter().map(|o| k(&o.0, c)).collect();
            let mut mu = 0.0;
            let mut quad = 0.0;
            for i in 0..n {
                for j in 0..n {
                    mu += ks[i] * inv[i][j] * z[j];
                    quad += ks[i] * inv[i][j] * ks[j];
                }
            }
            mu + xi * (1.0 - quad).max(0.0).sqrt()
        })
        .collect()
}

pub fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
