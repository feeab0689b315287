//! Gaussian-process UCB proposals over a seeded quasi-random candidate set.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{check_dims, sq_dist, AnalysisError, Result};

pub const CANDIDATES: usize = 4096;
pub const JITTER: f64 = 1e-6;
const BOUNDS_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(AnalysisError::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(AnalysisError::Undefined("lower bound above upper bound".into()));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Bounds {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// Bounding box of the points widened by 10% per side. Flat axes are
    /// padded by a tenth of the largest coordinate magnitude (or 1). With
    /// `non_negative`, lower bounds are clamped at zero.
    pub fn around(points: &[Vec<f64>], non_negative: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(AnalysisError::Empty("Bounds::around"));
        }
        let d = points[0].len();
        check_dims(points, d)?;
        let scale = points.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let flat_pad = if scale > 0.0 { 0.1 * scale } else { 1.0 };
        let mut lower = Vec::with_capacity(d);
        let mut upper = Vec::with_capacity(d);
        for j in 0..d {
            let lo = points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { BOUNDS_MARGIN * (hi - lo) } else { flat_pad };
            let l = lo - pad;
            lower.push(if non_negative { l.max(0.0) } else { l });
            upper.push(hi + pad);
        }
        Ok(Bounds { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && v <= u)
    }

    fn diagonal(&self) -> f64 {
        sq_dist(&self.lower, &self.upper).sqrt()
    }
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut n = 2u64;
    while out.len() < count {
        if out.iter().take_while(|&&p| p * p <= n).all(|&p| n % p != 0) {
            out.push(n);
        }
        n += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points with a seeded random shift (mod 1), mapped into `bounds`.
pub fn candidate_set(bounds: &Bounds, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    let bases = primes(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let u = (radical_inverse(i, bases[j]) + shift[j]).fract();
                    bounds.lower[j] + u * (bounds.upper[j] - bounds.lower[j])
                })
                .collect()
        })
        .collect()
}

/// Squared-exponential GP fitted to standardized observations.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    points: Vec<Vec<f64>>,
    length_scale: f64,
    chol: Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    /// Jitter finally used on the diagonal.
    pub jitter: f64,
}

pub fn median_pairwise_distance(points: &[Vec<f64>]) -> Option<f64> {
    let mut d: Vec<f64> = Vec::new();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d.push(sq_dist(a, b).sqrt());
        }
    }
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let m = if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) };
    (m > 0.0).then_some(m)
}

pub fn kernel(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * length_scale * length_scale)).exp()
}

/// Observations rescaled to zero mean and unit variance (unit spread when flat).
pub fn standardize(scores: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    scores.iter().map(|s| (s - mean) / sd).collect()
}

impl GaussianProcess {
    pub fn fit(points: &[Vec<f64>], scores: &[f64], bounds: &Bounds) -> Result<Self> {
        if points.is_empty() {
            return Err(AnalysisError::Empty("GaussianProcess::fit"));
        }
        if points.len() != scores.len() {
            return Err(AnalysisError::Dimension {
                expected: points.len(),
                got: scores.len(),
            });
        }
        check_dims(points, bounds.dim())?;
        let length_scale = median_pairwise_distance(points).unwrap_or_else(|| {
            let diag = bounds.diagonal();
            if diag > 0.0 {
                diag / 4.0
            } else {
                1.0
            }
        });
        let n = points.len();
        let y = DVector::from_vec(standardize(scores));
        let base = DMatrix::from_fn(n, n, |i, j| kernel(&points[i], &points[j], length_scale));
        let mut jitter = JITTER;
        let chol = loop {
            let k = &base + DMatrix::identity(n, n) * jitter;
            if let Some(c) = Cholesky::new(k) {
                break c;
            }
            if jitter > 1.0 {
                return Err(AnalysisError::Undefined("covariance matrix is not positive definite".into()));
            }
            jitter *= 10.0;
        };
        if jitter > JITTER {
            log::warn!("GP covariance degenerate; jitter raised to {jitter:e}");
        }
        let alpha = chol.solve(&y);
        Ok(GaussianProcess {
            points: points.to_vec(),
            length_scale,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn jitter_raised(&self) -> bool {
        self.jitter > JITTER
    }

    /// Posterior mean and standard deviation in standardized units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| kernel(p, x, self.length_scale)));
        let mean = ks.dot(&self.alpha);
        let v = self.chol.l().solve_lower_triangular(&ks).expect("cholesky factor is invertible");
        let var = (1.0 - v.dot(&v)).max(0.0);
        (mean, var.sqrt())
    }

    pub fn ucb(&self, x: &[f64], xi: f64) -> f64 {
        let (m, s) = self.predict(x);
        m + xi * s
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub candidate_index: usize,
    pub acquisition: f64,
    pub jitter_raised: bool,
}

/// Next sample point: the candidate maximizing mu + xi * sigma.
pub fn bo_propose(observed: &[(Vec<f64>, f64)], xi: f64, bounds: &Bounds, seed: u64) -> Result<Proposal> {
    let points: Vec<Vec<f64>> = observed.iter().map(|(p, _)| p.clone()).collect();
    let scores: Vec<f64> = observed.iter().map(|(_, s)| *s).collect();
    let gp = GaussianProcess::fit(&points, &scores, bounds)?;
    let candidates = candidate_set(bounds, CANDIDATES, seed);
    let values: Vec<f64> = candidates.iter().map(|c| gp.ucb(c, xi)).collect();
    let i = argmax(&values).expect("candidate set is non-empty");
    Ok(Proposal {
        point: candidates[i].clone(),
        candidate_index: i,
        acquisition: values[i],
        jitter_raised: gp.jitter_raised(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn radical_inverse_base_two() {
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(2, 2), 0.25);
        assert_eq!(radical_inverse(3, 2), 0.75);
        assert_eq!(radical_inverse(1, 3), 1.0 / 3.0);
        assert_eq!(primes(6), vec![2, 3, 5, 7, 11, 13]);
    }

    #[test]
    fn candidates_within_bounds_and_seeded() {
        let b = Bounds::new(vec![-1.0, 2.0, 0.0], vec![1.0, 3.0, 0.0]).unwrap();
        let a = candidate_set(&b, 500, 4);
        assert!(a.iter().all(|c| b.contains(c)));
        assert_eq!(a, candidate_set(&b, 500, 4));
        assert_ne!(a, candidate_set(&b, 500, 5));
    }

    #[test]
    fn bounds_around_points() {
        let b = Bounds::around(&[vec![0.0, 5.0], vec![10.0, 5.0]], true).unwrap();
        assert_eq!(b.lower, vec![0.0, 4.0]);
        assert_eq!(b.upper, vec![11.0, 6.0]);
        let free = Bounds::around(&[vec![0.0, 5.0], vec![10.0, 5.0]], false).unwrap();
        assert_eq!(free.lower[0], -1.0);
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn median_distance() {
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        // Pairwise: 1, 3, 2.
        assert_eq!(median_pairwise_distance(&pts), Some(2.0));
        assert_eq!(median_pairwise_distance(&pts[..1]), None);
    }

    #[test]
    fn gp_interpolates_observations() {
        let pts = vec![vec![0.0], vec![0.5], vec![1.0]];
        let y = [1.0, 3.0, 2.0];
        let gp = GaussianProcess::fit(&pts, &y, &Bounds::unit(1)).unwrap();
        let z = standardize(&y);
        for (p, zi) in pts.iter().zip(&z) {
            let (m, s) = gp.predict(p);
            assert!((m - zi).abs() < 1e-4, "{m} vs {zi}");
            assert!(s < 1e-2);
        }
        let (_, far) = gp.predict(&[40.0]);
        assert!((far - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_observations_raise_jitter_or_fit() {
        let pts = vec![vec![0.2, 0.2]; 3];
        let gp = GaussianProcess::fit(&pts, &[1.0, 1.0, 1.0], &Bounds::unit(2)).unwrap();
        let (m, _) = gp.predict(&[0.2, 0.2]);
        assert!(m.is_finite());
    }

    #[test]
    fn large_xi_moves_away_from_single_observation() {
        let obs = vec![(vec![0.5, 0.5], 1.0)];
        let p = bo_propose(&obs, 1e3, &Bounds::unit(2), 0).unwrap();
        let d = sq_dist(&p.point, &obs[0].0).sqrt();
        assert!(d > 0.3, "proposal {:?} too close", p.point);
    }

    #[test]
    fn argmax_ties_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    proptest! {
        #[test]
        fn proposal_inside_bounds(raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0), 1..8), xi in 0.0f64..100.0, seed in any::<u64>()) {
            let obs: Vec<(Vec<f64>, f64)> = raw.iter().map(|&(a, b, y)| (vec![a, b], y)).collect();
            let p = bo_propose(&obs, xi, &Bounds::unit(2), seed).unwrap();
            prop_assert!(Bounds::unit(2).contains(&p.point));
            prop_assert!(p.acquisition.is_finite());
        }
    }
}
