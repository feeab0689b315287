//! Convex hull membership as a linear feasibility problem, solved with a
//! dense phase-one simplex.

use crate::{check_dims, AnalysisError, Result};

/// Feasibility tolerance for the simplex.
pub const HULL_TOLERANCE: f64 = 1e-9;

const MAX_PIVOTS: usize = 50_000;

/// True when `x` is a convex combination of `points` up to [`HULL_TOLERANCE`].
pub fn in_convex_hull(x: &[f64], points: &[Vec<f64>]) -> Result<bool> {
    if points.is_empty() {
        return Err(AnalysisError::Empty("in_convex_hull"));
    }
    check_dims(points, x.len())?;
    let d = x.len();
    let m = points.len();

    // Cheap rejection: outside the bounding box means outside the hull.
    for (j, &xj) in x.iter().enumerate() {
        let (lo, hi) = points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[j]), hi.max(p[j])));
        let slack = HULL_TOLERANCE * (1.0 + lo.abs().max(hi.abs()));
        if xj < lo - slack || xj > hi + slack {
            return Ok(false);
        }
    }

    // Rows: sum_i lambda_i p_i[j] = x[j] for each j, and sum_i lambda_i = 1.
    // Columns: m lambdas, then one artificial per row, then the rhs.
    let rows = d + 1;
    let cols = m + rows + 1;
    let rhs = cols - 1;
    let mut t = vec![vec![0.0; cols]; rows];
    for j in 0..d {
        for (i, p) in points.iter().enumerate() {
            t[j][i] = p[j];
        }
        t[j][rhs] = x[j];
    }
    for i in 0..m {
        t[d][i] = 1.0;
    }
    t[d][rhs] = 1.0;
    for (r, row) in t.iter_mut().enumerate() {
        let scale = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale > 0.0 {
            row.iter_mut().for_each(|v| *v /= scale);
        }
        if row[rhs] < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        row[m + r] = 1.0;
    }

    let mut basis: Vec<usize> = (m..m + rows).collect();
    // Reduced costs of the phase-one objective (sum of artificials).
    let mut cost = vec![0.0; cols];
    for row in &t {
        for c in 0..cols {
            if c < m || c == rhs {
                cost[c] -= row[c];
            }
        }
    }

    for _ in 0..MAX_PIVOTS {
        // Bland's rule: lowest-index improving column.
        let Some(enter) = (0..m + rows).find(|&c| cost[c] < -HULL_TOLERANCE && !basis.contains(&c)) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for (r, row) in t.iter().enumerate() {
            if row[enter] > HULL_TOLERANCE {
                let ratio = row[rhs] / row[enter];
                leave = match leave {
                    Some((lr, lratio)) if lratio < ratio || (lratio == ratio && basis[lr] < basis[r]) => Some((lr, lratio)),
                    _ => Some((r, ratio)),
                };
            }
        }
        let Some((pr, _)) = leave else {
            break;
        };
        let pivot = t[pr][enter];
        t[pr].iter_mut().for_each(|v| *v /= pivot);
        let prow = t[pr].clone();
        for (r, row) in t.iter_mut().enumerate() {
            if r != pr && row[enter] != 0.0 {
                let f = row[enter];
                row.iter_mut().zip(&prow).for_each(|(v, p)| *v -= f * p);
            }
        }
        let f = cost[enter];
        cost.iter_mut().zip(&prow).for_each(|(v, p)| *v -= f * p);
        basis[pr] = enter;
    }

    let infeasibility: f64 = basis
        .iter()
        .zip(&t)
        .filter(|(&b, _)| b >= m)
        .map(|(_, row)| row[rhs].max(0.0))
        .sum();
    Ok(infeasibility <= HULL_TOLERANCE)
}
