//! Code-change and best-so-far convergence series.

use serde::Serialize;

use designloop::DesignRecord;

use crate::vectorize::Corpus;
use crate::{AnalysisError, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// ||v_t - v_prev|| / ||v_prev|| in the Euclidean norm.
pub fn relative_distance(v_t: &[f64], v_prev: &[f64]) -> Result<f64> {
    if v_t.len() != v_prev.len() {
        return Err(AnalysisError::Dimension {
            expected: v_prev.len(),
            got: v_t.len(),
        });
    }
    let denom = norm(v_prev);
    if denom == 0.0 {
        return Err(AnalysisError::Undefined("previous code vector has zero norm".into()));
    }
    let diff: Vec<f64> = v_t.iter().zip(v_prev).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / denom)
}

/// Best-so-far runtime relative to the overall best, as a percentage:
/// (2 - min_{i<=t} r_i / min_i r_i) * 100. Entries before the first
/// runtime are `None`; missing runtimes are skipped.
pub fn best_solution_curve(runtimes: &[Option<f64>]) -> Vec<Option<f64>> {
    let Some(best) = runtimes.iter().flatten().copied().reduce(f64::min) else {
        return vec![None; runtimes.len()];
    };
    let mut so_far: Option<f64> = None;
    runtimes
        .iter()
        .map(|r| {
            if let Some(r) = r {
                so_far = Some(so_far.map_or(*r, |s| s.min(*r)));
            }
            so_far.map(|s| if s == best { 100.0 } else { (2.0 * best - s) * 100.0 / best })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub iteration: u32,
    /// Relative code change from the previous code-producing iteration.
    pub relative_distance: Option<f64>,
    pub runtime: Option<f64>,
    pub best_solution: Option<f64>,
}

/// Per-iteration convergence metrics for a trace.
pub fn convergence_series(records: &[DesignRecord]) -> Result<Vec<ConvergencePoint>> {
    let corpus = if records.iter().any(|r| r.has_code()) {
        Some(Corpus::from_records(records)?)
    } else {
        None
    };
    let runtimes: Vec<Option<f64>> = records.iter().map(|r| r.runtime()).collect();
    let best = best_solution_curve(&runtimes);
    let mut prev: Option<&[f64]> = None;
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let vector = corpus
            .as_ref()
            .and_then(|c| c.by_iteration(r.iteration))
            .map(|v| v.values.as_slice());
        let distance = match (vector, prev) {
            (Some(v), Some(p)) => relative_distance(v, p).ok(),
            _ => None,
        };
        if vector.is_some() {
            prev = vector;
        }
        out.push(ConvergencePoint {
            iteration: r.iteration,
            relative_distance: distance,
            runtime: runtimes[i],
            best_solution: best[i],
        });
    }
    Ok(out)
}
