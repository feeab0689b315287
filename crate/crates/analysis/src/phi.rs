//! Exploration/exploitation labels for design points and strategist decisions.

use serde::Serialize;

use designloop::Strategy;

use crate::hull::in_convex_hull;
use crate::{check_dims, sq_dist, AnalysisError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Exploitation,
    Exploration,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Exploitation => "exploitation",
            Label::Exploration => "exploration",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Refine and combine exploit; innovate explores. Unavailable decisions
/// have no label.
pub fn classify_strategist(strategy: Strategy) -> Option<Label> {
    match strategy {
        Strategy::Refine | Strategy::Combine => Some(Label::Exploitation),
        Strategy::Innovate => Some(Label::Exploration),
        Strategy::NotAvailable => None,
    }
}

/// Largest infinity norm over the set.
pub fn scale_of(points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Smallest Euclidean distance from `x` to the set.
pub fn min_distance(x: &[f64], points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|p| sq_dist(x, p))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Exploitation when `x` lies within a tenth of the set's scale of some
/// point, or inside the convex hull of the set.
pub fn classify_phi(x: &[f64], points: &[Vec<f64>]) -> Result<Label> {
    if points.is_empty() {
        return Err(AnalysisError::Empty("classify_phi"));
    }
    check_dims(points, x.len())?;
    let l = scale_of(points);
    let d2 = points.iter().map(|p| sq_dist(x, p)).fold(f64::INFINITY, f64::min);
    // d <= 0.1 L, squared to stay exact on integer inputs.
    if 100.0 * d2 <= l * l || in_convex_hull(x, points)? {
        Ok(Label::Exploitation)
    } else {
        Ok(Label::Exploration)
    }
}
