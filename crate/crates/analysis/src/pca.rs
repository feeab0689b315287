//! Principal-component projection of code vectors.

use nalgebra::DMatrix;

use crate::{check_dims, AnalysisError, Result};

#[derive(Debug, Clone)]
pub struct Pca {
    mean: Vec<f64>,
    /// Rows are principal axes, strongest first.
    components: DMatrix<f64>,
}

impl Pca {
    /// Fits at most `dims` components (fewer if the data has lower rank).
    pub fn fit(points: &[Vec<f64>], dims: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(AnalysisError::Empty("Pca::fit"));
        }
        let d = points[0].len();
        check_dims(points, d)?;
        let n = points.len();
        let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
        let svd = centered.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let keep = dims.min(order.len()).max(1);
        let mut components = DMatrix::zeros(keep, d);
        for (r, &i) in order.iter().take(keep).enumerate() {
            let mut row = v_t.row(i).into_owned();
            // Fix the sign so the largest-magnitude loading is positive.
            let (imax, _) = row.iter().enumerate().fold((0, 0.0f64), |acc, (k, v)| if v.abs() > acc.1 { (k, v.abs()) } else { acc });
            if row[imax] < 0.0 {
                row.neg_mut();
            }
            components.set_row(r, &row);
        }
        Ok(Pca { mean, components })
    }

    pub fn dims(&self) -> usize {
        self.components.nrows()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.components.nrows())
            .map(|r| {
                self.components
                    .row(r)
                    .iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(c, (v, m))| c * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn project_all(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        points.iter().map(|p| self.project(p)).collect()
    }
}
