//! Dense square matrix multiplication in column-major double precision.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub n: usize,
    /// Column-major: element (i, j) is at `i + j * n`.
    pub data: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("dimension mismatch: {0} x {0} times {1} x {1}")]
    Dimension(usize, usize),
    #[error("expected {expected} elements for N = {n}, got {got}")]
    Length { n: usize, expected: usize, got: usize },
}

impl Matrix {
    pub fn from_col_major(n: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != n * n {
            return Err(MatrixError::Length {
                n,
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(Matrix { n, data })
    }

    /// Builds from row notation, e.g. `[[1, 2], [3, 4]]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                data[i + j * n] = v;
            }
        }
        Matrix { n, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i + i * n] = 1.0;
        }
        Matrix { n, data }
    }

    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        Matrix {
            n,
            data: (0..n * n).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i + j * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }
}

/// Reference product `C = A B`. For each output element the sum runs over
/// `k` in increasing order.
pub fn matmul_truth(a: &Matrix, b: &Matrix) -> Result<Matrix, MatrixError> {
    if a.n != b.n {
        return Err(MatrixError::Dimension(a.n, b.n));
    }
    let n = a.n;
    let mut c = vec![0.0; n * n];
    for j in 0..n {
        for k in 0..n {
            let bkj = b.data[k + j * n];
            let a_col = &a.data[k * n..(k + 1) * n];
            let c_col = &mut c[j * n..(j + 1) * n];
            for (ci, ai) in c_col.iter_mut().zip(a_col) {
                *ci += ai * bkj;
            }
        }
    }
    Ok(Matrix { n, data: c })
}

/// Candidate input: `N`, then A and B as single column-major rows.
pub fn input_rows(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    vec![vec![a.n as f64], a.data.clone(), b.data.clone()]
}

/// Expected output: C as one column-major row.
pub fn output_rows(c: &Matrix) -> Vec<Vec<f64>> {
    vec![c.data.clone()]
}
