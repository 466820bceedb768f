use alloc::vec::Vec;

use super::{eigendecompose_symmetric, Matrix};
use crate::error::{Error, Result};

/// Principal components of a data matrix (covariance with divisor `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One unit-length principal axis per row, by descending variance.
    pub components: Matrix,
    /// Variance along every axis of the full decomposition, descending.
    pub variances: Vec<f64>,
}

impl Pca {
    /// Keeps the leading `k` axes; `variances` always covers all of them.
    pub fn fit(data: &Matrix, k: usize) -> Result<Self> {
        if data.rows() < 2 {
            return Err(Error::DegenerateInput("PCA needs at least two rows"));
        }
        if k == 0 || k > data.cols() {
            return Err(Error::Parameter(alloc::format!(
                "PCA with {k} components on {} columns",
                data.cols()
            )));
        }
        let eig = eigendecompose_symmetric(&data.covariance())?;
        let d = data.cols();
        let mut components = Matrix::zeros(k, d);
        for i in 0..k {
            for j in 0..d {
                components[(i, j)] = eig.vectors[(j, i)];
            }
        }
        Ok(Pca {
            mean: data.column_means(),
            components,
            variances: eig.values.iter().map(|v| v.max(0.0)).collect(),
        })
    }

    pub fn dims(&self) -> usize {
        self.components.rows()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .row_iter()
            .map(|axis| {
                axis.iter()
                    .zip(x.iter().zip(&self.mean))
                    .map(|(a, (v, m))| a * (v - m))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (axis, s) in self.components.row_iter().zip(scores) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += s * a;
            }
        }
        out
    }

    pub fn transform(&self, data: &Matrix) -> Result<Matrix> {
        if data.cols() != self.mean.len() {
            return Err(Error::dim("PCA input", self.mean.len(), data.cols()));
        }
        let rows: Vec<Vec<f64>> = data.row_iter().map(|r| self.project(r)).collect();
        let mut out = Matrix::zeros(data.rows(), self.dims());
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(r);
        }
        Ok(out)
    }
}
