//! Dense numeric building blocks shared by the rest of the crate.
//!
//! Everything here is a pure function of its inputs. Sums are accumulated in
//! a fixed order so results do not depend on how callers schedule work.

mod gradcheck;
mod kmeans;
mod linalg;
mod matrix;
mod pca;
mod rng;

pub use gradcheck::finite_difference_gradient;
pub use kmeans::{kmeans, kmeans_with, KMeansConfig, KMeansResult};
pub use linalg::{cholesky, eigendecompose_symmetric, CholeskyFactor, SymmetricEigen};
pub use matrix::Matrix;
pub use pca::Pca;
pub use rng::{Rng, RngSeed};

/// Squared Euclidean distance between two equally long slices.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(sum(exp(v)))` without overflow. Entries equal to `-inf` are ignored.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}
