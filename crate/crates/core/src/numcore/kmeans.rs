use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{squared_distance, Matrix, Rng, RngSeed};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Lloyd stops once no centroid moves farther than this.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            restarts: 10,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Matrix,
    pub assignment: Vec<usize>,
    /// Sum of squared distances from each row to its centroid.
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` runs.
pub fn kmeans(data: &Matrix, k: usize, seed: RngSeed, restarts: usize) -> Result<KMeansResult> {
    kmeans_with(
        data,
        k,
        seed,
        &KMeansConfig {
            restarts,
            ..KMeansConfig::default()
        },
    )
}

pub fn kmeans_with(
    data: &Matrix,
    k: usize,
    seed: RngSeed,
    cfg: &KMeansConfig,
) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::Parameter("k-means needs k >= 1".into()));
    }
    if k > data.rows() {
        return Err(Error::Parameter(format!(
            "k-means with k = {k} on {} rows",
            data.rows()
        )));
    }
    if cfg.restarts == 0 {
        return Err(Error::Parameter(
            "k-means needs at least one restart".into(),
        ));
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..cfg.restarts {
        let mut rng = seed.derive(r as u64).rng();
        let init = plus_plus_init(data, k, &mut rng);
        let run = lloyd(data, init, cfg);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus_init(data: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = data.rows();
    let mut centroids = Matrix::zeros(k, data.cols());
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut nearest: Vec<f64> = data
        .row_iter()
        .map(|r| squared_distance(r, data.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, r) in data.row_iter().enumerate() {
            let d = squared_distance(r, data.row(pick));
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
    }
    centroids
}

/// Nearest centroid per row (ties go to the lowest index) and total inertia.
fn assign(data: &Matrix, centroids: &Matrix, assignment: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, r) in data.row_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, centroid) in centroids.row_iter().enumerate() {
            let d = squared_distance(r, centroid);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignment[i] = best;
        inertia += best_d;
    }
    inertia
}

fn lloyd(data: &Matrix, mut centroids: Matrix, cfg: &KMeansConfig) -> KMeansResult {
    let k = centroids.rows();
    let dims = data.cols();
    let mut assignment = vec![0usize; data.rows()];
    let mut trace = Vec::new();
    for _ in 0..cfg.max_iterations {
        trace.push(assign(data, &centroids, &mut assignment));
        let mut sums = Matrix::zeros(k, dims);
        let mut counts = vec![0usize; k];
        for (r, &a) in data.row_iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(r) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            // an emptied cluster keeps its previous centroid
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|v| *v *= inv);
            shift = shift.max(squared_distance(sums.row(c), centroids.row(c)));
            centroids.row_mut(c).copy_from_slice(sums.row(c));
        }
        if libm::sqrt(shift) < cfg.tolerance {
            break;
        }
    }
    let inertia = assign(data, &centroids, &mut assignment);
    trace.push(inertia);
    KMeansResult {
        centroids,
        assignment,
        inertia,
        inertia_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = RngSeed(seed).rng();
        let mut m = Matrix::zeros(0, 2);
        let mut labels = Vec::new();
        for i in 0..60 {
            let label = i % 2;
            let off = if label == 0 { 0.0 } else { 10.0 };
            m.push_row(&[off + rng.normal(), rng.normal()]).unwrap();
            labels.push(label);
        }
        (m, labels)
    }

    #[test]
    fn single_cluster_is_mean() {
        let (m, _) = blobs(1);
        let r = kmeans(&m, 1, RngSeed(0), 3).unwrap();
        let mean = m.column_means();
        assert!(squared_distance(r.centroids.row(0), &mean) < 1e-20);
        let total: f64 = m.row_iter().map(|row| squared_distance(row, &mean)).sum();
        assert!((r.inertia - total).abs() < 1e-9 * total);
    }

    #[test]
    fn separates_two_blobs() {
        let (m, labels) = blobs(2);
        let r = kmeans(&m, 2, RngSeed(5), 10).unwrap();
        let flip = r.assignment[0] != labels[0];
        for (a, l) in r.assignment.iter().zip(&labels) {
            assert_eq!(*a, if flip { 1 - l } else { *l });
        }
    }

    #[test]
    fn k_equals_rows_has_zero_inertia() {
        let (m, _) = blobs(3);
        let m = m.select_rows(&(0..8).collect::<Vec<_>>());
        let r = kmeans(&m, 8, RngSeed(1), 2).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn deterministic_and_monotone() {
        let (m, _) = blobs(4);
        let a = kmeans(&m, 3, RngSeed(9), 4).unwrap();
        let b = kmeans(&m, 3, RngSeed(9), 4).unwrap();
        assert_eq!(a, b);
        assert!(a.inertia_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for (r, &c) in m.row_iter().zip(&a.assignment) {
            let d = squared_distance(r, a.centroids.row(c));
            for j in 0..3 {
                assert!(d <= squared_distance(r, a.centroids.row(j)));
            }
        }
    }

    #[test]
    fn parameter_errors() {
        let (m, _) = blobs(5);
        assert!(kmeans(&m, 0, RngSeed(0), 1).is_err());
        assert!(kmeans(&m, 61, RngSeed(0), 1).is_err());
    }
}
