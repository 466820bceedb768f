use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::features::{FeatureConfig, FeatureMatrix};
use crate::numcore::{finite_difference_gradient, Matrix, RngSeed};

fn toy_batch(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = RngSeed(seed).rng();
    let mut m = Matrix::zeros(n, d);
    for i in 0..n {
        let shift = if i % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..d {
            m[(i, j)] = shift * (j as f64 + 1.0) * 0.3 + 0.5 * rng.normal();
        }
    }
    m
}

/// Inverse and log-determinant by Gauss–Jordan elimination with pivoting.
fn naive_inverse(a: &Matrix) -> (Matrix, f64) {
    let n = a.rows();
    let mut m = a.clone();
    let mut inv = Matrix::identity(n);
    let mut log_det = 0.0;
    for col in 0..n {
        let p = (col..n)
            .max_by(|&x, &y| m[(x, col)].abs().total_cmp(&m[(y, col)].abs()))
            .unwrap();
        for j in 0..n {
            let t = m[(col, j)];
            m[(col, j)] = m[(p, j)];
            m[(p, j)] = t;
            let t = inv[(col, j)];
            inv[(col, j)] = inv[(p, j)];
            inv[(p, j)] = t;
        }
        let piv = m[(col, col)];
        log_det += piv.abs().ln();
        for j in 0..n {
            m[(col, j)] /= piv;
            inv[(col, j)] /= piv;
        }
        for r in 0..n {
            if r != col {
                let f = m[(r, col)];
                for j in 0..n {
                    m[(r, j)] -= f * m[(col, j)];
                    inv[(r, j)] -= f * inv[(col, j)];
                }
            }
        }
    }
    (inv, log_det)
}

fn naive_energy(z: &[f64], gmm: &GmmParameters, jitter: f64) -> f64 {
    let d = z.len();
    let terms: Vec<f64> = (0..gmm.components())
        .map(|k| {
            let mut s = gmm.sigma[k].clone();
            for j in 0..d {
                s[(j, j)] += jitter;
            }
            let (inv, log_det) = naive_inverse(&s);
            let delta: Vec<f64> = z.iter().zip(&gmm.mu[k]).map(|(a, b)| a - b).collect();
            let mut q = 0.0;
            for a in 0..d {
                for b in 0..d {
                    q += delta[a] * inv[(a, b)] * delta[b];
                }
            }
            let log_norm = 0.5 * (d as f64 * (2.0 * core::f64::consts::PI).ln() + log_det);
            gmm.phi[k].ln() - 0.5 * q - log_norm
        })
        .collect();
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    -(m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln())
}

/// Direct transcription of the mixture statistics.
fn naive_gmm(z: &Matrix, gamma: &Matrix) -> GmmParameters {
    let (n, d, k) = (z.rows(), z.cols(), gamma.cols());
    let mut phi = vec![0.0; k];
    let mut mu = vec![vec![0.0; d]; k];
    let mut sigma = vec![Matrix::zeros(d, d); k];
    for c in 0..k {
        let s: f64 = (0..n).map(|i| gamma[(i, c)]).sum();
        phi[c] = s / n as f64;
        for i in 0..n {
            for j in 0..d {
                mu[c][j] += gamma[(i, c)] * z[(i, j)] / s;
            }
        }
        for i in 0..n {
            for a in 0..d {
                for b in 0..d {
                    sigma[c][(a, b)] +=
                        gamma[(i, c)] * (z[(i, a)] - mu[c][a]) * (z[(i, b)] - mu[c][b]) / s;
                }
            }
        }
    }
    GmmParameters { phi, mu, sigma }
}

#[test]
fn energy_matches_naive_density() {
    let gmm = GmmParameters {
        phi: vec![0.3, 0.7],
        mu: vec![vec![0.0, 1.0, -1.0], vec![2.0, 0.5, 0.0]],
        sigma: vec![
            Matrix::from_rows(&[
                vec![1.0, 0.2, 0.1],
                vec![0.2, 0.8, -0.1],
                vec![0.1, -0.1, 0.5],
            ])
            .unwrap(),
            Matrix::from_rows(&[
                vec![0.3, 0.0, 0.05],
                vec![0.0, 2.0, 0.4],
                vec![0.05, 0.4, 1.1],
            ])
            .unwrap(),
        ],
    };
    for z in [[0.0, 0.0, 0.0], [1.5, -2.0, 0.7], [10.0, 3.0, -4.0]] {
        let got = sample_energy(&z, &gmm, 1e-6).unwrap();
        let want = naive_energy(&z, &gmm, 1e-6);
        assert!(
            (got - want).abs() < 1e-9 * want.abs().max(1.0),
            "{got} vs {want}"
        );
    }
}

#[test]
fn one_hot_memberships_give_empirical_statistics() {
    let z = toy_batch(12, 3, 4);
    let mut gamma = Matrix::zeros(12, 2);
    for i in 0..12 {
        gamma[(i, if i < 5 { 0 } else { 1 })] = 1.0;
    }
    let est = estimate_gmm(&z, &gamma, None).unwrap().params;
    let groups = [(0..5).collect::<Vec<_>>(), (5..12).collect::<Vec<_>>()];
    for (k, idx) in groups.iter().enumerate() {
        let sub = z.select_rows(idx);
        assert!((est.phi[k] - idx.len() as f64 / 12.0).abs() < 1e-15);
        for (a, b) in est.mu[k].iter().zip(sub.column_means()) {
            assert!((a - b).abs() < 1e-12);
        }
        let cov = sub.covariance();
        assert!(est.sigma[k].sub(&cov).unwrap().frobenius_norm() < 1e-12);
    }
}

#[test]
fn soft_estimation_matches_naive() {
    let z = toy_batch(10, 3, 5);
    let mut rng = RngSeed(6).rng();
    let mut gamma = Matrix::zeros(10, 3);
    for i in 0..10 {
        let w: Vec<f64> = (0..3).map(|_| rng.uniform() + 0.1).collect();
        let s: f64 = w.iter().sum();
        for k in 0..3 {
            gamma[(i, k)] = w[k] / s;
        }
    }
    let got = estimate_gmm(&z, &gamma, None).unwrap().params;
    let want = naive_gmm(&z, &gamma);
    for k in 0..3 {
        assert!((got.phi[k] - want.phi[k]).abs() < 1e-12);
        assert!(got.sigma[k].sub(&want.sigma[k]).unwrap().frobenius_norm() < 1e-12);
    }
}

#[test]
fn objective_matches_naive_reimplementation() {
    let arch = NetworkArchitecture::standard(5, 2, 3).unwrap();
    let params = ModelParameters::init(&arch, RngSeed(11)).unwrap();
    let x = toy_batch(16, 5, 12);
    let cfg = TrainConfig::default();
    let terms = objective(&x, &params, &arch, &cfg).unwrap();

    let mut z = Matrix::zeros(16, 3);
    let mut gamma = Matrix::zeros(16, 3);
    let mut recon = 0.0;
    for i in 0..16 {
        let xi = x.row(i);
        let code = encode(xi, &params).unwrap();
        let xp = decode(&code, &params).unwrap();
        recon += xi
            .iter()
            .zip(&xp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        let norm_e = xi
            .iter()
            .zip(&xp)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm_x = xi.iter().map(|a| a * a).sum::<f64>().sqrt();
        let zi = [code[0], code[1], norm_e / (norm_x + 1e-12)];
        z.row_mut(i).copy_from_slice(&zi);
        let g = membership(&zi, &params, &arch, None).unwrap();
        gamma.row_mut(i).copy_from_slice(&g);
    }
    let gmm = naive_gmm(&z, &gamma);
    let energy: f64 = (0..16)
        .map(|i| naive_energy(z.row(i), &gmm, 1e-6))
        .sum::<f64>()
        / 16.0;
    let penalty: f64 = gmm
        .sigma
        .iter()
        .flat_map(|s| (0..3).map(move |j| 1.0 / (s[(j, j)] + 1e-6)))
        .sum();
    let total = recon / 16.0 + 0.1 * energy + 0.005 * penalty;
    assert!((terms.reconstruction - recon / 16.0).abs() < 1e-10);
    assert!((terms.energy - energy).abs() < 1e-8 * energy.abs().max(1.0));
    assert!((terms.penalty - penalty).abs() < 1e-8 * penalty);
    assert!((terms.total - total).abs() < 1e-8 * total.abs().max(1.0));
}

fn gradient_check(cfg: &TrainConfig) {
    let arch = NetworkArchitecture::standard(4, 1, 2).unwrap();
    let params = ModelParameters::init(&arch, RngSeed(21)).unwrap();
    let x = toy_batch(8, 4, 22);
    let (_, grad) = objective_gradient(&x, &params, &arch, cfg).unwrap();
    let analytic = grad.to_flat();
    let flat = params.to_flat();
    let mut probe = params.clone();
    let numeric = finite_difference_gradient(
        |w| {
            probe.set_flat(w).unwrap();
            objective(&x, &probe, &arch, cfg).unwrap().total
        },
        &flat,
        1e-5,
    )
    .unwrap();
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(1e-3 * scale))
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    gradient_check(&TrainConfig::default());
}

#[test]
fn analytic_gradient_with_heavy_density_weights() {
    gradient_check(&TrainConfig {
        lambda1: 1.0,
        lambda2: 0.1,
        ..TrainConfig::default()
    });
}

#[test]
fn reconstruction_only_gradient() {
    gradient_check(&TrainConfig::default().reconstruction_only());
}

fn fm(x: Matrix) -> FeatureMatrix {
    let cfg = FeatureConfig {
        input_dim: x.cols(),
        n_mels: x.cols(),
        ..FeatureConfig::default()
    };
    FeatureMatrix::new(x, cfg).standardize().unwrap()
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let features = fm(toy_batch(256, 6, 31));
    let arch = NetworkArchitecture::standard(6, 2, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: RngSeed(3),
        ..TrainConfig::default()
    };
    let a = train(&features, &arch, &cfg).unwrap();
    let b = train(&features, &arch, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.loss_trace.len(), 15);
    assert!(*a.loss_trace.last().unwrap() < a.initial_loss);
    let c = train(
        &features,
        &arch,
        &TrainConfig {
            seed: RngSeed(4),
            ..cfg
        },
    )
    .unwrap();
    assert_ne!(a.params, c.params);

    let energies = score(&a, &features).unwrap();
    let above = energies.iter().filter(|&&e| e > a.threshold).count();
    assert!(
        above <= 4,
        "{above} training rows above the 99th percentile"
    );
}

#[test]
fn zero_epochs_returns_initialized_model() {
    let features = fm(toy_batch(64, 4, 1));
    let arch = NetworkArchitecture::standard(4, 1, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        batch_size: 16,
        seed: RngSeed(9),
        ..TrainConfig::default()
    };
    let model = train(&features, &arch, &cfg).unwrap();
    assert_eq!(
        model.params,
        ModelParameters::init(&arch, RngSeed(9).derive(0)).unwrap()
    );
    assert!(model.loss_trace.is_empty());
}

#[test]
fn scoring_rejects_wrong_width_and_foreign_statistics() {
    let features = fm(toy_batch(64, 4, 1));
    let arch = NetworkArchitecture::standard(4, 1, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let model = train(&features, &arch, &cfg).unwrap();
    assert!(score(&model, &fm(toy_batch(8, 5, 2))).is_err());
    assert!(score(&model, &fm(toy_batch(64, 4, 77))).is_err());
    let raw = FeatureMatrix::new(features.frames.clone(), features.config);
    assert_eq!(score(&model, &raw).unwrap().len(), 64);
}

#[test]
fn threshold_percentiles() {
    let e: Vec<f64> = (1..=100).map(f64::from).collect();
    assert!((choose_threshold(&e, 99.0).unwrap() - 99.01).abs() < 1e-9);
    assert_eq!(choose_threshold(&e, 100.0).unwrap(), 100.0);
    assert_eq!(choose_threshold(&[3.0], 50.0).unwrap(), 3.0);
    assert!(choose_threshold(&e, 0.0).is_err());
    assert!(choose_threshold(&e, 100.5).is_err());
    assert!(choose_threshold(&[], 50.0).is_err());
}
