use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::numcore::{squared_distance, Matrix, RngSeed};
use crate::synth::{blobs, low_rank_embedding};

fn uniform(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = RngSeed(seed).rng();
    Matrix::from_vec(n, d, (0..n * d).map(|_| rng.uniform()).collect()).unwrap()
}

fn direct_dispersion(data: &Matrix, labels: &[usize], k: usize) -> f64 {
    (0..k)
        .map(|c| {
            let members: Vec<&[f64]> = data
                .row_iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                return 0.0;
            }
            let pairs: f64 = members
                .iter()
                .flat_map(|a| members.iter().map(move |b| squared_distance(a, b)))
                .sum();
            pairs / (2.0 * members.len() as f64)
        })
        .sum()
}

fn grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| i as f64).collect()
}

#[test]
fn dispersion_hand_cases() {
    let same = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
    assert_eq!(dispersion(&same, &[0, 0, 1], 2).unwrap(), 0.0);
    let pair = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
    assert!((dispersion(&pair, &[0, 0], 1).unwrap() - 12.5).abs() < 1e-15);
    assert!(dispersion(&pair, &[0, 2], 2).is_err());
}

#[test]
fn dispersion_identity_matches_double_sum() {
    for (n, d, k, seed) in [(20, 2, 3, 1), (57, 5, 4, 2), (200, 8, 6, 3), (9, 3, 5, 4)] {
        let data = uniform(n, d, seed);
        let mut rng = RngSeed(seed + 100).rng();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let a = dispersion(&data, &labels, k).unwrap();
        let b = direct_dispersion(&data, &labels, k);
        assert!((a - b).abs() < 1e-10 * b.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn knee_of_clipped_line() {
    let x = grid(10);
    let y: Vec<f64> = x.iter().map(|&v| v.min(5.0)).collect();
    let c = Curve::new(x, y, CurveKind::Gap).unwrap();
    assert_eq!(bending_point(&c).x_star, Some(5.0));
}

#[test]
fn straight_line_has_no_knee() {
    let x = grid(10);
    let y: Vec<f64> = x.iter().map(|&v| 2.0 * v - 1.0).collect();
    let r = bending_point(&Curve::new(x, y, CurveKind::Gap).unwrap());
    assert_eq!(r.x_star, None);
    assert!(r.maxima.is_empty());
}

#[test]
fn concave_curve_knee_is_difference_argmax() {
    for f in [
        |v: f64| (1.0 + v).ln(),
        |v: f64| v.sqrt(),
        |v: f64| 1.0 - (-0.4 * v).exp(),
    ] {
        let x = grid(10);
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        let (lo, hi) = (y[0], y[9]);
        let argmax = (0..10)
            .max_by(|&a, &b| {
                let da = (y[a] - lo) / (hi - lo) - a as f64 / 9.0;
                let db = (y[b] - lo) / (hi - lo) - b as f64 / 9.0;
                da.total_cmp(&db)
            })
            .unwrap();
        let r = bending_point(&Curve::new(x.clone(), y, CurveKind::Gap).unwrap());
        assert_eq!(r.x_star, Some(x[argmax]));
    }
}

#[test]
fn knee_is_affine_invariant() {
    let x = grid(12);
    let y: Vec<f64> = x.iter().map(|&v| (v / 3.0).tanh()).collect();
    let base = bending_point(&Curve::new(x.clone(), y.clone(), CurveKind::Gap).unwrap());
    let idx = |r: &BendingPointResult, xs: &[f64]| xs.iter().position(|&v| Some(v) == r.x_star);
    let i0 = idx(&base, &x).unwrap();
    let xs: Vec<f64> = x.iter().map(|v| 0.5 * v + 7.0).collect();
    let ys: Vec<f64> = y.iter().map(|v| 40.0 * v - 3.0).collect();
    let moved = bending_point(&Curve::new(xs.clone(), ys, CurveKind::Gap).unwrap());
    assert_eq!(idx(&moved, &xs), Some(i0));
}

#[test]
fn smoothing_is_optional_and_shifts_sharp_knees() {
    let x = grid(10);
    let y: Vec<f64> = x.iter().map(|&v| v.min(3.0)).collect();
    let c = Curve::new(x, y, CurveKind::Variance).unwrap();
    assert_eq!(bending_point(&c).x_star, Some(3.0));
    let smoothed = bending_point_with(&c, &BendingConfig { smoothing: true });
    assert_eq!(smoothed.x_star, Some(4.0));
}

#[test]
fn curve_validation() {
    assert!(Curve::new(grid(2), vec![0.0, 1.0], CurveKind::Gap).is_err());
    assert!(Curve::new(vec![1.0, 1.0, 2.0], vec![0.0; 3], CurveKind::Gap).is_err());
    assert!(Curve::new(grid(3), vec![0.0; 4], CurveKind::Gap).is_err());
    assert!(Curve::new(grid(3), vec![0.0, f64::NAN, 1.0], CurveKind::Gap).is_err());
}

fn cfg(seed: u64) -> GapConfig {
    GapConfig {
        seed: RngSeed(seed),
        ..GapConfig::default()
    }
}

#[test]
fn gap_is_deterministic_and_consistent_with_curve() {
    let data = blobs(3, 30, 2, 10.0, RngSeed(2));
    let a = gap_statistic(&data, 3, &cfg(1)).unwrap();
    assert_eq!(a, gap_statistic(&data, 3, &cfg(1)).unwrap());
    let curve = gap_curve(&data, &cfg(1)).unwrap();
    assert_eq!(curve.curve.y[2], a);
    assert!(gap_statistic(&data, 11, &cfg(1)).is_err());
}

#[test]
fn identical_points_are_degenerate() {
    let data = Matrix::from_vec(12, 2, vec![1.5; 24]).unwrap();
    assert!(matches!(
        gap_statistic(&data, 1, &cfg(0)),
        Err(Error::DegenerateInput(_))
    ));
}

#[test]
fn four_blobs_gap_jumps_at_four() {
    for s in 0..20 {
        let data = blobs(4, 50, 2, 10.0, RngSeed(s));
        let g = gap_curve(&data, &cfg(s)).unwrap().curve.y;
        assert!(g[3] - g[2] > g[4] - g[3], "seed {s}: {g:?}");
    }
}

#[test]
fn select_k_recovers_planted_blobs() {
    for k in [3, 4, 5] {
        for s in 0..3 {
            let data = blobs(k, 50, 2, 10.0, RngSeed(10 * k as u64 + s));
            let sel = select_k(&data, &cfg(s)).unwrap();
            assert_eq!(sel.value, k);
            assert!(!sel.fallback);
        }
    }
}

#[test]
fn unstructured_data_falls_back_to_k_min() {
    for s in 0..5 {
        let single = blobs(1, 200, 2, 10.0, RngSeed(s));
        let sel = select_k(&single, &cfg(s)).unwrap();
        assert_eq!((sel.value, sel.fallback), (1, true));
        let sel = select_k(&uniform(200, 2, s), &cfg(s)).unwrap();
        assert_eq!((sel.value, sel.fallback), (1, true));
    }
}

#[test]
fn gap_config_validation() {
    let data = blobs(2, 10, 2, 10.0, RngSeed(0));
    let bad = GapConfig {
        k_min: 3,
        k_max: 3,
        ..GapConfig::default()
    };
    assert!(select_k(&data, &bad).is_err());
    let no_draws = GapConfig {
        reference_draws: 0,
        ..GapConfig::default()
    };
    assert!(select_k(&data, &no_draws).is_err());
    assert!(select_k(&blobs(1, 5, 2, 10.0, RngSeed(0)), &GapConfig::default()).is_err());
}

#[test]
fn variance_curve_shapes() {
    let iso = blobs(1, 5000, 4, 1.0, RngSeed(3));
    let c = variance_ratio_curve(&iso).unwrap();
    for (i, y) in c.y.iter().enumerate() {
        assert!((y - (i + 1) as f64 / 4.0).abs() < 0.05);
    }
    let mut rank1 = Matrix::zeros(30, 5);
    for i in 0..30 {
        for j in 0..5 {
            rank1[(i, j)] = (i as f64 - 7.0) * (j as f64 + 1.0);
        }
    }
    let c = variance_ratio_curve(&rank1).unwrap();
    assert!(c.y.iter().all(|y| (y - 1.0).abs() < 1e-9));
    assert!(variance_ratio_curve(&Matrix::from_vec(4, 2, vec![3.0; 8]).unwrap()).is_err());
}

#[test]
fn embedded_rank_three() {
    for s in 0..10 {
        let data = low_rank_embedding(400, 10, 3, 0.01, RngSeed(s));
        let c = variance_ratio_curve(&data).unwrap();
        assert!(c.y.windows(2).all(|w| w[1] >= w[0]));
        assert!((c.y[9] - 1.0).abs() < 1e-9);
        assert!(c.y[2] > 0.99);
        let sel = select_c(&data).unwrap();
        assert_eq!((sel.value, sel.fallback), (3, false), "seed {s}");
    }
}

#[test]
fn isotropic_data_uses_variance_fallback() {
    let iso = blobs(1, 4000, 6, 1.0, RngSeed(5));
    let sel = select_c(&iso).unwrap();
    let first = sel.curve.y.iter().position(|&v| v >= 0.95).unwrap() + 1;
    assert!(sel.fallback, "{:?}", sel.bending);
    assert_eq!(sel.value, first.min(5));
}
